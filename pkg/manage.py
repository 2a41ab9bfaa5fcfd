#!/usr/bin/env python
"""Contact-network pipeline: ``./manage.py <subcommand> [options]``.

Subcommands: simulate, validate, contacts, stats, netstats, aggregate,
spread and layout, plus Django's own ``test``. Exit codes: 0 success,
1 configuration error, 2 data error, 3 I/O error.
"""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    try:
        from core.cli import run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable?"
        ) from exc
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
