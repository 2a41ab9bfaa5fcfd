"""
Programmatic entry point: ``run(argv)`` behaves like ``manage.py`` but returns
the exit code instead of leaving the interpreter.
"""
import os
import sys

from django.core.management import ManagementUtility

from .exceptions import EXIT_DATA, EXIT_OK

SUBCOMMANDS = ('simulate', 'validate', 'contacts', 'stats', 'netstats', 'aggregate', 'spread', 'layout')


def run(argv=None):
    """Run one subcommand, e.g. ``run(['contacts', '--in', 'day.csv', '--fit'])``."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    argv = list(sys.argv[1:] if argv is None else argv)
    utility = ManagementUtility(['contactnet', *argv])
    try:
        utility.execute()
    except SystemExit as exc:
        if exc.code is None:
            return EXIT_OK
        return exc.code if isinstance(exc.code, int) else EXIT_DATA
    return EXIT_OK
