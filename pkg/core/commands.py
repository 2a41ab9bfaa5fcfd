"""
Base class for the pipeline management commands.

Every subcommand accepts ``--config FILE``: keys matching an option name
supply its default and explicit flags win. The resolved options are echoed
as ``# key: value`` lines at the head of each output file and in the JSON
summary printed as the last line on stdout.
"""
import json
import logging
import sys

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from beacons.ingest import FORMATS
from beacons.serializers import load_config_file
from .exceptions import EXIT_CONFIG, EXIT_DATA, ConfigurationError, ContactNetError, exit_code_for
from .pipeline import load_stream

logger = logging.getLogger(__name__)

# options every Django command carries, and call_command's output streams; never echoed
DJANGO_OPTIONS = {
    'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color',
    'skip_checks', 'version', 'stdout', 'stderr',
}


class PipelineParser(CommandParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(EXIT_CONFIG, f'{self.prog}: error: {message}\n')
        raise CommandError(f'Error: {message}\n{self.format_usage().strip()}', returncode=EXIT_CONFIG)


class PipelineCommand(BaseCommand):
    requires_system_checks = []
    # option dest -> value used when neither the flag nor the config file sets it
    defaults = {}

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = PipelineParser
        parser.add_argument('--config', help='YAML or TOML file providing option defaults')
        self._actions = {}
        for action in parser._actions:
            if action.dest in DJANGO_OPTIONS or action.dest == 'help':
                continue
            self._actions[action.dest] = action
            for opt in action.option_strings:
                if opt.startswith('--'):
                    self._actions[opt[2:].replace('-', '_')] = action
        return parser

    def _coerce(self, action, value):
        if action.nargs in ('+', '*') and not isinstance(value, list):
            value = [value]
        convert = action.type if callable(action.type) else None

        def one(v):
            if convert is not None and isinstance(v, str):
                try:
                    v = convert(v)
                except (TypeError, ValueError) as exc:
                    raise ConfigurationError(f'config key {action.dest}: {exc}') from None
            if action.choices is not None and v not in action.choices:
                raise ConfigurationError(
                    f'config key {action.dest}: {v!r} is not one of {sorted(action.choices)}')
            return v

        return [one(v) for v in value] if isinstance(value, list) else one(value)

    def resolve_options(self, options):
        """Merge flags, config file and class defaults; returns ``(options, extra config keys)``."""
        resolved = {k: v for k, v in options.items() if k not in DJANGO_OPTIONS}
        extra = {}
        if resolved.get('config'):
            for key, value in load_config_file(resolved['config']).items():
                action = self._actions.get(str(key).replace('-', '_'))
                if action is None:
                    extra[key] = value
                elif resolved.get(action.dest) is None:
                    resolved[action.dest] = self._coerce(action, value)
        for dest, value in self.defaults.items():
            if resolved.get(dest) is None:
                resolved[dest] = value() if callable(value) else value
        return resolved, extra

    def handle(self, *args, **options):
        try:
            self.options, self.extra_config = self.resolve_options(options)
            logger.debug('%s resolved options: %s', self.name, self.options)
            summary = self.run(**self.options)
        except ContactNetError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except UnicodeDecodeError as exc:
            raise CommandError(f'undecodable input: {exc}', returncode=EXIT_DATA) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=exit_code_for(exc)) from exc
        self.stdout.write(json.dumps(summary, sort_keys=True, default=str))

    def run(self, **options):
        raise NotImplementedError('subclasses of PipelineCommand must provide a run() method')

    @property
    def name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def header(self, **extra):
        """Resolved config as an ordered mapping, command first."""
        values = {'command': self.name, **{k: v for k, v in sorted(self.options.items())}, **extra}
        for key, value in sorted(self.extra_config.items()):
            values.setdefault(key, value)
        return values

    def header_lines(self, **extra):
        return [f'{key}: {_render(value)}' for key, value in self.header(**extra).items()]

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def notice(self, message):
        self.stdout.write(self.style.NOTICE(message))

    def warning(self, message):
        self.stdout.write(self.style.WARNING(message))


def _render(value):
    if value is None:
        return 'none'
    if isinstance(value, (list, tuple)):
        return ' '.join(_render(v) for v in value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True, default=str)
    return str(value)


class StreamCommand(PipelineCommand):
    """A command that reads a packet file (``--in``)."""

    stream_defaults = {
        'bin_width': lambda: settings.CONTACTNET_BIN_WIDTH,
    }

    def add_stream_arguments(self, parser):
        parser.add_argument('--in', dest='input', help='Packet file (.csv or .jsonl, optionally .gz)')
        parser.add_argument('--format', choices=FORMATS, help='Packet format (default: from the file name)')
        parser.add_argument('--drop-beacons', help='Beacons to remove: a file of ids or count:seed')
        parser.add_argument('--day', type=int, help='Restrict the analysis to one day (0-based)')
        parser.add_argument('--bin-width', type=float, help='Analysis window in seconds')

    def resolve_options(self, options):
        resolved, extra = super().resolve_options(options)
        for dest, value in self.stream_defaults.items():
            if resolved.get(dest) is None:
                resolved[dest] = value()
        return resolved, extra

    def load_input(self, known_stations=None):
        opts = self.options
        if not opts.get('input'):
            raise ConfigurationError('an input packet file is required (--in)')
        stream = load_stream(opts['input'], opts.get('format'), opts.get('drop_beacons'),
                             opts.get('day'), opts['bin_width'], known_stations)
        for message in stream.warnings:
            self.warning(message)
        return stream
