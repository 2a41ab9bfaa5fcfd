import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, override_settings

from .cli import SUBCOMMANDS, run
from .exceptions import (EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, ConfigurationError, InsufficientDataError,
                         PacketParseError, UnknownNodeError, exit_code_for)

CONFERENCE_TOML = """\
n_agents = 20
days = 1
rng_seed = 9
duration_exponent = 2.0
"""


def last_json_line(text):
    return json.loads(text.strip().splitlines()[-1])


class ExitCodeTests(SimpleTestCase):
    def test_mapping(self):
        self.assertEqual(exit_code_for(ConfigurationError('x')), EXIT_CONFIG)
        self.assertEqual(exit_code_for(PacketParseError('x', 3)), EXIT_DATA)
        self.assertEqual(exit_code_for(InsufficientDataError('x')), EXIT_DATA)
        self.assertEqual(exit_code_for(FileNotFoundError('x')), EXIT_IO)

    def test_parse_error_names_the_line(self):
        self.assertEqual(str(PacketParseError('bad station', 12)), 'line 12: bad station')

    def test_unknown_node_message_is_not_quoted(self):
        self.assertEqual(str(UnknownNodeError('beacon 7 is not a node')), 'beacon 7 is not a node')


class RunTests(SimpleTestCase):
    """``run`` returns the process exit code instead of exiting."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def run_quietly(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = run(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_every_subcommand_is_installed(self):
        for name in SUBCOMMANDS:
            code, out, _ = self.run_quietly(name, '--help')
            self.assertEqual(code, EXIT_OK)
            self.assertIn('--config', out)

    def test_unknown_subcommand(self):
        self.assertEqual(self.run_quietly('nosuch')[0], EXIT_CONFIG)

    def test_unknown_flag(self):
        code, _, err = self.run_quietly('contacts', '--bogus')
        self.assertEqual(code, EXIT_CONFIG)
        self.assertIn('--bogus', err)

    def test_bad_choice(self):
        self.assertEqual(self.run_quietly('stats', '--measure', 'nosuch')[0], EXIT_CONFIG)

    def test_missing_input_option(self):
        self.assertEqual(self.run_quietly('contacts')[0], EXIT_CONFIG)

    def test_missing_file(self):
        self.assertEqual(self.run_quietly('contacts', '--in', str(self.dir / 'missing.csv'))[0], EXIT_IO)

    def test_missing_config_file(self):
        code = self.run_quietly('contacts', '--in', 'x.csv', '--config', str(self.dir / 'missing.yaml'))[0]
        self.assertEqual(code, EXIT_IO)

    def test_malformed_packets(self):
        bad = self.dir / 'bad.csv'
        bad.write_text('t,station,src,seen1,seen2,seen3,seen4\n10,1,4500,abc,,,\n')
        code, _, err = self.run_quietly('contacts', '--in', str(bad))
        self.assertEqual(code, EXIT_DATA)
        self.assertIn('line 2', err)

    def test_undecodable_packets(self):
        bad = self.dir / 'bad.csv'
        bad.write_bytes(b't,station,src,seen1,seen2,seen3,seen4\n10,1,4500,,,,\n\xff\xfe,1,4500,,,,\n')
        code, _, err = self.run_quietly('contacts', '--in', str(bad))
        self.assertEqual(code, EXIT_DATA)
        self.assertIn('line 3', err)

    def test_corrupt_gzip_packets(self):
        bad = self.dir / 'bad.csv.gz'
        bad.write_bytes(b'plain text pretending to be gzip\n')
        self.assertEqual(self.run_quietly('contacts', '--in', str(bad))[0], EXIT_DATA)

    def test_malformed_config(self):
        conf = self.dir / 'conf.yaml'
        conf.write_text('threshold: [1, 2\n')
        self.assertEqual(self.run_quietly('contacts', '--in', 'x.csv', '--config', str(conf))[0], EXIT_CONFIG)

    def test_simulate_then_fit(self):
        conf, stream = self.dir / 'conf.toml', self.dir / 'day.csv'
        conf.write_text(CONFERENCE_TOML)
        code, out, _ = self.run_quietly('simulate', '--config', str(conf), '--out', str(stream))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(last_json_line(out)['seed'], 9)

        code, out, _ = self.run_quietly('contacts', '--in', str(stream), '--fit')
        self.assertEqual(code, EXIT_OK)
        summary = last_json_line(out)
        self.assertGreater(summary['events'], 0)
        self.assertEqual(summary['fit']['xmin'], 20.0)
        self.assertTrue(1.0 < summary['fit']['exponent'] < 4.0)


class ConfigResolutionTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        conf = cls.dir / 'conf.toml'
        conf.write_text(CONFERENCE_TOML)
        cls.stream = cls.dir / 'day.csv'
        call_command('simulate', '--config', str(conf), '--out', str(cls.stream), stdout=io.StringIO())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def write_config(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return str(path)

    def call(self, *args):
        out = io.StringIO()
        call_command(*args, stdout=out)
        return last_json_line(out.getvalue())

    def test_config_supplies_defaults(self):
        conf = self.write_config('threshold.yaml', 'threshold: 3\n')
        self.assertEqual(self.call('contacts', '--in', str(self.stream), '--config', conf)['threshold'], 3)

    def test_flags_win_over_config(self):
        conf = self.write_config('threshold2.yaml', 'threshold: 3\n')
        summary = self.call('contacts', '--in', str(self.stream), '--config', conf, '--threshold', '2')
        self.assertEqual(summary['threshold'], 2)

    def test_config_may_name_the_input(self):
        conf = self.write_config('input.toml', f'in = "{self.stream}"\nthreshold = 2\n')
        self.assertEqual(self.call('contacts', '--config', conf)['threshold'], 2)

    def test_config_values_are_checked(self):
        conf = self.write_config('measure.yaml', 'measure: nosuch\n')
        with self.assertRaises(CommandError) as ctx:
            call_command('stats', '--in', str(self.stream), '--config', conf, stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_unknown_scenario_key(self):
        conf = self.write_config('typo.yaml', 'n_agent: 10\n')
        with self.assertRaises(CommandError) as ctx:
            call_command('simulate', '--config', conf, '--out', str(self.dir / 'x.csv'), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    @override_settings(CONTACTNET_STRONG_THRESHOLD=4)
    def test_settings_provide_the_strong_threshold(self):
        self.assertEqual(self.call('contacts', '--in', str(self.stream), '--strong')['threshold'], 4)

    def test_strong_conflicts_with_threshold(self):
        with self.assertRaises(CommandError):
            call_command('contacts', '--in', str(self.stream), '--strong', '--threshold', '2', stdout=io.StringIO())

    def test_output_header_echoes_the_config(self):
        conf = self.write_config('header.yaml', 'threshold: 2\nnote: morning run\n')
        out = self.dir / 'events.csv'
        self.call('contacts', '--in', str(self.stream), '--config', conf, '--out', str(out))
        lines = out.read_text().splitlines()
        header = [line for line in lines if line.startswith('#')]
        self.assertEqual(header[0], '# command: contacts')
        self.assertIn('# threshold: 2', header)
        self.assertIn('# note: morning run', header)
        self.assertIn(f'# input: {self.stream}', header)
        self.assertFalse([line for line in header if line.startswith(('# stdout', '# stderr'))])

    def test_undecodable_config(self):
        conf = self.dir / 'latin.yaml'
        conf.write_bytes(b'note: caf\xe9\n')
        with self.assertRaises(CommandError) as ctx:
            call_command('contacts', '--in', str(self.stream), '--config', str(conf), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_undecodable_events_file(self):
        events = self.dir / 'latin-events.csv'
        events.write_bytes(b'# caf\xe9\n')
        with self.assertRaises(CommandError) as ctx:
            call_command('stats', '--events', str(events), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_DATA)

    def test_empty_day(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('contacts', '--in', str(self.stream), '--day', '3', stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_DATA)
