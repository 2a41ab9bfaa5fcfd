import gzip
import io
import json
import tempfile
from collections import Counter
from itertools import permutations
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from contacts.powerlaw import fit_power_law
from core.exceptions import (ConfigurationError, OutOfRangeError, PacketParseError, ProtocolViolation,
                             SelfContactError)
from .grid import PairKey, TimeGrid, bin_of, pair_key
from .ingest import (day_window, detect_format, drop_beacons, parse_packet_line, read_packets, select_beacons,
                     serialize_packet, slice_stream, validate_stream, write_packets, read_labels)
from .packets import PacketRecord
from .serializers import load_config_file, scenario_from_mapping
from .simulation import (DEFAULT_SCHEDULE, OVERNIGHT, ScenarioConfig, ScenarioGenerator, agent_labels,
                         generate_scenario, room_quotas, sample_contact_duration, schedule_phase)


def small_scenario(**overrides):
    values = {'n_agents': 12, 'days': 1, 'rng_seed': 3}
    values.update(overrides)
    return ScenarioConfig(**values)


class TimeGridTests(SimpleTestCase):
    def test_bin_boundaries(self):
        grid = TimeGrid(0.0, 20.0)
        self.assertEqual(bin_of(0.0, grid), 0)
        self.assertEqual(bin_of(19.99, grid), 0)
        self.assertEqual(bin_of(20.0, grid), 1)

    def test_bin_of_grid_points_is_exact(self):
        grid = TimeGrid(100.0, 20.0)
        for k in range(0, 5000, 37):
            self.assertEqual(grid.bin_of(100.0 + k * 20.0), k)

    def test_bin_of_grid_points_with_inexact_widths(self):
        for origin, width in ((12.7, 20.0), (0.0, 0.1), (0.0, 7.3), (3.3, 0.7)):
            grid = TimeGrid(origin, width)
            for k in range(200):
                self.assertEqual(grid.bin_of(grid.bin_start(k)), k, (origin, width, k))
                self.assertEqual(grid.bin_of(grid.bin_end(k)), k + 1, (origin, width, k))

    def test_bin_of_is_monotone(self):
        grid = TimeGrid(0.0, 20.0)
        times = np.sort(np.random.default_rng(1).uniform(0, 10_000, 2000))
        bins = [grid.bin_of(t) for t in times]
        self.assertEqual(bins, sorted(bins))

    def test_time_before_origin_is_out_of_range(self):
        with self.assertRaises(OutOfRangeError):
            TimeGrid(40.0, 20.0).bin_of(39.9)

    def test_non_positive_width_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            TimeGrid(0.0, 0.0)

    def test_for_stream_rounds_origin_down(self):
        grid = TimeGrid.for_stream(32405.7, 20.0)
        self.assertEqual(grid.origin, 32400.0)
        self.assertEqual(grid.bin_of(32405.7), 0)

    def test_bins_in(self):
        grid = TimeGrid(0.0, 20.0)
        self.assertEqual(list(grid.bins_in(0.0, 60.0)), [0, 1, 2])
        self.assertEqual(list(grid.bins_in(10.0, 61.0)), [1, 2, 3])
        self.assertEqual(list(grid.bins_in(60.0, 60.0)), [])


class PairKeyTests(SimpleTestCase):
    def test_ordering(self):
        self.assertEqual(pair_key(5, 3), PairKey(3, 5))
        self.assertEqual(pair_key(3, 5), PairKey(3, 5))

    def test_symmetry(self):
        for a, b in permutations(range(6), 2):
            self.assertEqual(pair_key(a, b), pair_key(b, a))

    def test_self_pair_forbidden(self):
        with self.assertRaises(SelfContactError):
            pair_key(7, 7)


class PacketRecordTests(SimpleTestCase):
    def test_seen_is_capped_at_four(self):
        with self.assertRaises(ProtocolViolation):
            PacketRecord(1.0, 1, 10, (1, 2, 3, 4, 5))

    def test_source_cannot_see_itself(self):
        with self.assertRaises(ProtocolViolation):
            PacketRecord(1.0, 1, 10, (10,))

    def test_duplicates_in_seen(self):
        with self.assertRaises(ProtocolViolation):
            PacketRecord(1.0, 1, 10, (11, 11))

    def test_sighting(self):
        record = PacketRecord(1.0, 1, 10)
        self.assertFalse(record.is_contact)
        self.assertEqual(record.beacons(), (10,))


class ParsePacketLineTests(SimpleTestCase):
    def test_csv_contact(self):
        record = parse_packet_line('12.500,1,4532,4510')
        self.assertEqual(record, PacketRecord(12.5, 1, 4532, (4510,)))

    def test_csv_sighting(self):
        record = parse_packet_line('12.5,1,4532,')
        self.assertEqual(record.seen, ())

    def test_csv_five_seen_is_a_protocol_violation(self):
        with self.assertRaises(ProtocolViolation):
            parse_packet_line('12.5,1,4532,1,2,3,4,5')

    def test_csv_src_in_seen(self):
        with self.assertRaises(ProtocolViolation) as cm:
            parse_packet_line('12.5,1,4532,4532', line_no=7)
        self.assertIn('line 7', str(cm.exception))

    def test_malformed_field_reports_line(self):
        with self.assertRaises(PacketParseError) as cm:
            parse_packet_line('noon,1,4532', line_no=3)
        self.assertEqual(cm.exception.line_no, 3)

    def test_jsonl(self):
        record = parse_packet_line('{"t": 3.25, "station": 2, "src": 9, "seen": [4, 5]}', 'jsonl')
        self.assertEqual(record, PacketRecord(3.25, 2, 9, (4, 5)))

    def test_jsonl_rejects_non_integer_ids(self):
        with self.assertRaises(PacketParseError):
            parse_packet_line('{"t": 3.25, "station": "2", "src": 9}', 'jsonl')

    def test_unknown_format(self):
        with self.assertRaises(ConfigurationError):
            parse_packet_line('1,1,1', 'xml')

    def test_serialize_inverts_parse(self):
        records = [PacketRecord(0.0, 1, 2), PacketRecord(12.345, 3, 4, (5, 6, 7, 8))]
        for fmt in ('csv', 'jsonl'):
            for record in records:
                self.assertEqual(parse_packet_line(serialize_packet(record, fmt), fmt), record)


class PacketFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.records = [PacketRecord(1.0, 1, 10, (11,)), PacketRecord(2.5, 2, 11), PacketRecord(21.0, 1, 12, (10, 11))]

    def tearDown(self):
        self.tmp.cleanup()

    def test_detect_format(self):
        self.assertEqual(detect_format('day.csv'), 'csv')
        self.assertEqual(detect_format('day.jsonl.gz'), 'jsonl')
        self.assertEqual(detect_format('day'), 'csv')

    def test_write_and_read_with_header(self):
        path = self.dir / 'day.csv'
        write_packets(self.records, path, header_lines=['command: test', 'seed: 1'])
        text = path.read_text()
        self.assertTrue(text.startswith('# command: test\n# seed: 1\nt,station,src,seen1,seen2,seen3,seen4\n'))
        self.assertEqual(read_packets(path), self.records)

    def test_gzip_jsonl(self):
        path = self.dir / 'day.jsonl.gz'
        write_packets(self.records, path)
        with gzip.open(path, 'rt') as handle:
            self.assertEqual(json.loads(handle.readline())['src'], 10)
        self.assertEqual(read_packets(path), self.records)

    def test_bad_line_number_counts_comments(self):
        path = self.dir / 'bad.csv'
        path.write_text('# header\nt,station,src,seen1,seen2,seen3,seen4\n1.0,1,10,\n2.0,x,10,\n')
        with self.assertRaises(PacketParseError) as cm:
            read_packets(path)
        self.assertEqual(cm.exception.line_no, 4)

    def test_undecodable_bytes_name_the_line(self):
        path = self.dir / 'latin.csv'
        path.write_bytes(b't,station,src,seen1,seen2,seen3,seen4\n1.0,1,10,,,,\n\xff\xfe,1,10,,,,\n')
        with self.assertRaises(PacketParseError) as cm:
            read_packets(path)
        self.assertEqual(cm.exception.line_no, 3)

    def test_corrupt_gzip_is_a_data_error(self):
        path = self.dir / 'day.csv.gz'
        path.write_bytes(b'this is not gzip data\n')
        with self.assertRaises(PacketParseError):
            read_packets(path)

    def test_truncated_gzip_is_a_data_error(self):
        path = self.dir / 'day.csv.gz'
        write_packets(self.records * 50, path)
        path.write_bytes(path.read_bytes()[:-12])
        with self.assertRaises(PacketParseError):
            read_packets(path)


class ValidateStreamTests(SimpleTestCase):
    def test_empty(self):
        result = validate_stream([])
        self.assertEqual(result.meta.n_records, 0)
        self.assertEqual(result.warnings, [])

    def test_duplicates_are_dropped_with_one_warning(self):
        record = PacketRecord(1.0, 1, 10, (11,))
        with self.assertLogs('beacons.ingest', level='WARNING'):
            result = validate_stream([record, record])
        self.assertEqual(result.meta.n_records, 1)
        self.assertEqual(len(result.warnings), 1)

    def test_shuffled_input_is_sorted(self):
        records = [PacketRecord(float(t), 1, 10) for t in (5, 1, 3, 2)]
        with self.assertLogs('beacons.ingest', level='WARNING'):
            result = validate_stream(records)
        self.assertEqual([r.t for r in result.records], [1.0, 2.0, 3.0, 5.0])
        self.assertEqual(len(result.warnings), 1)

    def test_order_is_time_station_source(self):
        records = [PacketRecord(1.0, 2, 5), PacketRecord(1.0, 1, 9), PacketRecord(1.0, 1, 4)]
        with self.assertLogs('beacons.ingest', level='WARNING'):
            result = validate_stream(records)
        self.assertEqual([(r.station, r.src) for r in result.records], [(1, 4), (1, 9), (2, 5)])

    def test_meta(self):
        records = [PacketRecord(1.0, 1, 10, (11,)), PacketRecord(4.0, 2, 12)]
        meta = validate_stream(records).meta
        self.assertEqual((meta.t_min, meta.t_max), (1.0, 4.0))
        self.assertEqual(meta.beacons, {10, 11, 12})
        self.assertEqual(meta.n_contact_records, 1)

    def test_unknown_station_warns(self):
        with self.assertLogs('beacons.ingest', level='WARNING'):
            result = validate_stream([PacketRecord(1.0, 9, 10)], known_stations=[1, 2])
        self.assertEqual(result.warnings, ['unknown station 9'])


class DropBeaconsTests(SimpleTestCase):
    records = [
        PacketRecord(1.0, 1, 1, (2, 3)),
        PacketRecord(2.0, 1, 2, (1,)),
        PacketRecord(3.0, 1, 3, (4,)),
        PacketRecord(4.0, 1, 4),
    ]

    def test_empty_set_is_identity(self):
        self.assertEqual(drop_beacons(self.records, set()), self.records)

    def test_all_beacons_leaves_no_contacts(self):
        self.assertEqual(drop_beacons(self.records, {1, 2, 3, 4}), [])

    def test_seen_lists_are_cleaned_and_sightings_kept(self):
        kept = drop_beacons(self.records, {2, 4})
        self.assertEqual(kept, [PacketRecord(1.0, 1, 1, (3,)), PacketRecord(3.0, 1, 3)])

    def test_composition(self):
        self.assertEqual(drop_beacons(drop_beacons(self.records, {1}), {3}),
                         drop_beacons(self.records, {1, 3}))

    def test_select_count_and_seed(self):
        beacons = set(range(4500, 4550))
        picked = select_beacons('20:4', beacons)
        self.assertEqual(len(picked), 20)
        self.assertTrue(picked <= beacons)
        self.assertEqual(picked, select_beacons('20:4', beacons))

    def test_select_from_file(self):
        with tempfile.NamedTemporaryFile('w', suffix='.txt', delete=False) as handle:
            handle.write('# dead batteries\n4501\n4507\n')
        self.assertEqual(select_beacons(handle.name, set()), {4501, 4507})
        Path(handle.name).unlink()

    def test_select_too_many(self):
        with self.assertRaises(ConfigurationError):
            select_beacons('5:0', {1, 2})

    def test_day_slicing(self):
        records = [PacketRecord(t, 1, 1) for t in (10.0, 86399.0, 86400.0, 90000.0)]
        self.assertEqual([r.t for r in slice_stream(records, *day_window(1))], [86400.0, 90000.0])


class ScheduleTests(SimpleTestCase):
    def setUp(self):
        self.config = ScenarioConfig(days=2)

    def test_session_and_break_lookup(self):
        start, end, kind = DEFAULT_SCHEDULE[0]
        self.assertEqual(schedule_phase(start + 1, self.config).kind, 'session')
        start, end, kind = DEFAULT_SCHEDULE[1]
        self.assertEqual(schedule_phase(start, self.config).kind, 'break')

    def test_between_days_is_overnight(self):
        phase = schedule_phase(86400.0 + 3600.0, self.config)
        self.assertEqual(phase.kind, OVERNIGHT)
        self.assertFalse(phase.emits)

    def test_second_day(self):
        start, _, _ = DEFAULT_SCHEDULE[3]
        phase = schedule_phase(86400.0 + start, self.config)
        self.assertEqual((phase.kind, phase.day), ('lunch', 1))

    def test_room_quotas_fill_exactly(self):
        quotas = room_quotas(50, [(1, 0.94), (2, 0.02), (4, 0.04)])
        self.assertEqual(sum(quotas.values()), 50)
        self.assertEqual(quotas[1], 47)


class ContactDurationTests(SimpleTestCase):
    def test_degenerate_support(self):
        rng = np.random.default_rng(0)
        self.assertEqual({sample_contact_duration(rng, 2.0, 3, 3) for _ in range(20)}, {3})

    def test_invalid_bounds(self):
        with self.assertRaises(ConfigurationError):
            sample_contact_duration(np.random.default_rng(0), 2.0, 5, 4)

    def test_fitted_exponent(self):
        from contacts.powerlaw import DiscretePowerLaw
        draws = DiscretePowerLaw(2.0, 1, 10 ** 4).rvs(np.random.default_rng(11), 10 ** 5)
        self.assertTrue(1.95 <= fit_power_law(draws).exponent <= 2.05)

    def test_one_to_two_ratio(self):
        rng = np.random.default_rng(5)
        draws = [sample_contact_duration(rng, 2.0, 1, 100) for _ in range(20_000)]
        counts = Counter(draws)
        ratio = counts[1] / counts[2]
        # delta-method standard error of the ratio of two multinomial counts
        se = ratio * np.sqrt(1 / counts[1] + 1 / counts[2])
        self.assertLess(abs(ratio - 4.0), 3 * se)


class ScenarioConfigTests(SimpleTestCase):
    def test_defaults_validate(self):
        config = ScenarioConfig()
        self.assertEqual(config.n_agents, 50)
        self.assertEqual(len(config.beacon_ids()), 50)

    def test_exponent_must_exceed_one(self):
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(duration_exponent=1.0)

    def test_group_weights_sum_to_one(self):
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(group_size_weights=(0.5, 0.3, 0.1))

    def test_overlapping_phases(self):
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(schedule=((0, 100, 'session'), (50, 200, 'break')))

    def test_session_must_fill_one_room(self):
        occupancy = {'session': {'conference': 0.5, 'bar': 0.5},
                     'break': {'bar': 1.0}, 'lunch': {'cafeteria': 1.0}}
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(occupancy=occupancy)

    def test_mapping_with_clock_times(self):
        config = scenario_from_mapping({
            'n_agents': 10,
            'days': 1,
            'schedule': [
                {'start': '09:00', 'end': '10:00', 'kind': 'session'},
                {'start': '10:00', 'end': '10:30', 'kind': 'break'},
            ],
            'contact_start_prob': {'break': 0.1},
        })
        self.assertEqual(config.schedule, ((32400.0, 36000.0, 'session'), (36000.0, 37800.0, 'break')))
        self.assertEqual(config.contact_start_prob['break'], 0.1)
        self.assertEqual(config.contact_start_prob['session'], 0.004)

    def test_mapping_errors_name_the_field(self):
        with self.assertRaises(ConfigurationError) as cm:
            scenario_from_mapping({'packet_loss_prob': 2})
        self.assertIn('packet_loss_prob', str(cm.exception))

    def test_config_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            yaml_path = Path(tmp) / 'conf.yaml'
            yaml_path.write_text('n_agents: 20\nrng_seed: 9\n')
            toml_path = Path(tmp) / 'conf.toml'
            toml_path.write_text('n_agents = 20\nrng_seed = 9\n')
            self.assertEqual(load_config_file(yaml_path), load_config_file(toml_path))
            broken = Path(tmp) / 'broken.yaml'
            broken.write_text('n_agents: [\n')
            with self.assertRaises(ConfigurationError):
                load_config_file(broken)


class GenerateScenarioTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = small_scenario()
        cls.records = list(generate_scenario(cls.config))

    def test_no_agents_no_packets(self):
        self.assertEqual(list(generate_scenario(small_scenario(n_agents=0))), [])

    def test_deterministic(self):
        self.assertEqual(list(generate_scenario(small_scenario())), self.records)

    def test_seed_changes_stream(self):
        self.assertNotEqual(list(generate_scenario(small_scenario(rng_seed=4))), self.records)

    def test_time_ordered_and_within_phases(self):
        times = [r.t for r in self.records]
        self.assertEqual(times, sorted(times))
        phases = self.config.phases()
        for record in self.records[::50]:
            self.assertNotEqual(schedule_phase(record.t, self.config, phases).kind, OVERNIGHT)

    def test_contact_pairs_share_a_room(self):
        grid = self.config.grid
        room_of = {}
        for record in self.records:
            if not record.seen:
                room_of[(grid.bin_of(record.t), record.src)] = record.station
        for record in self.records:
            if record.seen:
                k = grid.bin_of(record.t)
                for beacon in (record.src, *record.seen):
                    if (k, beacon) in room_of:
                        self.assertEqual(room_of[(k, beacon)], record.station)

    def test_seen_is_capped(self):
        self.assertTrue(all(len(r.seen) <= 4 for r in self.records))
        self.assertTrue(any(r.seen for r in self.records))
        self.assertTrue(any(not r.seen for r in self.records))

    def test_sessions_keep_most_agents_in_the_conference_room(self):
        config = small_scenario(n_agents=50)
        generator = ScenarioGenerator(config)
        session = next(p for p in config.phases() if p.kind == 'session')
        room_of = generator._assign_rooms(session)
        share = sum(1 for s in room_of.values() if s == config.station_of('conference')) / 50
        self.assertGreaterEqual(share, 0.9)

    def test_labels(self):
        labels = agent_labels(self.config)
        self.assertEqual(sorted(labels), self.config.beacon_ids())
        self.assertEqual(labels, agent_labels(self.config))
        self.assertTrue(all(set(v) == {'country', 'role'} for v in labels.values()))


class SimulateCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.conf = self.dir / 'conf.yaml'
        self.conf.write_text('n_agents: 10\ndays: 1\nrng_seed: 5\n')

    def tearDown(self):
        self.tmp.cleanup()

    def simulate(self, *args):
        out = io.StringIO()
        call_command('simulate', '--config', str(self.conf), *args, stdout=out)
        return json.loads(out.getvalue().strip().splitlines()[-1])

    def test_writes_header_and_stream(self):
        path = self.dir / 'day.csv'
        summary = self.simulate('--out', str(path))
        text = path.read_text()
        self.assertTrue(text.startswith('# command: simulate\n'))
        self.assertIn('# seed: 5\n', text)
        self.assertEqual(summary['records'], len(read_packets(path)))
        self.assertEqual(summary['seed'], 5)

    def test_bit_identical_reruns(self):
        path = self.dir / 'day.csv'
        self.simulate('--out', str(path))
        first = path.read_bytes()
        self.simulate('--out', str(path))
        self.assertEqual(path.read_bytes(), first)

    def test_flag_beats_config(self):
        summary = self.simulate('--out', str(self.dir / 'x.jsonl'), '--seed', '8', '--agents', '6')
        self.assertEqual((summary['seed'], summary['beacons']), (8, 6))

    def test_labels_file(self):
        labels = self.dir / 'labels.csv'
        self.simulate('--out', str(self.dir / 'day.csv'), '--labels', str(labels))
        self.assertEqual(len(read_labels(labels)), 10)

    def test_unknown_config_key(self):
        self.conf.write_text('n_agent: 10\n')
        with self.assertRaises(CommandError) as cm:
            self.simulate('--out', str(self.dir / 'day.csv'))
        self.assertEqual(cm.exception.returncode, 1)

    def test_missing_out(self):
        with self.assertRaises(CommandError) as cm:
            self.simulate()
        self.assertEqual(cm.exception.returncode, 1)


class ValidateCommandTests(SimpleTestCase):
    def test_summary_and_cleaned_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / 'raw.csv'
            source.write_text('t,station,src,seen1,seen2,seen3,seen4\n'
                              '5.0,1,10,11,,,\n1.0,1,10,,,,\n1.0,1,10,,,,\n')
            cleaned = Path(tmp) / 'clean.jsonl'
            out = io.StringIO()
            call_command('validate', '--in', str(source), '--out', str(cleaned), '--stations', '1', stdout=out)
            summary = json.loads(out.getvalue().strip().splitlines()[-1])
            self.assertEqual(summary['n_records'], 2)
            self.assertEqual(summary['warnings'], 2)
            self.assertEqual([r.t for r in read_packets(cleaned)], [1.0, 5.0])

    def test_malformed_file_is_a_data_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / 'raw.csv'
            source.write_text('1.0,1,10,1,2,3,4,5\n')
            with self.assertRaises(CommandError) as cm:
                call_command('validate', '--in', str(source), stdout=io.StringIO())
            self.assertEqual(cm.exception.returncode, 2)

    def test_missing_file_is_an_io_error(self):
        with self.assertRaises(CommandError) as cm:
            call_command('validate', '--in', '/nonexistent/day.csv', stdout=io.StringIO())
        self.assertEqual(cm.exception.returncode, 3)

    def test_cleaned_output_is_identical_on_rerun(self):
        with tempfile.TemporaryDirectory() as tmp:
            source = Path(tmp) / 'raw.csv'
            source.write_text('t,station,src,seen1,seen2,seen3,seen4\n'
                              '5.0,2,10,11,,,\n1.0,1,10,,,,\n1.0,1,10,,,,\n')
            for name in ('clean.csv', 'clean.jsonl.gz'):
                cleaned = Path(tmp) / name
                call_command('validate', '--in', str(source), '--out', str(cleaned), stdout=io.StringIO())
                first = cleaned.read_bytes()
                call_command('validate', '--in', str(source), '--out', str(cleaned), stdout=io.StringIO())
                self.assertEqual(cleaned.read_bytes(), first, name)
