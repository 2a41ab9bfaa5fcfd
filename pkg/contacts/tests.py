import io
import json
import re
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.test import SimpleTestCase

from beacons.grid import PairKey, TimeGrid, pair_key
from beacons.ingest import drop_beacons, select_beacons
from beacons.packets import PacketRecord
from beacons.simulation import ScenarioConfig, generate_scenario
from core.exceptions import ConfigurationError, DegenerateDataError, InsufficientDataError
from .binning import BinContactMap, bin_pair_counts
from .events import (ContactEvent, contact_durations, detect_contacts, events_involving, intercontact_global,
                     intercontact_per_beacon, intercontact_per_pair)
from .export import read_events, write_events, write_samples
from .powerlaw import DiscretePowerLaw, fit_power_law, log_binned_histogram

GRID = TimeGrid(0.0, 20.0)


def contact(t, src, *seen, station=1):
    return PacketRecord(float(t), station, src, seen)


def fitted_duration_exponent(records, grid=GRID):
    events = detect_contacts(bin_pair_counts(records, grid))
    return fit_power_law(contact_durations(events), grid.bin_width, unit=grid.bin_width).exponent


def conference_day(seed=7):
    config = ScenarioConfig(n_agents=50, days=1, duration_exponent=2.0, rng_seed=seed)
    return [r for r in generate_scenario(config) if r.seen]


class BinPairCountsTests(SimpleTestCase):
    def test_counts_every_witnessed_pair(self):
        records = [contact(1, 1, 2, 3), contact(2, 2, 1), contact(25, 3, 1), contact(3, 4)]
        contact_map = bin_pair_counts(records, GRID)
        self.assertEqual(contact_map.get(PairKey(1, 2), 0), 2)
        self.assertEqual(contact_map.get(PairKey(1, 3), 0), 1)
        self.assertEqual(contact_map.get(PairKey(1, 3), 1), 1)
        self.assertEqual(len(contact_map), 3)

    def test_sightings_add_nothing(self):
        self.assertEqual(len(bin_pair_counts([contact(1, 1), contact(2, 2)], GRID)), 0)

    def test_merge_of_shards_equals_whole(self):
        rng = np.random.default_rng(2)
        records = [contact(t, 1, int(rng.integers(2, 5))) for t in np.sort(rng.uniform(0, 400, 200))]
        whole = bin_pair_counts(records, GRID)
        merged = bin_pair_counts(records[:70], GRID).merge(bin_pair_counts(records[70:], GRID))
        self.assertEqual(merged, whole)

    def test_merge_needs_same_grid(self):
        with self.assertRaises(ValueError):
            BinContactMap(GRID).merge(BinContactMap(TimeGrid(0.0, 10.0)))

    def test_restrict(self):
        contact_map = bin_pair_counts([contact(1, 1, 2), contact(41, 1, 2), contact(81, 1, 2)], GRID)
        self.assertEqual(contact_map.restrict(1, 2).bins(), [2])


class DetectContactsTests(SimpleTestCase):
    def map_from(self, counts):
        return BinContactMap(GRID, {(PairKey(1, 2), k): n for k, n in counts.items()})

    def test_consecutive_windows_form_one_event(self):
        events = detect_contacts(self.map_from({0: 6, 1: 3, 2: 7}))
        self.assertEqual(events, [ContactEvent(0, PairKey(1, 2), 2, 16, 20.0)])
        self.assertEqual(events[0].duration, 60.0)

    def test_threshold_splits_weak_windows(self):
        events = detect_contacts(self.map_from({0: 6, 1: 3, 2: 7}), threshold=5)
        self.assertEqual([(e.first_bin, e.last_bin, e.total_packets) for e in events], [(0, 0, 6), (2, 2, 7)])

    def test_gap_ends_event(self):
        events = detect_contacts(self.map_from({0: 1, 2: 1}))
        self.assertEqual(len(events), 2)

    def test_threshold_below_one(self):
        with self.assertRaises(ConfigurationError):
            detect_contacts(self.map_from({0: 1}), threshold=0)

    def test_sorted_by_start_then_pair(self):
        contact_map = BinContactMap(GRID, {(PairKey(3, 4), 0): 1, (PairKey(1, 2), 0): 1, (PairKey(1, 3), 1): 1})
        self.assertEqual([e.pair for e in detect_contacts(contact_map)],
                         [PairKey(1, 2), PairKey(3, 4), PairKey(1, 3)])


class ContactSegmentationOracleTests(SimpleTestCase):
    """Event detection against run-length decoding of per-pair bitmaps."""

    def random_stream(self, rng):
        beacons = list(range(1, int(rng.integers(2, 6)) + 1))
        n_bins = int(rng.integers(1, 51))
        records = []
        for _ in range(int(rng.integers(0, 6 * n_bins + 1))):
            src = int(rng.choice(beacons))
            others = [b for b in beacons if b != src]
            k = int(rng.integers(0, min(4, len(others)) + 1))
            seen = tuple(int(b) for b in rng.choice(others, size=k, replace=False))
            records.append(PacketRecord(float(rng.uniform(0, n_bins * 20.0)), 1, src, seen))
        return beacons, n_bins, records

    def reference(self, beacons, n_bins, records, threshold):
        counts = Counter()
        for record in records:
            k = int(record.t // 20.0)
            for other in record.seen:
                counts[(min(record.src, other), max(record.src, other), k)] += 1
        expected = []
        for a in beacons:
            for b in beacons:
                if a >= b:
                    continue
                bitmap = ''.join('1' if counts[(a, b, k)] >= threshold else '0' for k in range(n_bins))
                for run in re.finditer('1+', bitmap):
                    first, last = run.start(), run.end() - 1
                    total = sum(counts[(a, b, k)] for k in range(first, last + 1))
                    expected.append((first, (a, b), last, total))
        return sorted(expected)

    def test_random_streams(self):
        rng = np.random.default_rng(20)
        for _ in range(1000):
            beacons, n_bins, records = self.random_stream(rng)
            contact_map = bin_pair_counts(records, GRID)
            for threshold in (1, 5):
                got = [(e.first_bin, tuple(e.pair), e.last_bin, e.total_packets)
                       for e in detect_contacts(contact_map, threshold)]
                self.assertEqual(got, self.reference(beacons, n_bins, records, threshold))


class IntervalTests(SimpleTestCase):
    events = [
        ContactEvent(0, PairKey(1, 2), 1, 4),
        ContactEvent(5, PairKey(1, 3), 5, 2),
        ContactEvent(6, PairKey(1, 2), 8, 9),
    ]

    def test_durations(self):
        self.assertEqual(contact_durations(self.events), [40.0, 20.0, 60.0])

    def test_global_is_start_to_start(self):
        self.assertEqual(intercontact_global(self.events), [100.0, 20.0])

    def test_per_pair(self):
        self.assertEqual(intercontact_per_pair(self.events), [80.0])

    def test_per_beacon_skips_abutting_events(self):
        self.assertEqual(intercontact_per_beacon(self.events), [60.0, 80.0])

    def test_events_involving(self):
        self.assertEqual(events_involving(self.events, {1, 2}), [self.events[0], self.events[2]])
        self.assertEqual(len(events_involving(self.events, {3}, both=False)), 1)


class PowerLawFitTests(SimpleTestCase):
    def test_calibration_exponent_two(self):
        draws = DiscretePowerLaw(2.0).rvs(np.random.default_rng(1), 10 ** 4)
        self.assertAlmostEqual(fit_power_law(draws).exponent, 2.0, delta=0.05)

    def test_calibration_exponent_two_and_a_half(self):
        draws = DiscretePowerLaw(2.5).rvs(np.random.default_rng(2), 10 ** 4)
        self.assertAlmostEqual(fit_power_law(draws).exponent, 2.5, delta=0.07)

    def test_unit_scaling(self):
        draws = DiscretePowerLaw(2.0).rvs(np.random.default_rng(3), 5000)
        in_bins = fit_power_law(draws).exponent
        in_seconds = fit_power_law(draws * 20.0, 20.0, unit=20.0).exponent
        self.assertAlmostEqual(in_bins, in_seconds, places=6)

    def test_xmin_cuts_the_tail(self):
        result = fit_power_law([1] * 50 + list(range(2, 30)), xmin=2)
        self.assertEqual(result.n_tail, 28)

    def test_too_few_samples(self):
        with self.assertRaises(InsufficientDataError):
            fit_power_law([1, 2, 3])

    def test_degenerate_samples(self):
        with self.assertRaises(DegenerateDataError):
            fit_power_law([4] * 40)

    def test_pmf_sums_to_one(self):
        law = DiscretePowerLaw(2.0, 1, 50)
        self.assertAlmostEqual(float(law.pmf(np.arange(1, 51)).sum()), 1.0, places=9)

    def test_log_binned_histogram(self):
        rows = log_binned_histogram([1, 5, 20, 50, 99], bins_per_decade=1)
        self.assertEqual([count for _, _, count, _ in rows], [2, 3])
        self.assertAlmostEqual(sum((right - left) * density for left, right, _, density in rows), 1.0)


class ClosedLoopTests(SimpleTestCase):
    """Simulated conference day: fitted duration exponent and its robustness to dropout."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.records = conference_day()
        cls.exponent = fitted_duration_exponent(cls.records)

    def test_exponent_recovered(self):
        self.assertTrue(1.8 <= self.exponent <= 2.2, self.exponent)

    def test_dropping_twenty_beacons(self):
        beacons = {b for r in self.records for b in r.beacons()}
        shifts = []
        for seed in range(20):
            kept = drop_beacons(self.records, select_beacons(f'20:{seed}', beacons))
            shifts.append(abs(fitted_duration_exponent(kept) - self.exponent))
        self.assertGreaterEqual(sum(shift < 0.3 for shift in shifts), 18, shifts)


class ExportTests(SimpleTestCase):
    def test_events_round_trip_with_header(self):
        events = [ContactEvent(0, PairKey(1, 2), 2, 16), ContactEvent(7, pair_key(9, 4), 7, 1)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'events.csv'
            write_events(events, path, ['command: contacts', 'threshold: 1'])
            self.assertTrue(path.read_text().startswith('# command: contacts\n'))
            self.assertEqual(read_events(path), events)

    def test_samples_keep_integral_values_short(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'samples.txt'
            write_samples([20.0, 40.5], path)
            self.assertEqual(path.read_text(), '20\n40.5\n')


class ContactsCommandTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        conf = cls.dir / 'conf.toml'
        conf.write_text('n_agents = 30\ndays = 1\nrng_seed = 2\n')
        cls.stream = cls.dir / 'day.csv'
        call_command('simulate', '--config', str(conf), '--out', str(cls.stream), stdout=io.StringIO())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def call(self, name, *args):
        out = io.StringIO()
        call_command(name, *args, stdout=out)
        return json.loads(out.getvalue().strip().splitlines()[-1])

    def test_fit_is_reported(self):
        events = self.dir / 'events.csv'
        summary = self.call('contacts', '--in', str(self.stream), '--fit', '--out', str(events))
        self.assertIn('exponent', summary['fit'])
        self.assertEqual(len(read_events(events)), summary['events'])

    def test_strong_contacts(self):
        summary = self.call('contacts', '--in', str(self.stream), '--strong')
        weak = self.call('contacts', '--in', str(self.stream))
        self.assertEqual(summary['threshold'], 5)
        self.assertLessEqual(summary['pairs'], weak['pairs'])

    def test_drop_beacons_flag(self):
        summary = self.call('contacts', '--in', str(self.stream), '--drop-beacons', '10:1')
        self.assertEqual(len(summary['dropped_beacons']), 10)

    def test_stats_from_events_file(self):
        events = self.dir / 'stats-events.csv'
        self.call('contacts', '--in', str(self.stream), '--out', str(events))
        hist = self.dir / 'hist.csv'
        summary = self.call('stats', '--events', str(events), '--measure', 'per-pair', '--hist', str(hist))
        direct = self.call('stats', '--in', str(self.stream), '--measure', 'per-pair')
        self.assertEqual(summary['samples'], direct['samples'])
        self.assertIn('left,right,count,density', hist.read_text())

    def test_stats_among_subset(self):
        summary = self.call('stats', '--in', str(self.stream), '--among', '10:3')
        everyone = self.call('stats', '--in', str(self.stream))
        self.assertLess(summary['events'], everyone['events'])

    def assertRerunIdentical(self, name, args, paths):
        self.call(name, *args)
        first = [path.read_bytes() for path in paths]
        self.call(name, *args)
        self.assertEqual([path.read_bytes() for path in paths], first)

    def test_contacts_output_is_identical_on_rerun(self):
        events = self.dir / 'rerun-events.csv'
        self.assertRerunIdentical('contacts', ['--in', str(self.stream), '--threshold', '2', '--out', str(events)],
                                  [events])

    def test_stats_outputs_are_identical_on_rerun(self):
        samples, hist = self.dir / 'rerun-samples.csv', self.dir / 'rerun-hist.csv'
        self.assertRerunIdentical('stats', ['--in', str(self.stream), '--measure', 'per-beacon',
                                            '--out', str(samples), '--hist', str(hist)], [samples, hist])
