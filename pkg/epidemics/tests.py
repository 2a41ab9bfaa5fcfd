import io
import json
import tempfile
from collections import Counter
from itertools import combinations
from pathlib import Path

import networkx as nx
import numpy as np
from django.core.management import call_command
from django.test import SimpleTestCase

from beacons.grid import PairKey, TimeGrid
from beacons.simulation import ScenarioConfig, generate_scenario, phase_of_bins
from contacts.binning import BinContactMap, bin_pair_counts
from core.exceptions import ConfigurationError, InsufficientDataError
from .si import (Compartment, EpidemicParams, EpidemicState, format_tree, infections_by_phase, init_epidemic,
                 run_many, run_si, step_si, transmission_tree)

GRID = TimeGrid(0.0, 20.0)


def contact_map(entries):
    """``[(a, b, bin, packets), ...]`` to a map on the default grid."""
    return BinContactMap(GRID, {(PairKey(min(a, b), max(a, b)), k): w for a, b, k, w in entries})


class InitEpidemicTests(SimpleTestCase):
    def test_one_seed_among_susceptibles(self):
        state = init_epidemic(range(10), EpidemicParams(), np.random.default_rng(0))
        counts = Counter(state.compartments.values())
        self.assertEqual(counts, {Compartment.INFECTED: 1, Compartment.SUSCEPTIBLE: 9})

    def test_immune_fraction(self):
        state = init_epidemic(range(50), EpidemicParams(immune_frac=0.2), np.random.default_rng(0))
        self.assertEqual(len(state.immune()), 10)
        self.assertEqual(state.n_infected, 1)
        self.assertNotIn(state.infected()[0], state.immune())

    def test_same_seed_same_state(self):
        params = EpidemicParams(immune_frac=0.3)
        first = init_epidemic(range(40), params, np.random.default_rng(5))
        second = init_epidemic(range(40), params, np.random.default_rng(5))
        self.assertEqual(first, second)

    def test_fixed_seed_beacon(self):
        state = init_epidemic(range(5), EpidemicParams(seed_beacon=3), np.random.default_rng(0), start_bin=7)
        self.assertEqual(state.infected(), [3])
        self.assertEqual(state.infection_time, {3: 6})

    def test_nobody_left_to_infect(self):
        with self.assertRaises(ConfigurationError):
            init_epidemic([1], EpidemicParams(immune_frac=0.5), np.random.default_rng(0))

    def test_seed_beacon_outside_the_data(self):
        with self.assertRaises(ConfigurationError):
            init_epidemic(range(5), EpidemicParams(seed_beacon=99), np.random.default_rng(0))

    def test_parameter_ranges(self):
        with self.assertRaises(ConfigurationError):
            EpidemicParams(beta=-0.1)
        with self.assertRaises(ConfigurationError):
            EpidemicParams(immune_frac=1.0)


class StepTests(SimpleTestCase):
    def test_zero_beta_never_spreads(self):
        cm = contact_map([(a, b, k, 50) for a, b in combinations(range(6), 2) for k in range(10)])
        trace = run_si(cm, EpidemicParams(beta=0.0))
        self.assertEqual({n for _, n in trace.series}, {1})
        self.assertEqual(trace.events, [])

    def test_heavy_edge_is_certain(self):
        cm = contact_map([(1, 2, 0, 100)])
        trace = run_si(cm, EpidemicParams(beta=0.01, seed_beacon=1))
        self.assertEqual(trace.events, [(0, 1, 2)])

    def test_synchronous_update(self):
        # B only becomes infectious after the window it was infected in
        cm = contact_map([(1, 2, 0, 1), (2, 3, 0, 1)])
        trace = run_si(cm, EpidemicParams(beta=1.0, seed_beacon=1))
        self.assertEqual(trace.final_infected, 2)

    def test_causal_order_of_contacts(self):
        forward = contact_map([(1, 2, 0, 1), (2, 3, 5, 1)])
        backward = contact_map([(2, 3, 0, 1), (1, 2, 5, 1)])
        params = EpidemicParams(beta=1.0, seed_beacon=1)
        self.assertEqual([t.final_infected for t in run_many(forward, params, 100)], [3] * 100)
        self.assertEqual([t.final_infected for t in run_many(backward, params, 100)], [2] * 100)

    def test_chain_never_skips_the_middle(self):
        cm = contact_map([(1, 2, 0, 1), (2, 3, 5, 1)])
        outcomes = Counter()
        for trace in run_many(cm, EpidemicParams(beta=0.5, seed_beacon=1), 100):
            infected = {e.infectee for e in trace.events}
            self.assertFalse(3 in infected and 2 not in infected)
            outcomes[frozenset(infected)] += 1
        self.assertGreater(outcomes[frozenset({2})] + outcomes[frozenset({2, 3})], 0)
        self.assertGreaterEqual(outcomes[frozenset({2})] + outcomes[frozenset({2, 3})],
                                outcomes[frozenset({2, 3})])

    def test_infection_rate_matches_probability(self):
        params = EpidemicParams(beta=0.1)
        state = EpidemicState({1: Compartment.INFECTED, 2: Compartment.SUSCEPTIBLE}, {1: -1})
        rng = np.random.default_rng(3)
        trials = 10_000
        hits = sum(bool(step_si(state, [(PairKey(1, 2), 3)], params, rng)[1]) for _ in range(trials))
        p = params.probability(3)
        sigma = np.sqrt(trials * p * (1 - p))
        self.assertLess(abs(hits - trials * p), 3 * sigma)

    def test_independent_draws_per_infectious_neighbour(self):
        params = EpidemicParams(beta=0.2)
        state = EpidemicState({1: Compartment.INFECTED, 2: Compartment.INFECTED, 3: Compartment.SUSCEPTIBLE})
        rng = np.random.default_rng(8)
        trials = 10_000
        infectors = Counter()
        for _ in range(trials):
            _, events = step_si(state, [(PairKey(1, 3), 1), (PairKey(2, 3), 1)], params, rng)
            infectors.update(e.infector for e in events)
        p = 1 - (1 - 0.2) ** 2
        self.assertLess(abs(sum(infectors.values()) - trials * p), 3 * np.sqrt(trials * p * (1 - p)))
        self.assertLess(abs(infectors[1] - infectors[2]), 0.1 * trials * p)

    def test_complete_graph_infects_everyone(self):
        cm = contact_map([(a, b, 0, 1) for a, b in combinations(range(8), 2)]
                         + [(a, b, 1, 1) for a, b in combinations(range(8), 2)])
        self.assertEqual(run_si(cm, EpidemicParams(beta=1.0)).final_infected, 8)

    def test_empty_map(self):
        with self.assertRaises(InsufficientDataError):
            run_si(contact_map([]), EpidemicParams())


class TraceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(21)
        entries = [(int(a), int(b), k, int(rng.integers(1, 12)))
                   for k in range(300)
                   for a, b in [rng.choice(25, size=2, replace=False)]]
        cls.map = contact_map(entries)
        cls.traces = run_many(cls.map, EpidemicParams(beta=0.2, immune_frac=0.2, rng_seed=4), 30)

    def test_series_is_monotone(self):
        for trace in self.traces:
            values = [n for _, n in trace.series]
            self.assertEqual(values, sorted(values))
            self.assertEqual(trace.final_infected, 1 + len(trace.events))

    def test_immune_beacons_stay_immune(self):
        for trace in self.traces:
            involved = {e.infectee for e in trace.events} | {e.infector for e in trace.events}
            self.assertFalse(involved & set(trace.immune))

    def test_infector_was_infected_earlier(self):
        for trace in self.traces:
            when = {trace.seed: trace.start_bin - 1}
            for event in trace.events:
                self.assertLess(when[event.infector], event.bin)
                self.assertNotIn(event.infectee, when)
                when[event.infectee] = event.bin

    def test_tree_is_an_arborescence(self):
        for trace in self.traces:
            tree = transmission_tree(trace)
            self.assertTrue(nx.is_arborescence(tree))
            self.assertEqual(tree.number_of_nodes(), trace.final_infected)
            for parent, child in tree.edges:
                self.assertGreater(tree.nodes[child]['infection_bin'], tree.nodes[parent]['infection_bin'])

    def test_runs_are_reproducible_and_distinct(self):
        again = run_many(self.map, EpidemicParams(beta=0.2, immune_frac=0.2, rng_seed=4), 30)
        self.assertEqual([t.events for t in again], [t.events for t in self.traces])
        self.assertGreater(len({tuple(t.events) for t in self.traces}), 1)

    def test_format_tree(self):
        trace = run_si(contact_map([(1, 2, 0, 1), (2, 3, 5, 1), (1, 4, 2, 1)]),
                       EpidemicParams(beta=1.0, seed_beacon=1))
        self.assertEqual(format_tree(transmission_tree(trace)).splitlines(),
                         ['1 bin -1 (seed)', '  2 bin 0', '    3 bin 5', '  4 bin 2'])


class ConferenceSpreadTests(SimpleTestCase):
    def test_breaks_spread_faster_than_sessions(self):
        """Mean share of infections in breaks beats the share in sessions.

        Uses 200 stochastic runs, not 1000, to keep the suite quick.
        """
        config = ScenarioConfig(n_agents=30, days=1, rng_seed=5)
        records = list(generate_scenario(config))
        cm = bin_pair_counts(records, config.grid)
        kinds = phase_of_bins(config, config.grid)
        traces = run_many(cm, EpidemicParams(beta=0.01, rng_seed=2), 200, beacons=config.beacon_ids())
        shares = []
        for trace in traces:
            tally = infections_by_phase([trace], kinds)
            total = sum(tally.values())
            if total:
                shares.append(((tally.get('break', 0) + tally.get('lunch', 0)) / total,
                               tally.get('session', 0) / total))
        self.assertGreater(len(shares), 0)
        pause, session = np.mean(shares, axis=0)
        self.assertGreater(pause, session)

        tally = infections_by_phase(traces, kinds)
        windows = Counter(kinds.values())
        self.assertGreater(tally.get('break', 0) / windows['break'], tally.get('session', 0) / windows['session'])


class SpreadCommandTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        cls.stream = cls.dir / 'day.csv'
        call_command('simulate', '--out', str(cls.stream), '--agents', '15', '--days', '1', '--seed', '3',
                     stdout=io.StringIO())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def call(self, *args):
        out = io.StringIO()
        call_command('spread', *args, stdout=out)
        return json.loads(out.getvalue().strip().splitlines()[-1])

    def rows(self, path):
        return [line for line in path.read_text().splitlines() if not line.startswith('#')]

    def test_zero_beta(self):
        trace = self.dir / 'flat.csv'
        summary = self.call('--in', str(self.stream), '--beta', '0', '--trace', str(trace))
        self.assertEqual(summary['final_infected'], 1)
        rows = self.rows(trace)
        self.assertEqual(rows[0], 'bin,t_start,n_infected')
        self.assertTrue(all(row.endswith(',1') for row in rows[1:]))

    def test_outputs_agree(self):
        events, tree = self.dir / 'events.csv', self.dir / 'tree.txt'
        summary = self.call('--in', str(self.stream), '--beta', '0.05', '--seed', '1',
                            '--events', str(events), '--tree', str(tree))
        self.assertEqual(len(self.rows(events)) - 1, summary['final_infected'] - 1)
        lines = self.rows(tree)
        self.assertEqual(len(lines), summary['final_infected'])
        self.assertTrue(lines[0].endswith('(seed)'))

    def test_immunisation_sweep(self):
        trace = self.dir / 'sweep.csv'
        summary = self.call('--in', str(self.stream), '--beta', '0.05', '--immune-frac', '0', '0.4',
                            '--runs', '3', '--trace', str(trace))
        self.assertEqual(set(summary['sweep']), {'0', '0.4'})
        self.assertEqual(summary['sweep']['0.4']['immune'], 6)
        self.assertIn('# immune_frac 0.4 run 2', trace.read_text())

    def test_outputs_are_identical_on_rerun(self):
        paths = [self.dir / n for n in ('rerun-trace.csv', 'rerun-events.csv', 'rerun-tree.txt')]
        args = ['--in', str(self.stream), '--beta', '0.05', '--seed', '4', '--runs', '2',
                '--trace', str(paths[0]), '--events', str(paths[1]), '--tree', str(paths[2])]
        self.call(*args)
        first = [path.read_bytes() for path in paths]
        self.call(*args)
        self.assertEqual([path.read_bytes() for path in paths], first)
