import io
import json
import tempfile
from itertools import combinations
from pathlib import Path

import networkx as nx
import numpy as np
from django.core.management import call_command
from django.test import SimpleTestCase

from beacons.grid import PairKey, TimeGrid
from beacons.packets import PacketRecord
from beacons.simulation import ScenarioConfig, generate_scenario, phase_of_bins
from contacts.binning import BinContactMap, bin_pair_counts
from contacts.events import detect_contacts
from core.exceptions import ConfigurationError, InsufficientDataError, UnknownNodeError, UnknownStationError
from .aggregate import (WeightedGraph, aggregate, average_degree, daily_graphs, export_graph, filter_edges,
                        load_graph, node_strength, strengths, to_networkx)
from .instant import (CLIQUE_CAP, InstantGraph, attendance_series, clique_series, degree_series, instant_graph,
                      maximal_cliques, phase_means)
from .layout import (LayoutParams, emit_frames, init_layout, layout_step, read_frames, spring_energy,
                     station_proximity)

GRID = TimeGrid(0.0, 20.0)


def rec(t, src, *seen, station=1):
    return PacketRecord(float(t), station, src, seen)


def graph(edges, nodes=(), k=0):
    pairs = {PairKey(min(a, b), max(a, b)): w for a, b, w in edges}
    members = set(nodes)
    for pair in pairs:
        members.update(pair)
    return InstantGraph(k, frozenset(members), pairs)


class InstantGraphTests(SimpleTestCase):
    def test_empty_window(self):
        records = [rec(1, 1, 2)]
        g = instant_graph(records, bin_pair_counts(records, GRID), 5)
        self.assertEqual((g.nodes, g.edges), (frozenset(), {}))

    def test_two_disjoint_pairs(self):
        records = [rec(1, 1, 2), rec(2, 3, 4)]
        g = instant_graph(records, bin_pair_counts(records, GRID), 0)
        self.assertEqual(len(g.nodes), 4)
        self.assertEqual(len(g.edges), 2)
        self.assertEqual(g.average_degree, 1.0)

    def test_sighting_makes_an_isolated_node(self):
        records = [rec(1, 1, 2), rec(3, 9)]
        g = instant_graph(records, bin_pair_counts(records, GRID), 0)
        self.assertIn(9, g.nodes)
        self.assertEqual(g.to_networkx().degree(9), 0)

    def test_seen_only_beacon_is_a_node(self):
        records = [rec(1, 1, 2)]
        g = instant_graph(records, bin_pair_counts(records, GRID), 0)
        self.assertEqual(g.nodes, frozenset({1, 2}))


class DegreeSeriesTests(SimpleTestCase):
    def test_values(self):
        records = [rec(1, 1, 2), rec(2, 3, 4), rec(25, 5), rec(26, 6), rec(70, 1, 2)]
        self.assertEqual(degree_series(records, GRID), [(0, 1.0), (1, 0.0), (3, 1.0)])

    def test_invariant_under_record_order(self):
        rng = np.random.default_rng(4)
        records = [rec(t, int(rng.integers(1, 4)), int(rng.integers(4, 7))) for t in rng.uniform(0, 200, 120)]
        shuffled = [records[i] for i in rng.permutation(len(records))]
        self.assertEqual(degree_series(records, GRID), degree_series(shuffled, GRID))


class AttendanceTests(SimpleTestCase):
    rooms = {1: 'conference', 2: 'bar'}

    def test_majority_station(self):
        records = [rec(1, 7, station=1), rec(2, 7, station=1), rec(3, 7, station=1), rec(4, 7, station=2)]
        series = attendance_series(records, GRID, self.rooms)
        self.assertEqual(series.counts, {('conference', 0): 1})

    def test_tie_goes_to_lowest_station(self):
        records = [rec(1, 7, station=2), rec(2, 7, station=2), rec(3, 7, station=1), rec(4, 7, station=1)]
        self.assertEqual(attendance_series(records, GRID, self.rooms).counts, {('conference', 0): 1})

    def test_unknown_station(self):
        with self.assertRaises(UnknownStationError):
            attendance_series([rec(1, 7, station=9)], GRID, self.rooms)

    def test_at_most_one_room_per_beacon(self):
        rng = np.random.default_rng(8)
        records = [rec(t, int(rng.integers(1, 6)), station=int(rng.integers(1, 3))) for t in rng.uniform(0, 400, 300)]
        series = attendance_series(records, GRID, self.rooms)
        for k in series.bins():
            present = {r.src for r in records if GRID.bin_of(r.t) == k}
            self.assertLessEqual(series.total(k), len(present))


class MaximalCliqueTests(SimpleTestCase):
    def test_triangle(self):
        census = maximal_cliques(graph([(1, 2, 1), (2, 3, 1), (1, 3, 1)]))
        self.assertEqual((census[3], census[2]), (1, 0))

    def test_path(self):
        self.assertEqual(maximal_cliques(graph([(1, 2, 1), (2, 3, 1)]))[2], 2)

    def test_k4(self):
        census = maximal_cliques(graph([(a, b, 1) for a, b in combinations(range(4), 2)]))
        self.assertEqual((census[4], census[3], census[2]), (1, 0, 0))

    def test_large_cliques_share_a_bucket(self):
        census = maximal_cliques(graph([(a, b, 1) for a, b in combinations(range(7), 2)]))
        self.assertEqual(census[CLIQUE_CAP], 1)
        self.assertEqual(census[7], 1)

    def test_isolated_nodes_are_ignored(self):
        self.assertEqual(sum(maximal_cliques(graph([], nodes=[1, 2])).counts.values()), 0)

    def exhaustive(self, n, edges):
        adjacency = [0] * n
        for a, b in edges:
            adjacency[a] |= 1 << b
            adjacency[b] |= 1 << a
        cliques = []
        for subset in range(1, 1 << n):
            members = [v for v in range(n) if subset >> v & 1]
            if len(members) < 2:
                continue
            if all(subset & ~(1 << v) & ~adjacency[v] == 0 for v in members):
                cliques.append(subset)
        counts = {2: 0, 3: 0, 4: 0, CLIQUE_CAP: 0}
        for subset in cliques:
            outside = [v for v in range(n) if not subset >> v & 1]
            if any(subset & ~adjacency[v] == 0 for v in outside):
                continue
            counts[min(bin(subset).count('1'), CLIQUE_CAP)] += 1
        return counts

    def test_matches_subset_enumeration(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            n = int(rng.integers(1, 13))
            density = rng.uniform(0.1, 0.9)
            edges = [(a, b) for a, b in combinations(range(n), 2) if rng.random() < density]
            census = maximal_cliques(graph([(a, b, 1) for a, b in edges], nodes=range(n)))
            self.assertEqual(census.counts, self.exhaustive(n, edges))


class ConferenceDayTests(SimpleTestCase):
    """Breaks versus sessions on the default conference scenario."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = ScenarioConfig(days=1, rng_seed=11)
        cls.records = list(generate_scenario(cls.config))
        cls.grid = cls.config.grid
        cls.kinds = phase_of_bins(cls.config, cls.grid)
        cls.contact_map = bin_pair_counts(cls.records, cls.grid)

    def test_degree_rises_during_breaks(self):
        means = phase_means(degree_series(self.records, self.grid, self.contact_map), self.kinds)
        self.assertGreater(means['break'], means['session'])

    def test_larger_cliques_during_breaks(self):
        cliques = clique_series(self.records, self.grid, self.contact_map)
        series = [(c.bin, c[3] + c[4]) for c in cliques]
        means = phase_means(series, self.kinds)
        self.assertGreaterEqual(means['break'], 5 * means['session'])

    def test_conference_room_empties_during_breaks(self):
        attendance = attendance_series(self.records, self.grid, self.config.stations)
        means = phase_means(attendance.series('conference'), self.kinds)
        self.assertLess(means['break'], means['session'])

    def test_aggregate_degree_grows_with_span(self):
        start = self.records[0].t
        previous = -1.0
        for hours in (0.5, 1, 2, 4, 8.5):
            g = aggregate(self.contact_map, [], start, start + hours * 3600)
            self.assertGreaterEqual(average_degree(g), previous)
            previous = average_degree(g)


class AggregateTests(SimpleTestCase):
    def setUp(self):
        # pair (1, 2): three events of 9, 3 and 5 packets; pair (2, 3): one window
        counts = {0: 5, 1: 4, 3: 3, 6: 5}
        self.contact_map = BinContactMap(GRID, {
            **{(PairKey(1, 2), k): n for k, n in counts.items()},
            (PairKey(2, 3), 2): 2,
        })
        self.events = detect_contacts(self.contact_map)

    def test_weight_modes(self):
        packets = aggregate(self.contact_map, self.events, 0, 200, 'packets')
        events = aggregate(self.contact_map, self.events, 0, 200, 'events')
        self.assertEqual(packets.edges[PairKey(1, 2)], 17)
        self.assertEqual(events.edges[PairKey(1, 2)], 3)

    def test_empty_span_inside_the_stream(self):
        g = aggregate(self.contact_map, self.events, 200, 400)
        self.assertEqual(g.edges, {})

    def test_inverted_span(self):
        with self.assertRaises(ConfigurationError):
            aggregate(self.contact_map, self.events, 40, 40)

    def test_packet_weights_are_additive(self):
        whole = aggregate(self.contact_map, self.events, 0, 200)
        left = aggregate(self.contact_map, self.events, 0, 50)
        right = aggregate(self.contact_map, self.events, 50, 200)
        merged = {pair: left.edges.get(pair, 0) + right.edges.get(pair, 0)
                  for pair in set(left.edges) | set(right.edges)}
        self.assertEqual(merged, whole.edges)

    def test_events_straddling_the_span_count(self):
        g = aggregate(self.contact_map, self.events, 30, 70, 'events')
        self.assertEqual(g.edges[PairKey(1, 2)], 2)

    def test_strength(self):
        g = WeightedGraph({1: {}, 2: {}, 3: {}, 4: {}}, {PairKey(1, 2): 2, PairKey(1, 3): 3}, (0.0, 1.0))
        self.assertEqual(node_strength(g, 1), 5)
        self.assertEqual(node_strength(g, 4), 0)
        self.assertEqual(sum(strengths(g).values()), 2 * g.total_weight())
        with self.assertRaises(UnknownNodeError):
            node_strength(g, 99)

    def test_filter_edges(self):
        g = aggregate(self.contact_map, self.events, 0, 200)
        self.assertEqual(filter_edges(g, 0).edges, g.edges)
        bare = filter_edges(g, 100)
        self.assertEqual((bare.edges, set(bare.nodes)), ({}, set(g.nodes)))
        self.assertEqual(filter_edges(filter_edges(g, 1), 5), filter_edges(g, 5))
        self.assertEqual(set(filter_edges(g, 5, drop_isolated=True).nodes), {1, 2})

    def test_labels_and_networkx(self):
        g = aggregate(self.contact_map, self.events, 0, 200, labels={1: {'country': 'IT'}, 9: {'role': 'student'}})
        self.assertEqual(g.nodes[9], {'role': 'student'})
        nx_graph = to_networkx(g)
        self.assertEqual(nx_graph.nodes[1]['country'], 'IT')
        self.assertEqual(nx_graph[1][2]['weight'], 17)

    def test_daily_graphs_share_nodes(self):
        first, second = daily_graphs(self.contact_map, self.events, [0, 1])
        self.assertEqual(set(first.nodes), set(second.nodes))
        self.assertEqual(second.edges, {})

    def test_export_round_trip(self):
        g = WeightedGraph({1: {'country': 'FR', 'role': 'student'}, 2: {}, 5: {}},
                          {PairKey(1, 2): 17}, (32400.0, 61200.5))
        with tempfile.TemporaryDirectory() as tmp:
            for name in ('graph.csv', 'graph.json'):
                path = Path(tmp) / name
                export_graph(g, path, header={'command': 'aggregate'})
                self.assertEqual(load_graph(path), g)

    def test_empty_graph_edge_csv_has_only_headers(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'empty.csv'
            export_graph(WeightedGraph(span=(0.0, 20.0)), path)
            lines = path.read_text().splitlines()
            self.assertEqual(lines[-1], 'lo,hi,weight')
            self.assertTrue(all(line.startswith('#') for line in lines[:-1]))


class LayoutTests(SimpleTestCase):
    anchors = {1: (0.0, 0.0), 2: (100.0, 0.0), 3: (0.0, 60.0)}

    def test_no_beacons(self):
        state = init_layout([], self.anchors, np.random.default_rng(0))
        self.assertEqual(state.positions, {})
        self.assertEqual(state.anchors, self.anchors)

    def test_seeded_inside_the_box(self):
        first = init_layout(range(30), self.anchors, np.random.default_rng(3))
        second = init_layout(range(30), self.anchors, np.random.default_rng(3))
        self.assertEqual(first.positions, second.positions)
        for x, y in first.positions.values():
            self.assertTrue(0 <= x <= 100 and 0 <= y <= 60)

    def test_anchors_required(self):
        with self.assertRaises(ConfigurationError):
            init_layout([1], {}, np.random.default_rng(0))

    def test_damping_below_one(self):
        with self.assertRaises(ConfigurationError):
            LayoutParams(damping=1.0)

    def test_lone_beacon_stays(self):
        state = init_layout([1], self.anchors, np.random.default_rng(0))
        moved = layout_step(state, graph([], nodes=[1]))
        self.assertEqual(moved.positions, state.positions)

    def test_spring_at_rest_length(self):
        params = LayoutParams(repulsion=0.0)
        state = init_layout([], self.anchors, np.random.default_rng(0), params)
        state.positions.update({1: (10.0, 10.0), 2: (15.0, 10.0)})
        moved = layout_step(state, graph([(1, 2, 1)]))
        self.assertEqual(moved.positions, state.positions)

    def test_rest_length_shrinks_with_weight(self):
        params = LayoutParams()
        lengths = [params.contact_rest_length(w) for w in range(0, 20)]
        self.assertTrue(all(a > b for a, b in zip(lengths, lengths[1:])))

    def test_energy_decreases(self):
        rng = np.random.default_rng(6)
        params = LayoutParams(repulsion=0.0)
        edges = [(a, b, int(rng.integers(1, 10))) for a, b in combinations(range(8), 2) if rng.random() < 0.4]
        g = graph(edges, nodes=range(8))
        proximity = {b: {int(rng.integers(1, 4)): int(rng.integers(1, 6))} for b in range(8)}
        state = init_layout(range(8), self.anchors, rng, params)
        energies = {}
        for step in range(1, 501):
            state = layout_step(state, g, proximity)
            if step in (50, 500):
                energies[step] = spring_energy(state, g, proximity)
        self.assertLessEqual(energies[500], energies[50])

    def test_anchors_never_move(self):
        g = graph([(1, 2, 3)])
        state = init_layout([1, 2], self.anchors, np.random.default_rng(1))
        for _ in range(20):
            state = layout_step(state, g, {1: {1: 4}, 2: {2: 4}})
        self.assertEqual(state.anchors, self.anchors)

    def test_translation_equivariance(self):
        shift = np.array([13.0, -7.5])
        moved_anchors = {s: (x + shift[0], y + shift[1]) for s, (x, y) in self.anchors.items()}
        g = graph([(1, 2, 3), (2, 3, 1)])
        proximity = {1: {1: 2}, 3: {3: 5}}
        a = init_layout([1, 2, 3], self.anchors, np.random.default_rng(9))
        b = init_layout([1, 2, 3], moved_anchors, np.random.default_rng(9))
        for _ in range(30):
            a = layout_step(a, g, proximity)
            b = layout_step(b, g, proximity)
        for beacon, xy in a.positions.items():
            np.testing.assert_allclose(np.array(b.positions[beacon]), np.array(xy) + shift, atol=1e-6)

    def test_station_proximity(self):
        records = [rec(1, 7, station=1), rec(2, 7, station=1), rec(3, 7, 8, station=2), rec(25, 8, station=2)]
        self.assertEqual(station_proximity(records, GRID), {0: {7: {1: 2, 2: 1}}, 1: {8: {2: 1}}})


class EmitFramesTests(SimpleTestCase):
    anchors = {1: (0.0, 0.0), 2: (50.0, 50.0)}

    def test_empty_graph_gives_anchor_only_frame(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'frames.txt'
            emit_frames([graph([], k=4)], self.anchors, path, np.random.default_rng(0))
            self.assertEqual(read_frames(path), {4: {'S1': (0.0, 0.0), 'S2': (50.0, 50.0)}})

    def test_one_frame_per_window_and_bit_identical(self):
        graphs = [graph([(1, 2, 2)], k=0), graph([(2, 3, 1)], nodes=[1], k=1), graph([], nodes=[4], k=5)]
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / 'a.txt', Path(tmp) / 'b.txt'
            for path in (first, second):
                emit_frames(graphs, self.anchors, path, np.random.default_rng(2), 5, header_lines=['seed: 2'])
            self.assertEqual(first.read_bytes(), second.read_bytes())
            frames = read_frames(first)
            self.assertEqual(sorted(frames), [0, 1, 5])
            self.assertEqual(set(frames[1]), {1, 2, 3, 'S1', 'S2'})

    def test_empty_series(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(InsufficientDataError):
                emit_frames([], self.anchors, Path(tmp) / 'frames.txt', np.random.default_rng(0))


class NetworkCommandTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        cls.conf = cls.dir / 'conf.yaml'
        cls.conf.write_text('n_agents: 12\ndays: 1\nrng_seed: 1\n')
        cls.stream = cls.dir / 'day.csv'
        cls.labels = cls.dir / 'labels.csv'
        call_command('simulate', '--config', str(cls.conf), '--out', str(cls.stream), '--labels', str(cls.labels),
                     stdout=io.StringIO())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def call(self, name, *args):
        out = io.StringIO()
        call_command(name, *args, stdout=out)
        return json.loads(out.getvalue().strip().splitlines()[-1])

    def test_netstats_series_files(self):
        degree, attendance, cliques = (self.dir / n for n in ('degree.csv', 'attendance.csv', 'cliques.csv'))
        summary = self.call('netstats', '--in', str(self.stream), '--config', str(self.conf),
                            '--degree', str(degree), '--attendance', str(attendance), '--cliques', str(cliques))
        self.assertIn('break', summary['degree_by_phase'])
        rows = [line for line in degree.read_text().splitlines() if not line.startswith('#')]
        self.assertEqual(rows[0], 'bin,t_start,value')
        self.assertEqual(len(rows) - 1, summary['windows'])
        self.assertIn('5+', cliques.read_text())
        self.assertIn('bin,t_start,room,value', attendance.read_text())

    def test_aggregate_graph_json_with_labels(self):
        out = self.dir / 'graph.json'
        summary = self.call('aggregate', '--in', str(self.stream), '--labels', str(self.labels),
                            '--out', str(out), '--min-weight', '10')
        g = load_graph(out)
        self.assertEqual(len(g.edges), summary['edges'])
        self.assertTrue(all(w > 10 for w in g.edges.values()))
        self.assertTrue(all('country' in labels for labels in g.nodes.values()))
        self.assertEqual(json.loads(out.read_text())['config']['command'], 'aggregate')

    def test_aggregate_events_mode(self):
        packets = self.call('aggregate', '--in', str(self.stream))
        events = self.call('aggregate', '--in', str(self.stream), '--weight-mode', 'events')
        self.assertEqual(packets['edges'], events['edges'])
        self.assertLess(events['total_weight'], packets['total_weight'])

    def test_layout_frames(self):
        out = self.dir / 'frames.txt'
        start = 9 * 3600
        summary = self.call('layout', '--in', str(self.stream), '--out', str(out),
                            '--from', str(start), '--to', str(start + 600), '--steps', '3')
        self.assertEqual(len(read_frames(out)), summary['frames'])
        self.assertTrue(out.read_text().startswith('# command: layout\n'))

    def assertRerunIdentical(self, name, args, paths):
        self.call(name, *args)
        first = [path.read_bytes() for path in paths]
        self.call(name, *args)
        self.assertEqual([path.read_bytes() for path in paths], first)

    def test_netstats_outputs_are_identical_on_rerun(self):
        paths = [self.dir / n for n in ('rerun-degree.csv', 'rerun-attendance.csv', 'rerun-cliques.csv')]
        self.assertRerunIdentical('netstats', ['--in', str(self.stream), '--config', str(self.conf),
                                               '--degree', str(paths[0]), '--attendance', str(paths[1]),
                                               '--cliques', str(paths[2])], paths)

    def test_aggregate_outputs_are_identical_on_rerun(self):
        for name, fmt in (('rerun-graph.csv', 'edge-csv'), ('rerun-graph.json', 'graph-json')):
            out = self.dir / name
            self.assertRerunIdentical('aggregate', ['--in', str(self.stream), '--labels', str(self.labels),
                                                    '--out', str(out), '--graph-format', fmt], [out])
