"""
Instantaneous contact networks, one per time window: average degree,
room attendance and maximal-clique census.
"""
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import networkx as nx

from contacts.binning import bin_pair_counts
from core.exceptions import UnknownStationError

# cliques of this size or larger share one bucket
CLIQUE_CAP = 5
CLIQUE_SIZES = (2, 3, 4, CLIQUE_CAP)


@dataclass(frozen=True)
class InstantGraph:
    bin: int
    nodes: frozenset = frozenset()
    # PairKey -> packet count in the window
    edges: dict = field(default_factory=dict)

    @property
    def average_degree(self):
        if not self.nodes:
            return None
        return 2 * len(self.edges) / len(self.nodes)

    def to_networkx(self):
        g = nx.Graph()
        g.add_nodes_from(sorted(self.nodes))
        g.add_weighted_edges_from((lo, hi, w) for (lo, hi), w in sorted(self.edges.items()))
        return g


@dataclass(frozen=True)
class CliqueCensus:
    bin: int
    # size -> number of maximal cliques; key CLIQUE_CAP counts every size >= CLIQUE_CAP
    counts: dict = field(default_factory=lambda: dict.fromkeys(CLIQUE_SIZES, 0))

    def __getitem__(self, size):
        return self.counts.get(min(size, CLIQUE_CAP), 0)

    @staticmethod
    def label(size):
        return f'{CLIQUE_CAP}+' if size >= CLIQUE_CAP else str(size)


@dataclass
class AttendanceSeries:
    # (room, bin) -> number of beacons assigned to the room
    counts: dict = field(default_factory=dict)
    rooms: tuple = ()

    def series(self, room):
        return sorted((k, n) for (r, k), n in self.counts.items() if r == room)

    def bins(self):
        return sorted({k for _, k in self.counts})

    def total(self, k):
        return sum(n for (_, b), n in self.counts.items() if b == k)


def _present_by_bin(records, grid):
    present = defaultdict(set)
    for record in records:
        present[grid.bin_of(record.t)].add(record.src)
    return present


def instant_graph(records, contact_map, k):
    """The contact network of window ``k``.

    Nodes are beacons heard as a source in the window plus every endpoint
    of an edge; edges are pairs with at least one packet.
    """
    grid = contact_map.grid
    nodes = {r.src for r in records if grid.bin_of(r.t) == k}
    edges = dict(contact_map.bin_edges(k))
    for pair in edges:
        nodes.update(pair)
    return InstantGraph(k, frozenset(nodes), edges)


def instant_graphs(records, grid, contact_map=None):
    """Every non-empty window's graph, in bin order."""
    if contact_map is None:
        contact_map = bin_pair_counts(records, grid)
    present = _present_by_bin(records, grid)
    for k in sorted(set(present) | set(contact_map.bins())):
        edges = dict(contact_map.bin_edges(k))
        nodes = set(present.get(k, ()))
        for pair in edges:
            nodes.update(pair)
        yield InstantGraph(k, frozenset(nodes), edges)


def degree_series(records, grid, contact_map=None):
    """``[(bin, <k>), ...]``; windows without nodes are skipped."""
    return [(g.bin, g.average_degree) for g in instant_graphs(records, grid, contact_map) if g.nodes]


def attendance_series(records, grid, rooms):
    """Beacons per room and window.

    Each beacon is assigned to the room of the station relaying most of its
    records in the window, ties going to the lowest station id. ``rooms``
    maps station id to room name.
    """
    relayed = defaultdict(Counter)
    for record in records:
        if record.station not in rooms:
            raise UnknownStationError(f'station {record.station} is not mapped to a room')
        relayed[(grid.bin_of(record.t), record.src)][record.station] += 1

    counts = Counter()
    for (k, _), by_station in relayed.items():
        station = min(by_station, key=lambda s: (-by_station[s], s))
        counts[(rooms[station], k)] += 1
    return AttendanceSeries(dict(sorted(counts.items())), tuple(sorted(set(rooms.values()))))


def maximal_cliques(graph):
    """Census of maximal cliques of size >= 2 (Bron-Kerbosch with pivoting)."""
    counts = dict.fromkeys(CLIQUE_SIZES, 0)
    if graph.edges:
        for clique in nx.find_cliques(graph.to_networkx()):
            if len(clique) >= 2:
                counts[min(len(clique), CLIQUE_CAP)] += 1
    return CliqueCensus(graph.bin, counts)


def clique_series(records, grid, contact_map=None):
    return [maximal_cliques(g) for g in instant_graphs(records, grid, contact_map)]


def phase_means(series, phase_of_bin):
    """Mean value per phase kind of a ``[(bin, value), ...]`` series."""
    sums, counts = Counter(), Counter()
    for k, value in series:
        kind = phase_of_bin.get(k)
        if kind is None:
            continue
        sums[kind] += value
        counts[kind] += 1
    return {kind: sums[kind] / counts[kind] for kind in sorted(counts)}
