"""
Aggregated weighted contact networks over arbitrary time spans.

Weights are either packet counts summed over the windows of the span
(``packets``, additive over disjoint spans) or the number of contact events
intersecting the span (``events``).
"""
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

from beacons.grid import PairKey
from beacons.ingest import day_window
from core.exceptions import ConfigurationError, PacketParseError, UnknownNodeError

logger = logging.getLogger(__name__)

WEIGHT_MODES = ('packets', 'events')
GRAPH_FORMATS = ('edge-csv', 'graph-json')
EDGE_HEADER = ['lo', 'hi', 'weight']


@dataclass(frozen=True)
class WeightedGraph:
    # beacon id -> labels (may be empty)
    nodes: dict = field(default_factory=dict)
    # PairKey -> weight >= 1
    edges: dict = field(default_factory=dict)
    span: tuple = (0.0, 0.0)

    def total_weight(self):
        return sum(self.edges.values())


def _check_span(t0, t1):
    if not t0 < t1:
        raise ConfigurationError(f'empty or inverted span [{t0}, {t1})')


def aggregate(contact_map, events, t0, t1, weight_mode='packets', labels=None, beacons=None):
    """Weighted graph of the contacts in ``[t0, t1)``.

    The node set is the beacon population (``beacons``, else every beacon of
    the map and of ``labels``) so that it does not depend on the span.
    """
    _check_span(t0, t1)
    if weight_mode not in WEIGHT_MODES:
        raise ConfigurationError(f"unknown weight mode '{weight_mode}', expected one of {', '.join(WEIGHT_MODES)}")
    labels = labels or {}
    grid = contact_map.grid

    edges = {}
    if weight_mode == 'packets':
        window = set(grid.bins_in(t0, t1))
        for pair in contact_map.pairs():
            w = contact_map.pair_total(pair, window)
            if w:
                edges[pair] = w
    else:
        for event in events:
            # events carry times relative to the grid origin
            start, end = grid.origin + event.start, grid.origin + event.end
            if start < t1 and end > t0:
                edges[event.pair] = edges.get(event.pair, 0) + 1

    population = set(beacons) if beacons is not None else contact_map.beacons() | set(labels)
    for pair in edges:
        population.update(pair)
    nodes = {n: dict(labels.get(n, {})) for n in sorted(population)}
    return WeightedGraph(nodes, dict(sorted(edges.items())), (float(t0), float(t1)))


def node_strength(g, n):
    """Sum of the weights of the edges incident to ``n``."""
    if n not in g.nodes:
        raise UnknownNodeError(f'beacon {n} is not a node of the graph')
    return sum(w for pair, w in g.edges.items() if n in pair)


def strengths(g):
    out = dict.fromkeys(g.nodes, 0)
    for (lo, hi), w in g.edges.items():
        out[lo] += w
        out[hi] += w
    return out


def average_degree(g):
    if not g.nodes:
        return 0.0
    return 2 * len(g.edges) / len(g.nodes)


def filter_edges(g, wmin, drop_isolated=False):
    """Keep edges heavier than ``wmin``; isolated nodes go only on request."""
    if wmin < 0:
        raise ConfigurationError(f'minimum weight must be non-negative, got {wmin}')
    edges = {pair: w for pair, w in g.edges.items() if w > wmin}
    nodes = g.nodes
    if drop_isolated:
        linked = {n for pair in edges for n in pair}
        nodes = {n: labels for n, labels in g.nodes.items() if n in linked}
    return WeightedGraph(dict(nodes), edges, g.span)


def daily_graphs(contact_map, events, days, weight_mode='packets', labels=None):
    """One aggregate per day, sharing the node set of the whole stream."""
    population = contact_map.beacons() | set(labels or {})
    for event in events:
        population.update(event.pair)
    return [aggregate(contact_map, events, *day_window(day), weight_mode=weight_mode,
                      labels=labels, beacons=population) for day in days]


def to_networkx(g):
    nx_graph = nx.Graph(span=g.span)
    for n, labels in g.nodes.items():
        nx_graph.add_node(n, **labels)
    nx_graph.add_weighted_edges_from((lo, hi, w) for (lo, hi), w in g.edges.items())
    return nx_graph


def graph_format_for(path):
    return 'graph-json' if Path(path).suffix.lower() == '.json' else 'edge-csv'


def _check_graph_format(fmt):
    if fmt not in GRAPH_FORMATS:
        raise ConfigurationError(f"unknown graph format '{fmt}', expected one of {', '.join(GRAPH_FORMATS)}")


def export_graph(g, path, fmt=None, header=None):
    """Write ``g`` as edge-csv or graph-json; ``header`` is the run config."""
    from .serializers import WeightedGraphSerializer

    fmt = fmt or graph_format_for(path)
    _check_graph_format(fmt)
    header = header or {}
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if fmt == 'graph-json':
            payload = {'config': header, **WeightedGraphSerializer(g).data}
            json.dump(payload, handle, indent=2, sort_keys=False)
            handle.write('\n')
        else:
            for key, value in header.items():
                handle.write(f'# {key}: {value}\n')
            handle.write(f'# span: {g.span[0]!r} {g.span[1]!r}\n')
            for n, labels in g.nodes.items():
                handle.write(f'# node: {json.dumps({"id": n, "labels": labels}, sort_keys=True)}\n')
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(EDGE_HEADER)
            for (lo, hi), w in g.edges.items():
                writer.writerow([lo, hi, w])
    logger.info('wrote %s graph with %d nodes and %d edges to %s', fmt, len(g.nodes), len(g.edges), path)
    return fmt


def _load_edge_csv(handle):
    span = (0.0, 0.0)
    nodes = {}
    rows = []
    for line_no, line in enumerate(handle, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('# span:'):
            try:
                t0, t1 = (float(x) for x in stripped[len('# span:'):].split())
            except ValueError:
                raise PacketParseError(f'bad span line {stripped!r}', line_no) from None
            span = (t0, t1)
        elif stripped.startswith('# node:'):
            try:
                node = json.loads(stripped[len('# node:'):])
                nodes[int(node['id'])] = dict(node.get('labels') or {})
            except (ValueError, KeyError, TypeError):
                raise PacketParseError(f'bad node line {stripped!r}', line_no) from None
        elif stripped.startswith('#') or stripped == ','.join(EDGE_HEADER):
            continue
        else:
            rows.append((line_no, stripped))

    edges = {}
    for line_no, row in rows:
        try:
            lo, hi, w = row.split(',')
            lo, hi, w = int(lo), int(hi), int(w)
        except ValueError:
            raise PacketParseError(f'bad edge row {row!r}', line_no) from None
        if not lo < hi:
            raise PacketParseError(f'edge endpoints must satisfy lo < hi, got {lo},{hi}', line_no)
        edges[PairKey(lo, hi)] = w
        nodes.setdefault(lo, {})
        nodes.setdefault(hi, {})
    return WeightedGraph(dict(sorted(nodes.items())), dict(sorted(edges.items())), span)


def load_graph(path, fmt=None):
    """Read a graph written by ``export_graph``."""
    from .serializers import graph_from_payload

    fmt = fmt or graph_format_for(path)
    _check_graph_format(fmt)
    with open(path, newline='', encoding='utf-8') as handle:
        if fmt == 'edge-csv':
            return _load_edge_csv(handle)
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise PacketParseError(f'invalid graph JSON: {exc.msg}', exc.lineno) from None
    return graph_from_payload(payload)
