"""
Force-directed layout of the instantaneous contact network.

Beacons are joined by springs whose rest length shrinks with the contact
weight, and are tied to the stations that hear them by springs whose rest
length shrinks with proximity. Stations are fixed anchors. The module only
emits coordinates; drawing is left to external tools.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ConfigurationError, InsufficientDataError, UnknownNodeError

logger = logging.getLogger(__name__)

# distances below this are treated as coincident (no defined direction)
MIN_DISTANCE = 1e-9


@dataclass(frozen=True)
class LayoutParams:
    spring: float = 0.1
    repulsion: float = 1.0
    damping: float = 0.5
    rest_length: float = 10.0

    def __post_init__(self):
        if not 0 < self.damping < 1:
            raise ConfigurationError(f'damping must lie in (0, 1), got {self.damping}')
        if self.spring < 0 or self.repulsion < 0:
            raise ConfigurationError('spring and repulsion constants must be non-negative')
        if not self.rest_length > 0:
            raise ConfigurationError(f'rest length must be positive, got {self.rest_length}')

    def contact_rest_length(self, w):
        return self.rest_length / (1 + w)

    def anchor_rest_length(self, proximity):
        return self.rest_length / (1 + proximity)


@dataclass
class LayoutState:
    # beacon id -> (x, y)
    positions: dict = field(default_factory=dict)
    # station id -> (x, y); never moved
    anchors: dict = field(default_factory=dict)
    params: LayoutParams = field(default_factory=LayoutParams)

    def bounding_box(self):
        xy = np.array(list(self.anchors.values()), dtype=float)
        low, high = xy.min(axis=0), xy.max(axis=0)
        # a degenerate box (single anchor, collinear anchors) is widened by one rest length
        flat = high - low <= 0
        low = np.where(flat, low - self.params.rest_length, low)
        high = np.where(flat, high + self.params.rest_length, high)
        return low, high

    def place(self, beacons, rng):
        """Seed positions for beacons not yet placed, uniformly in the anchors' box."""
        new = sorted(b for b in beacons if b not in self.positions)
        if not new:
            return
        low, high = self.bounding_box()
        draws = rng.random((len(new), 2))
        for beacon, u in zip(new, draws):
            xy = low + u * (high - low)
            self.positions[beacon] = (float(xy[0]), float(xy[1]))


def init_layout(beacons, anchors, rng, params=None):
    if not anchors:
        raise ConfigurationError('the layout needs at least one station anchor')
    state = LayoutState({}, {s: (float(x), float(y)) for s, (x, y) in anchors.items()},
                        params or LayoutParams())
    state.place(beacons, rng)
    return state


def _spring_force(p, q, rest, k):
    """Force on ``p`` from a spring to ``q``."""
    d = q - p
    dist = float(np.hypot(*d))
    if dist < MIN_DISTANCE:
        return np.zeros(2)
    return k * (dist - rest) * d / dist


def _springs(state, graph, proximity):
    """Every (beacon, other point, rest length, other is a beacon) spring."""
    params = state.params
    for (lo, hi), w in graph.edges.items():
        yield lo, hi, params.contact_rest_length(w), True
    for beacon, by_station in sorted((proximity or {}).items()):
        if beacon not in graph.nodes:
            continue
        for station, p in sorted(by_station.items()):
            if station in state.anchors and p > 0:
                yield beacon, station, params.anchor_rest_length(p), False


def _position(state, beacon):
    try:
        return np.asarray(state.positions[beacon], dtype=float)
    except KeyError:
        raise UnknownNodeError(f'beacon {beacon} has no position') from None


def layout_step(state, graph, proximity=None):
    """One damped spring-embedder step over the beacons of ``graph``.

    ``proximity`` maps beacon to ``{station: weight}``. Beacons outside the
    graph keep their positions.
    """
    params = state.params
    beacons = sorted(graph.nodes)
    pos = {b: _position(state, b) for b in beacons}
    force = {b: np.zeros(2) for b in beacons}

    for a, b, rest, beacon_pair in _springs(state, graph, proximity):
        if beacon_pair:
            f = _spring_force(pos[a], pos[b], rest, params.spring)
            force[a] += f
            force[b] -= f
        else:
            force[a] += _spring_force(pos[a], np.asarray(state.anchors[b]), rest, params.spring)

    if params.repulsion > 0:
        for i, a in enumerate(beacons):
            for b in beacons[i + 1:]:
                d = pos[a] - pos[b]
                dist = float(np.hypot(*d))
                if dist < MIN_DISTANCE:
                    continue
                f = params.repulsion / dist ** 2 * d / dist
                force[a] += f
                force[b] -= f

    positions = dict(state.positions)
    for b in beacons:
        xy = pos[b] + params.damping * force[b]
        positions[b] = (float(xy[0]), float(xy[1]))
    return LayoutState(positions, state.anchors, params)


def spring_energy(state, graph, proximity=None):
    """Potential energy stored in the contact and anchor springs."""
    energy = 0.0
    for a, b, rest, beacon_pair in _springs(state, graph, proximity):
        other = state.positions[b] if beacon_pair else state.anchors[b]
        dist = float(np.hypot(*(np.asarray(other) - np.asarray(state.positions[a]))))
        energy += 0.5 * state.params.spring * (dist - rest) ** 2
    return energy


def station_proximity(records, grid):
    """``{bin: {beacon: {station: packets relayed}}}``."""
    counts = defaultdict(Counter)
    for record in records:
        counts[(grid.bin_of(record.t), record.src)][record.station] += 1
    out = defaultdict(dict)
    for (k, beacon), by_station in sorted(counts.items()):
        out[k][beacon] = dict(sorted(by_station.items()))
    return dict(out)


def default_anchors(stations, radius=50.0):
    """Stations spread evenly on a circle, in id order."""
    stations = sorted(stations)
    angles = np.linspace(0.0, 2 * np.pi, num=len(stations), endpoint=False)
    return {s: (round(radius * float(np.cos(a)), 6), round(radius * float(np.sin(a)), 6))
            for s, a in zip(stations, angles)}


def station_label(station):
    return f'S{station}'


def emit_frames(graphs, anchors, path, rng, steps_per_frame=10, proximity=None,
                params=None, header_lines=()):
    """Relax the layout on each graph in turn, writing one frame per graph.

    A frame is ``# frame <bin>`` followed by ``id,x,y`` rows for the beacons
    of that window, then for every station (``S<id>``).
    """
    graphs = list(graphs)
    if not graphs:
        raise InsufficientDataError('no windows to lay out')
    if steps_per_frame < 1:
        raise ConfigurationError(f'steps per frame must be at least 1, got {steps_per_frame}')
    proximity = proximity or {}
    state = init_layout((), anchors, rng, params)

    with open(path, 'w', encoding='utf-8') as handle:
        for line in header_lines:
            handle.write(f'# {line}\n')
        for graph in graphs:
            state.place(graph.nodes, rng)
            near = proximity.get(graph.bin, {})
            for _ in range(steps_per_frame):
                state = layout_step(state, graph, near)
            handle.write(f'# frame {graph.bin}\n')
            for beacon in sorted(graph.nodes):
                x, y = state.positions[beacon]
                handle.write(f'{beacon},{x:.6f},{y:.6f}\n')
            for station, (x, y) in sorted(state.anchors.items()):
                handle.write(f'{station_label(station)},{x:.6f},{y:.6f}\n')
    logger.info('wrote %d layout frames to %s', len(graphs), path)
    return len(graphs)


def read_frames(path):
    """``{bin: {id: (x, y)}}`` from a frame file; station ids keep their ``S`` prefix."""
    frames = {}
    current = None
    with open(path, encoding='utf-8') as handle:
        for line in handle:
            line = line.strip()
            if line.startswith('# frame '):
                current = frames.setdefault(int(line.split()[2]), {})
            elif line and not line.startswith('#') and current is not None:
                ident, x, y = line.split(',')
                key = ident if ident.startswith('S') else int(ident)
                current[key] = (float(x), float(y))
    return frames
