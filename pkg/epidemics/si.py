"""
Susceptible-Infected contagion emulated on the binned contact stream.

In every window a susceptible beacon sharing an edge of weight ``w`` with an
infectious one is infected with probability ``min(1, beta * w)``, one
independent draw per infectious neighbour. Updates are synchronous: whoever
is infected during window ``k`` becomes infectious from window ``k + 1``.
There is no recovery; immune beacons never change state.
"""
import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx
import numpy as np

from core.exceptions import ConfigurationError, InsufficientDataError

logger = logging.getLogger(__name__)


class Compartment(str, enum.Enum):
    SUSCEPTIBLE = 'S'
    INFECTED = 'I'
    IMMUNE = 'R'


@dataclass(frozen=True)
class EpidemicParams:
    beta: float = 0.01
    immune_frac: float = 0.0
    rng_seed: int = 0
    # fixed initial infective; drawn at random when None
    seed_beacon: int = None

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigurationError(f'beta must be non-negative, got {self.beta}')
        if not 0 <= self.immune_frac < 1:
            raise ConfigurationError(f'immune fraction must lie in [0, 1), got {self.immune_frac}')

    def probability(self, w):
        return min(1.0, self.beta * w)


class InfectionEvent(NamedTuple):
    bin: int
    infector: int
    infectee: int


@dataclass(frozen=True)
class EpidemicState:
    compartments: dict
    # beacon -> window of infection; the seed's is the window before the run starts
    infection_time: dict = field(default_factory=dict)

    def of(self, beacon):
        return self.compartments[beacon]

    def infected(self):
        return sorted(b for b, c in self.compartments.items() if c is Compartment.INFECTED)

    def immune(self):
        return sorted(b for b, c in self.compartments.items() if c is Compartment.IMMUNE)

    @property
    def n_infected(self):
        return sum(1 for c in self.compartments.values() if c is Compartment.INFECTED)


@dataclass
class EpidemicTrace:
    # [(bin, n_infected after the window)]
    series: list
    events: list
    seed: int
    immune: list
    start_bin: int = 0

    @property
    def final_infected(self):
        return self.series[-1][1] if self.series else 1


def _n_immune(n, frac):
    # round half up
    return int(np.floor(frac * n + 0.5))


def init_epidemic(beacons, params, rng, start_bin=0):
    """Sample the immune set, then one infectious seed among the rest."""
    beacons = sorted(set(beacons))
    if not beacons:
        raise InsufficientDataError('no beacons to run the epidemic on')
    if params.seed_beacon is not None and params.seed_beacon not in beacons:
        raise ConfigurationError(f'seed beacon {params.seed_beacon} is not in the data')

    candidates = [b for b in beacons if b != params.seed_beacon]
    n_immune = _n_immune(len(beacons), params.immune_frac)
    if n_immune > len(candidates):
        raise ConfigurationError('every beacon would be immune')
    picked = rng.choice(len(candidates), size=n_immune, replace=False) if n_immune else []
    immune = {candidates[i] for i in picked}

    susceptible = [b for b in beacons if b not in immune]
    if not susceptible:
        raise ConfigurationError('every beacon would be immune')
    seed = params.seed_beacon
    if seed is None:
        seed = susceptible[int(rng.integers(len(susceptible)))]

    compartments = {}
    for b in beacons:
        if b in immune:
            compartments[b] = Compartment.IMMUNE
        elif b == seed:
            compartments[b] = Compartment.INFECTED
        else:
            compartments[b] = Compartment.SUSCEPTIBLE
    return EpidemicState(compartments, {seed: start_bin - 1})


def step_si(state, bin_edges, params, rng, k=0):
    """Advance one window; returns ``(state, [InfectionEvent, ...])``.

    ``bin_edges`` is ``[(PairKey, w), ...]`` for window ``k``. Edges touching
    beacons outside the population are ignored.
    """
    exposures = {}
    compartments = state.compartments
    for (a, b), w in sorted(bin_edges):
        ca, cb = compartments.get(a), compartments.get(b)
        if ca is Compartment.SUSCEPTIBLE and cb is Compartment.INFECTED:
            s, i = a, b
        elif cb is Compartment.SUSCEPTIBLE and ca is Compartment.INFECTED:
            s, i = b, a
        else:
            continue
        p = params.probability(w)
        if p > 0 and rng.random() < p:
            exposures.setdefault(s, []).append(i)

    if not exposures:
        return state, []

    events = []
    updated = dict(compartments)
    times = dict(state.infection_time)
    for s in sorted(exposures):
        infectors = exposures[s]
        infector = infectors[int(rng.integers(len(infectors)))] if len(infectors) > 1 else infectors[0]
        updated[s] = Compartment.INFECTED
        times[s] = k
        events.append(InfectionEvent(k, infector, s))
    return EpidemicState(updated, times), events


def _bin_range(contact_map, bins):
    if bins is not None:
        bins = list(bins)
        if not bins:
            raise InsufficientDataError('empty window range')
        return bins
    span = contact_map.bin_range()
    if span is None:
        raise InsufficientDataError('no contacts to run the epidemic on')
    return range(span[0], span[1] + 1)


def run_si(contact_map, params, beacons=None, bins=None, rng=None):
    """One stochastic realisation over every window of ``bins`` (default: the whole map)."""
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
    bins = _bin_range(contact_map, bins)
    population = beacons if beacons is not None else contact_map.beacons()
    state = init_epidemic(population, params, rng, start_bin=bins[0])
    seed = state.infected()[0]

    series, events = [], []
    for k in bins:
        state, new = step_si(state, contact_map.bin_edges(k), params, rng, k)
        events.extend(new)
        series.append((k, state.n_infected))
    logger.debug('SI run seed=%s beacon=%s: %d infected over %d windows',
                 params.rng_seed, seed, state.n_infected, len(series))
    return EpidemicTrace(series, events, seed, state.immune(), bins[0])


def run_many(contact_map, params, runs, beacons=None, bins=None):
    """Independent realisations on spawned random streams."""
    if runs < 1:
        raise ConfigurationError(f'runs must be at least 1, got {runs}')
    children = np.random.SeedSequence(params.rng_seed).spawn(runs)
    return [run_si(contact_map, params, beacons, bins, np.random.default_rng(child))
            for child in children]


def transmission_tree(trace):
    """Who-infected-whom as a ``DiGraph`` rooted at the seed."""
    tree = nx.DiGraph()
    tree.add_node(trace.seed, infection_bin=trace.start_bin - 1, seed=True)
    for event in trace.events:
        tree.add_node(event.infectee, infection_bin=event.bin, seed=False)
        tree.add_edge(event.infector, event.infectee, bin=event.bin)
    return tree


def format_tree(tree, grid=None):
    """Indented text, children ordered by infection window then id."""
    root = next(n for n, seed in tree.nodes(data='seed') if seed)
    lines = []

    def visit(node, depth):
        k = tree.nodes[node]['infection_bin']
        when = f'bin {k}' if grid is None else f'bin {k} t={grid.bin_start(k):g}'
        suffix = ' (seed)' if depth == 0 else ''
        lines.append(f"{'  ' * depth}{node} {when}{suffix}")
        for child in sorted(tree.successors(node), key=lambda c: (tree.nodes[c]['infection_bin'], c)):
            visit(child, depth + 1)

    visit(root, 0)
    return '\n'.join(lines)


def infections_by_phase(traces, phase_of_bin):
    """Secondary infections per phase kind, summed over runs."""
    tally = Counter()
    for trace in traces:
        for event in trace.events:
            tally[phase_of_bin.get(event.bin, 'overnight')] += 1
    return dict(sorted(tally.items()))
