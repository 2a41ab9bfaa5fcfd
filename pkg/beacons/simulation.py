"""
Synthetic conference scenarios.

Agents wear beacons and move between rooms following a daily schedule of
sessions, coffee breaks and lunch. Idle agents start small conversation
groups whose lifetimes follow a discrete power law; every pair inside a
group exchanges Poisson-distributed report packets per time window. Present
agents are also sighted by their room's station with empty ``seen`` lists.

The generator is deterministic: the stream is a pure function of the
config, seed included.
"""
import bisect
import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from faker import Faker

from contacts.powerlaw import DiscretePowerLaw
from core.exceptions import ConfigurationError
from .grid import TimeGrid
from .ingest import SECONDS_PER_DAY
from .packets import MAX_SEEN, PacketRecord

logger = logging.getLogger(__name__)

PHASE_KINDS = ('session', 'break', 'lunch')
OVERNIGHT = 'overnight'

ROLES = ('professor', 'researcher', 'postdoc', 'student')

HOUR = 3600.0

DEFAULT_ROOMS = (
    (1, 'conference'),
    (2, 'bar'),
    (3, 'cafeteria'),
    (4, 'lobby'),
)

# four sessions separated by two coffee breaks and a lunch break
DEFAULT_SCHEDULE = (
    (9.0 * HOUR, 10.5 * HOUR, 'session'),
    (10.5 * HOUR, 11.0 * HOUR, 'break'),
    (11.0 * HOUR, 12.5 * HOUR, 'session'),
    (12.5 * HOUR, 14.0 * HOUR, 'lunch'),
    (14.0 * HOUR, 15.5 * HOUR, 'session'),
    (15.5 * HOUR, 16.0 * HOUR, 'break'),
    (16.0 * HOUR, 17.5 * HOUR, 'session'),
)

DEFAULT_OCCUPANCY = {
    'session': {'conference': 0.94, 'lobby': 0.04, 'bar': 0.02},
    'break': {'bar': 0.8, 'lobby': 0.14, 'conference': 0.06},
    'lunch': {'cafeteria': 0.84, 'bar': 0.1, 'lobby': 0.06},
}

DEFAULT_START_PROB = {'session': 0.004, 'break': 0.08, 'lunch': 0.06}

MIN_SESSION_SHARE = 0.9


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int = 50
    days: int = 4
    rooms: tuple = DEFAULT_ROOMS
    # (start, end, kind), seconds from the start of each day
    schedule: tuple = DEFAULT_SCHEDULE
    occupancy: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_OCCUPANCY.items()})
    duration_exponent: float = 2.0
    min_duration: int = 1
    max_duration: int = 90
    # weights of group sizes 2, 3 and 4
    group_size_weights: tuple = (0.6, 0.3, 0.1)
    contact_start_prob: dict = field(default_factory=lambda: dict(DEFAULT_START_PROB))
    packets_per_bin_mean: float = 8.0
    packet_loss_prob: float = 0.1
    sightings_per_bin_mean: float = 3.0
    bin_width: float = 20.0
    beacon_id_base: int = 4500
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'rooms', tuple((int(s), str(n)) for s, n in self.rooms))
        object.__setattr__(self, 'schedule', tuple(
            sorted((float(a), float(b), str(k)) for a, b, k in self.schedule)))
        object.__setattr__(self, 'group_size_weights', tuple(float(w) for w in self.group_size_weights))
        self.validate()

    def validate(self):
        if self.n_agents < 0:
            raise ConfigurationError('n_agents must be non-negative')
        if self.days < 0:
            raise ConfigurationError('days must be non-negative')
        if not self.duration_exponent > 1:
            raise ConfigurationError(f'duration_exponent must exceed 1, got {self.duration_exponent}')
        if self.min_duration < 1 or self.max_duration < self.min_duration:
            raise ConfigurationError(
                f'invalid duration bounds [{self.min_duration}, {self.max_duration}]')
        if len(self.group_size_weights) != MAX_SEEN - 1:
            raise ConfigurationError('group_size_weights needs one weight per group size 2, 3 and 4')
        if any(w < 0 for w in self.group_size_weights) or abs(sum(self.group_size_weights) - 1) > 1e-9:
            raise ConfigurationError('group_size_weights must be non-negative and sum to 1')
        if not self.packets_per_bin_mean > 0:
            raise ConfigurationError('packets_per_bin_mean must be positive')
        if self.sightings_per_bin_mean < 0:
            raise ConfigurationError('sightings_per_bin_mean must be non-negative')
        if not 0 <= self.packet_loss_prob <= 1:
            raise ConfigurationError('packet_loss_prob must lie in [0, 1]')
        if not self.bin_width > 0:
            raise ConfigurationError('bin_width must be positive')

        stations = [s for s, _ in self.rooms]
        names = [n for _, n in self.rooms]
        if not self.rooms:
            raise ConfigurationError('at least one room is required')
        if len(set(stations)) != len(stations) or len(set(names)) != len(names):
            raise ConfigurationError('room stations and names must be unique')

        for kind in PHASE_KINDS:
            prob = self.contact_start_prob.get(kind)
            if prob is None or not 0 <= prob <= 1:
                raise ConfigurationError(f'contact_start_prob[{kind}] must lie in [0, 1]')

        previous_end = None
        for start, end, kind in self.schedule:
            if kind not in PHASE_KINDS:
                raise ConfigurationError(f"unknown phase kind '{kind}'")
            if not 0 <= start < end <= SECONDS_PER_DAY:
                raise ConfigurationError(f'phase [{start}, {end}) must lie within one day')
            if previous_end is not None and start < previous_end:
                raise ConfigurationError(f'phase starting at {start} overlaps the previous one')
            previous_end = end
            if kind not in self.occupancy:
                raise ConfigurationError(f"no occupancy rule for phase kind '{kind}'")

        for kind, shares in self.occupancy.items():
            unknown = set(shares) - set(names)
            if unknown:
                raise ConfigurationError(f"occupancy[{kind}] names unknown room(s) {sorted(unknown)}")
            if any(s < 0 for s in shares.values()) or abs(sum(shares.values()) - 1) > 1e-9:
                raise ConfigurationError(f'occupancy[{kind}] shares must be non-negative and sum to 1')
        if 'session' in self.occupancy and max(self.occupancy['session'].values()) < MIN_SESSION_SHARE:
            raise ConfigurationError(
                f'sessions must seat at least {MIN_SESSION_SHARE:.0%} of agents in one room')

    @property
    def grid(self):
        return TimeGrid(0.0, self.bin_width)

    @property
    def stations(self):
        return {station: name for station, name in self.rooms}

    def station_of(self, room_name):
        for station, name in self.rooms:
            if name == room_name:
                return station
        raise ConfigurationError(f"unknown room '{room_name}'")

    def beacon_ids(self):
        return [self.beacon_id_base + i for i in range(self.n_agents)]

    def phases(self):
        """Every scheduled phase of the scenario, in time order."""
        out = []
        for day in range(self.days):
            offset = day * SECONDS_PER_DAY
            for start, end, kind in self.schedule:
                rule = tuple((self.station_of(room), share)
                             for room, share in sorted(self.occupancy[kind].items()))
                out.append(Phase(kind, day, offset + start, offset + end, rule))
        return out


@dataclass(frozen=True)
class Phase:
    kind: str
    day: int
    start: float
    end: float
    # (station, share of agents) placed in each room at phase start
    occupancy: tuple = ()

    @property
    def emits(self):
        return self.kind != OVERNIGHT

    def contains(self, t):
        return self.start <= t < self.end


def schedule_phase(t, config, phases=None):
    """The phase containing ``t``; gaps between phases are ``overnight``."""
    phases = phases if phases is not None else config.phases()
    starts = [p.start for p in phases]
    i = bisect.bisect_right(starts, t) - 1
    if i >= 0 and phases[i].contains(t):
        return phases[i]
    gap_start = phases[i].end if i >= 0 else float('-inf')
    gap_end = phases[i + 1].start if i + 1 < len(phases) else float('inf')
    return Phase(OVERNIGHT, int(t // SECONDS_PER_DAY), gap_start, gap_end)


def phase_of_bins(config, grid=None):
    """Map bin index to phase kind for every scheduled bin."""
    grid = grid or config.grid
    kinds = {}
    for phase in config.phases():
        for k in grid.bins_in(phase.start, phase.end):
            kinds[k] = phase.kind
    return kinds


def sample_contact_duration(rng, alpha, dmin, dmax):
    """Number of windows a conversation lasts, p(d) proportional to d**-alpha."""
    if dmin < 1 or dmax < dmin:
        raise ConfigurationError(f'invalid duration bounds [{dmin}, {dmax}]')
    if dmin == dmax:
        return int(dmin)
    return DiscretePowerLaw(alpha, dmin, dmax).rvs(rng)


def room_quotas(n, shares):
    """Split ``n`` agents over rooms by largest remainder."""
    raw = [(station, share * n) for station, share in shares]
    counts = {station: int(np.floor(x)) for station, x in raw}
    left = n - sum(counts.values())
    by_remainder = sorted(raw, key=lambda sx: (-(sx[1] - np.floor(sx[1])), sx[0]))
    for station, _ in by_remainder[:left]:
        counts[station] += 1
    return counts


def agent_labels(config):
    """Country of affiliation and academic role for every beacon."""
    fake = Faker()
    fake.seed_instance(config.rng_seed)
    return {
        beacon: {'country': fake.country_code(), 'role': fake.random_element(ROLES)}
        for beacon in config.beacon_ids()
    }


class _Group:
    __slots__ = ('members', 'pairs', 'remaining', 'station')

    def __init__(self, members, remaining, station):
        self.members = tuple(sorted(members))
        self.pairs = list(combinations(self.members, 2))
        self.remaining = remaining
        self.station = station


class ScenarioGenerator:
    """Stateful walk through a scenario; iterate it for the packet stream."""

    def __init__(self, config):
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.grid = config.grid
        self.beacons = config.beacon_ids()
        self.durations = DiscretePowerLaw(config.duration_exponent, config.min_duration,
                                          config.max_duration)
        self.group_sizes = np.arange(2, MAX_SEEN + 1)
        self.stats = {'groups': 0, 'contact_packets': 0, 'sighting_packets': 0}

    def __iter__(self):
        if not self.beacons:
            return
        for phase in self.config.phases():
            yield from self._run_phase(phase)
        logger.info('scenario seed=%s: %s groups, %s contact packets, %s sightings',
                    self.config.rng_seed, self.stats['groups'],
                    self.stats['contact_packets'], self.stats['sighting_packets'])

    def _assign_rooms(self, phase):
        quotas = room_quotas(len(self.beacons), phase.occupancy)
        order = self.rng.permutation(len(self.beacons))
        room_of = {}
        cursor = 0
        for station, _ in phase.occupancy:
            for i in order[cursor:cursor + quotas[station]]:
                room_of[self.beacons[i]] = station
            cursor += quotas[station]
        return room_of

    def _form_groups(self, idle, room_of, start_prob):
        if not idle:
            return []
        order = [idle[i] for i in self.rng.permutation(len(idle))]
        draws = self.rng.random(len(order))
        taken = set()
        groups = []
        for agent, u in zip(order, draws):
            if agent in taken or u >= start_prob:
                continue
            size = int(self.rng.choice(self.group_sizes, p=self.config.group_size_weights))
            station = room_of[agent]
            candidates = [a for a in idle if a not in taken and a != agent and room_of[a] == station]
            if not candidates:
                continue
            k = min(size - 1, len(candidates))
            picked = self.rng.choice(len(candidates), size=k, replace=False)
            members = [agent] + [candidates[i] for i in sorted(picked)]
            taken.update(members)
            groups.append(_Group(members, self.durations.rvs(self.rng), station))
        self.stats['groups'] += len(groups)
        return groups

    def _times(self, t0, n):
        """Uniform millisecond timestamps inside the window starting at t0."""
        offsets = np.floor(self.rng.random(n) * self.grid.bin_width * 1000) / 1000
        return (t0 + offsets).tolist()

    def _emit(self, k, groups, room_of):
        cfg = self.config
        t0 = self.grid.bin_start(k)
        keep = 1.0 - cfg.packet_loss_prob
        records = []

        pairs = [(a, b, g.station) for g in groups for a, b in g.pairs]
        if pairs:
            sent = self.rng.poisson(cfg.packets_per_bin_mean, len(pairs))
            delivered = self.rng.binomial(sent, keep)
            total = int(delivered.sum())
            times = self._times(t0, total)
            flips = self.rng.random(total) < 0.5
            cursor = 0
            for (a, b, station), n in zip(pairs, delivered):
                for j in range(cursor, cursor + int(n)):
                    src, other = (a, b) if flips[j] else (b, a)
                    records.append(PacketRecord(times[j], station, src, (other,)))
                cursor += int(n)
            self.stats['contact_packets'] += total

        if cfg.sightings_per_bin_mean > 0:
            sent = self.rng.poisson(cfg.sightings_per_bin_mean, len(self.beacons))
            delivered = self.rng.binomial(sent, keep)
            total = int(delivered.sum())
            times = self._times(t0, total)
            cursor = 0
            for beacon, n in zip(self.beacons, delivered):
                station = room_of[beacon]
                for j in range(cursor, cursor + int(n)):
                    records.append(PacketRecord(times[j], station, beacon))
                cursor += int(n)
            self.stats['sighting_packets'] += total

        records.sort()
        return records

    def _run_phase(self, phase):
        # conversations do not survive a change of phase
        room_of = self._assign_rooms(phase)
        start_prob = self.config.contact_start_prob[phase.kind]
        groups = []
        busy = set()
        resting = set()
        for k in self.grid.bins_in(phase.start, phase.end):
            idle = [a for a in self.beacons if a not in busy and a not in resting]
            for group in self._form_groups(idle, room_of, start_prob):
                groups.append(group)
                busy.update(group.members)

            records = self._emit(k, groups, room_of)

            resting = set()
            still_active = []
            for group in groups:
                group.remaining -= 1
                if group.remaining > 0:
                    still_active.append(group)
                else:
                    busy.difference_update(group.members)
                    resting.update(group.members)
            groups = still_active
            yield from records


def generate_scenario(config):
    """Time-ordered packet stream of a scenario."""
    return iter(ScenarioGenerator(config))
