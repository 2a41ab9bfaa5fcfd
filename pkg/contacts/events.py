"""
Contact events and the statistics derived from them.

A contact event is a maximal run of consecutive windows in which a pair
exchanged at least ``threshold`` packets; one window below threshold ends it.
"""
from collections import defaultdict
from dataclasses import dataclass

from core.exceptions import ConfigurationError


@dataclass(frozen=True, order=True)
class ContactEvent:
    # field order gives the (start, pair) tie-break
    first_bin: int
    pair: tuple
    last_bin: int
    total_packets: int
    bin_width: float = 20.0

    @property
    def n_bins(self):
        return self.last_bin - self.first_bin + 1

    @property
    def duration(self):
        return self.n_bins * self.bin_width

    @property
    def start(self):
        """Start in seconds from the grid origin."""
        return self.first_bin * self.bin_width

    @property
    def end(self):
        """End (exclusive) in seconds from the grid origin."""
        return (self.last_bin + 1) * self.bin_width


def detect_contacts(contact_map, threshold=1):
    """Segment every pair's windows into contact events, sorted by (start, pair)."""
    if threshold < 1:
        raise ConfigurationError(f'threshold must be at least 1 packet, got {threshold}')
    width = contact_map.grid.bin_width
    events = []
    for pair in contact_map.pairs():
        run_start = previous = None
        packets = 0
        for k, n in contact_map.pair_bins(pair).items():
            if n < threshold:
                continue
            if previous is not None and k == previous + 1:
                packets += n
            else:
                if previous is not None:
                    events.append(ContactEvent(run_start, pair, previous, packets, width))
                run_start, packets = k, n
            previous = k
        if previous is not None:
            events.append(ContactEvent(run_start, pair, previous, packets, width))
    events.sort()
    return events


def contact_durations(events):
    return [e.duration for e in events]


def intercontact_global(events):
    """Start-to-start differences of all events, regardless of the beacons."""
    starts = sorted(e.start for e in events)
    return [b - a for a, b in zip(starts, starts[1:])]


def _gaps(grouped):
    samples = []
    for key in sorted(grouped):
        ordered = sorted(grouped[key], key=lambda e: (e.first_bin, e.last_bin, e.pair))
        for prev, nxt in zip(ordered, ordered[1:]):
            gap = nxt.start - prev.end
            if gap > 0:
                samples.append(gap)
    return samples


def intercontact_per_beacon(events):
    """End-to-start gaps between consecutive events of each beacon.

    Overlapping or abutting events yield no sample.
    """
    grouped = defaultdict(list)
    for event in events:
        for beacon in event.pair:
            grouped[beacon].append(event)
    return _gaps(grouped)


def intercontact_per_pair(events):
    """End-to-start gaps between consecutive events of each pair."""
    grouped = defaultdict(list)
    for event in events:
        grouped[event.pair].append(event)
    return _gaps(grouped)


INTERVAL_MEASURES = {
    'durations': contact_durations,
    'global': intercontact_global,
    'per-beacon': intercontact_per_beacon,
    'per-pair': intercontact_per_pair,
}


def events_involving(events, beacons, both=True):
    """Events among a subset of beacons (both ends by default, else either end)."""
    beacons = set(beacons)
    if both:
        return [e for e in events if e.pair[0] in beacons and e.pair[1] in beacons]
    return [e for e in events if e.pair[0] in beacons or e.pair[1] in beacons]
