"""
Per-pair, per-window packet counts: the intermediate every analysis reads.
"""
from collections import Counter, defaultdict
from functools import cached_property

from beacons.grid import pair_key


class BinContactMap:
    """Packet counts keyed by ``(PairKey, bin)``; zero counts are never stored."""

    def __init__(self, grid, counts=None):
        self.grid = grid
        self.counts = {key: n for key, n in (counts or {}).items() if n > 0}

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, BinContactMap):
            return NotImplemented
        return self.grid == other.grid and self.counts == other.counts

    def __repr__(self):
        return f'BinContactMap({self.grid!r}, {len(self.counts)} entries)'

    def get(self, pair, k):
        return self.counts.get((pair, k), 0)

    @cached_property
    def _by_pair(self):
        index = defaultdict(dict)
        for (pair, k), n in self.counts.items():
            index[pair][k] = n
        return {pair: dict(sorted(bins.items())) for pair, bins in sorted(index.items())}

    @cached_property
    def _by_bin(self):
        index = defaultdict(dict)
        for (pair, k), n in self.counts.items():
            index[k][pair] = n
        return {k: dict(sorted(edges.items())) for k, edges in sorted(index.items())}

    def pairs(self):
        return list(self._by_pair)

    def pair_bins(self, pair):
        """``{bin: count}`` for one pair, in bin order."""
        return self._by_pair.get(pair, {})

    def bins(self):
        """Bins with at least one packet, ascending."""
        return list(self._by_bin)

    def bin_edges(self, k):
        """``[(pair, count), ...]`` for one window, in pair order."""
        return list(self._by_bin.get(k, {}).items())

    def bin_range(self):
        if not self.counts:
            return None
        bins = self.bins()
        return bins[0], bins[-1]

    def beacons(self):
        found = set()
        for pair in self._by_pair:
            found.update(pair)
        return found

    def pair_total(self, pair, bins=None):
        counts = self.pair_bins(pair)
        if bins is None:
            return sum(counts.values())
        return sum(n for k, n in counts.items() if k in bins)

    def restrict(self, first_bin, last_bin):
        """Sub-map with bins in ``[first_bin, last_bin]``."""
        return BinContactMap(self.grid, {
            (pair, k): n for (pair, k), n in self.counts.items() if first_bin <= k <= last_bin
        })

    def merge(self, other):
        """Associative sum of two maps on the same grid."""
        if other.grid != self.grid:
            raise ValueError('cannot merge maps built on different grids')
        merged = Counter(self.counts)
        merged.update(other.counts)
        return BinContactMap(self.grid, merged)


def bin_pair_counts(records, grid):
    """Count, per window, the records in which one beacon of a pair lists the other.

    A record contributes one packet to every pair it witnesses (its source
    with each seen beacon); records without ``seen`` add nothing.
    """
    counts = Counter()
    for record in records:
        if not record.seen:
            continue
        k = grid.bin_of(record.t)
        for other in record.seen:
            counts[(pair_key(record.src, other), k)] += 1
    return BinContactMap(grid, counts)
