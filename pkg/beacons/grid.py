"""
Identifiers, the analysis time grid and canonical beacon pairs.

Every other module keys its data on these types, so they are all immutable.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple, NewType

from core.exceptions import ConfigurationError, OutOfRangeError, SelfContactError

BeaconId = NewType('BeaconId', int)
StationId = NewType('StationId', int)
BinIndex = NewType('BinIndex', int)

DEFAULT_BIN_WIDTH = 20.0


@dataclass(frozen=True)
class TimeGrid:
    """Fixed windows ``[origin + k*bin_width, origin + (k+1)*bin_width)``."""

    origin: float = 0.0
    bin_width: float = DEFAULT_BIN_WIDTH

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ConfigurationError(f'bin width must be positive, got {self.bin_width}')

    @classmethod
    def for_stream(cls, t_min, bin_width=DEFAULT_BIN_WIDTH):
        """Grid whose origin is the stream start rounded down to a whole bin."""
        if bin_width <= 0:
            raise ConfigurationError(f'bin width must be positive, got {bin_width}')
        return cls(origin=math.floor(t_min / bin_width) * bin_width, bin_width=bin_width)

    def bin_of(self, t):
        if t < self.origin:
            raise OutOfRangeError(f'timestamp {t} precedes grid origin {self.origin}')
        k = math.floor((t - self.origin) / self.bin_width)
        # the quotient can round across a boundary; bin_start(k) <= t < bin_start(k + 1)
        if self.bin_start(k + 1) <= t:
            k += 1
        elif self.bin_start(k) > t:
            k -= 1
        return BinIndex(k)

    def bin_start(self, k):
        return self.origin + k * self.bin_width

    def bin_end(self, k):
        return self.origin + (k + 1) * self.bin_width

    def bins_in(self, t0, t1):
        """Bins whose start lies in ``[t0, t1)``."""
        first = max(0, math.ceil((t0 - self.origin) / self.bin_width))
        last = math.ceil((t1 - self.origin) / self.bin_width)
        return range(first, max(first, last))


class PairKey(NamedTuple):
    """Unordered beacon pair stored as ``lo < hi``."""

    lo: BeaconId
    hi: BeaconId


def bin_of(t, grid):
    return grid.bin_of(t)


def pair_key(a, b):
    if a == b:
        raise SelfContactError(f'beacon {a} cannot be in contact with itself')
    return PairKey(a, b) if a < b else PairKey(b, a)
