from dataclasses import dataclass, field

from core.exceptions import ProtocolViolation

# the beacon firmware reports at most four simultaneous contacts
MAX_SEEN = 4


@dataclass(frozen=True, order=True, slots=True)
class PacketRecord:
    """One report relayed by a station.

    Ordering is (t, station, src, seen), the total order used for sorted
    streams.
    """

    t: float
    station: int
    src: int
    seen: tuple = field(default=())

    def __post_init__(self):
        if not isinstance(self.seen, tuple):
            object.__setattr__(self, 'seen', tuple(self.seen))
        if len(self.seen) > MAX_SEEN:
            raise ProtocolViolation(f'{len(self.seen)} seen beacons, at most {MAX_SEEN} allowed')
        if self.src in self.seen:
            raise ProtocolViolation(f'beacon {self.src} lists itself as seen')
        if len(set(self.seen)) != len(self.seen):
            raise ProtocolViolation(f'duplicate seen beacons in {list(self.seen)}')

    @property
    def is_contact(self):
        return bool(self.seen)

    def beacons(self):
        return (self.src,) + self.seen
