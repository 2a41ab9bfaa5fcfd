"""
Steps shared by the analysis commands: load a packet file, apply the beacon
dropout and day window, and put the stream on its analysis grid.
"""
import logging
from dataclasses import dataclass, field

from beacons.grid import TimeGrid
from beacons.ingest import day_window, drop_beacons, read_packets, select_beacons, slice_stream, validate_stream
from beacons.serializers import scenario_fields, scenario_from_mapping
from contacts.binning import bin_pair_counts
from .exceptions import InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass
class LoadedStream:
    records: list
    meta: object
    warnings: list = field(default_factory=list)
    dropped: set = field(default_factory=set)
    grid: TimeGrid = None

    @property
    def beacons(self):
        return set(self.meta.beacons)

    def contact_map(self):
        return bin_pair_counts(self.records, self.grid)

    def summary(self):
        out = self.meta.as_dict()
        out['warnings'] = len(self.warnings)
        out['dropped_beacons'] = sorted(self.dropped)
        if self.grid is not None:
            out['grid_origin'] = self.grid.origin
        return out


def load_stream(path, fmt=None, drop=None, day=None, bin_width=20.0, known_stations=None):
    """Read and validate ``path``; ``drop`` is a ``--drop-beacons`` value."""
    validated = validate_stream(read_packets(path, fmt), known_stations)
    records = validated.records
    dropped = set()
    if drop:
        dropped = select_beacons(drop, validated.meta.beacons)
        records = drop_beacons(records, dropped)
        logger.info('dropped %d beacon(s) from %s', len(dropped), path)
    if day is not None:
        records = slice_stream(records, *day_window(day))
    meta = validated.meta
    if drop or day is not None:
        # re-summarise what is left; already sorted and unique
        meta = validate_stream(records).meta
    grid = None
    if records:
        grid = TimeGrid.for_stream(records[0].t, bin_width)
    return LoadedStream(records, meta, validated.warnings, dropped, grid)


def require_records(stream, what='analysis'):
    if not stream.records:
        raise InsufficientDataError(f'no records left for {what}')
    return stream


def scenario_from_extra(extra):
    """Scenario config from the non-option keys of a ``--config`` file, if any."""
    keys = {k: v for k, v in extra.items() if k in scenario_fields()}
    if not keys:
        return None
    return scenario_from_mapping(keys)
