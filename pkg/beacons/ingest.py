"""
Packet stream files: parsing, serialisation, validation and beacon dropout.

Two line formats are supported:

* ``csv``   header ``t,station,src,seen1,seen2,seen3,seen4``; unused seen
  slots are left blank.
* ``jsonl`` one object per line with keys ``t``, ``station``, ``src`` and
  ``seen`` (list of up to four ids).

Lines starting with ``#`` are comments (output files open with the resolved
run configuration) and are skipped on read.
"""
import csv
import gzip
import io
import json
import logging
import math
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from core.exceptions import ConfigurationError, PacketParseError, ProtocolViolation
from .packets import MAX_SEEN, PacketRecord

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'jsonl')
CSV_HEADER = ['t', 'station', 'src'] + [f'seen{i}' for i in range(1, MAX_SEEN + 1)]

SECONDS_PER_DAY = 86400.0


def detect_format(path):
    """Guess the line format from the file name (``.gz`` is looked through)."""
    suffixes = [s.lower() for s in Path(path).suffixes if s.lower() != '.gz']
    if suffixes and suffixes[-1] in ('.jsonl', '.ndjson', '.json'):
        return 'jsonl'
    return 'csv'


def _check_format(fmt):
    if fmt not in FORMATS:
        raise ConfigurationError(f"unknown packet format '{fmt}', expected one of {', '.join(FORMATS)}")


def _parse_int(value, name, line_no):
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise PacketParseError(f'{name} is not an integer: {value!r}', line_no) from None
    if number < 0:
        raise PacketParseError(f'{name} must be non-negative, got {number}', line_no)
    return number


def _parse_time(value, line_no):
    try:
        t = float(value)
    except (TypeError, ValueError):
        raise PacketParseError(f't is not a number: {value!r}', line_no) from None
    if not math.isfinite(t):
        raise PacketParseError(f't must be finite, got {value!r}', line_no)
    return t


def _record(t, station, src, seen, line_no):
    if len(seen) > MAX_SEEN:
        raise ProtocolViolation(f'{len(seen)} seen beacons, at most {MAX_SEEN} allowed', line_no)
    try:
        return PacketRecord(t, station, src, tuple(seen))
    except ProtocolViolation as exc:
        raise ProtocolViolation(str(exc), line_no) from None


def parse_packet_line(line, fmt='csv', line_no=None):
    """Parse one line in ``fmt`` into a validated ``PacketRecord``."""
    _check_format(fmt)
    line = line.strip()
    if not line:
        raise PacketParseError('empty line', line_no)

    if fmt == 'csv':
        fields = [f.strip() for f in line.split(',')]
        if len(fields) < 3:
            raise PacketParseError(f'expected at least 3 fields, got {len(fields)}', line_no)
        t = _parse_time(fields[0], line_no)
        station = _parse_int(fields[1], 'station', line_no)
        src = _parse_int(fields[2], 'src', line_no)
        seen = [_parse_int(f, 'seen', line_no) for f in fields[3:] if f]
        return _record(t, station, src, seen, line_no)

    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise PacketParseError(f'invalid JSON: {exc.msg}', line_no) from None
    if not isinstance(obj, dict):
        raise PacketParseError('expected a JSON object', line_no)
    missing = [key for key in ('t', 'station', 'src') if key not in obj]
    if missing:
        raise PacketParseError(f"missing key(s): {', '.join(missing)}", line_no)
    if isinstance(obj['t'], bool) or not isinstance(obj['t'], (int, float)):
        raise PacketParseError(f"t is not a number: {obj['t']!r}", line_no)
    for key in ('station', 'src'):
        if isinstance(obj[key], bool) or not isinstance(obj[key], int):
            raise PacketParseError(f'{key} is not an integer: {obj[key]!r}', line_no)
    seen = obj.get('seen', [])
    if not isinstance(seen, list) or any(isinstance(s, bool) or not isinstance(s, int) for s in seen):
        raise PacketParseError(f'seen must be a list of integers, got {seen!r}', line_no)
    t = _parse_time(obj['t'], line_no)
    station = _parse_int(obj['station'], 'station', line_no)
    src = _parse_int(obj['src'], 'src', line_no)
    seen = [_parse_int(s, 'seen', line_no) for s in seen]
    return _record(t, station, src, seen, line_no)


def format_time(t):
    return f'{round(t, 3):.3f}'


def serialize_packet(record, fmt='csv'):
    """Inverse of ``parse_packet_line`` (timestamps kept to the millisecond)."""
    _check_format(fmt)
    if fmt == 'csv':
        seen = [str(s) for s in record.seen] + [''] * (MAX_SEEN - len(record.seen))
        return ','.join([format_time(record.t), str(record.station), str(record.src)] + seen)
    return json.dumps({
        't': round(record.t, 3),
        'station': record.station,
        'src': record.src,
        'seen': list(record.seen),
    })


def _open_for_write(path):
    if str(path).endswith('.gz'):
        # a zero mtime keeps reruns byte-identical
        return io.TextIOWrapper(gzip.GzipFile(path, 'wb', mtime=0), encoding='utf-8', newline='')
    return open(path, 'w', encoding='utf-8', newline='')


def iter_packet_lines(lines, fmt='csv'):
    """Parse an iterable of text lines, skipping comments, blanks and the CSV header."""
    _check_format(fmt)
    header = ','.join(CSV_HEADER)
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        if fmt == 'csv' and stripped.replace(' ', '').startswith('t,station'):
            if stripped.replace(' ', '') != header:
                logger.warning('line %d: non-standard CSV header %r', line_no, stripped)
            continue
        yield parse_packet_line(stripped, fmt, line_no)


def _decoded_lines(handle):
    for line_no, raw in enumerate(handle, start=1):
        try:
            yield raw.decode('utf-8')
        except UnicodeDecodeError as exc:
            raise PacketParseError(f'not valid UTF-8 text ({exc.reason})', line_no) from None


def read_packets(path, fmt=None):
    """Read every record of a packet file.

    Undecodable bytes and corrupt gzip streams are data errors, not I/O errors.
    """
    fmt = fmt or detect_format(path)
    opener = gzip.open if str(path).endswith('.gz') else open
    with opener(path, 'rb') as handle:
        try:
            return list(iter_packet_lines(_decoded_lines(handle), fmt))
        except (gzip.BadGzipFile, EOFError, zlib.error) as exc:
            raise PacketParseError(f'corrupt gzip stream: {str(exc) or type(exc).__name__}') from None


def write_packets(records, path, fmt=None, header_lines=()):
    """Write records (plus ``# `` header lines); returns the number written."""
    fmt = fmt or detect_format(path)
    _check_format(fmt)
    count = 0
    with _open_for_write(path) as handle:
        for line in header_lines:
            handle.write(f'# {line}\n')
        if fmt == 'csv':
            handle.write(','.join(CSV_HEADER) + '\n')
        for record in records:
            handle.write(serialize_packet(record, fmt) + '\n')
            count += 1
    return count


@dataclass
class StreamMeta:
    n_records: int = 0
    t_min: float = None
    t_max: float = None
    beacons: set = field(default_factory=set)
    stations: set = field(default_factory=set)
    n_contact_records: int = 0

    def as_dict(self):
        return {
            'n_records': self.n_records,
            't_min': self.t_min,
            't_max': self.t_max,
            'n_beacons': len(self.beacons),
            'n_stations': len(self.stations),
            'stations': sorted(self.stations),
            'n_contact_records': self.n_contact_records,
        }


@dataclass
class ValidatedStream:
    records: list
    meta: StreamMeta
    warnings: list


def validate_stream(records, known_stations=None):
    """Sort, deduplicate and summarise a parsed stream.

    Out-of-order input is repaired rather than rejected. Every repair and
    every unknown station produces one warning.
    """
    records = list(records)
    warnings = []

    out_of_order = sum(1 for prev, cur in zip(records, records[1:]) if cur < prev)
    if out_of_order:
        warnings.append(f'{out_of_order} out-of-order record(s) re-sorted')
        records.sort()

    unique = []
    duplicates = 0
    for record in records:
        if unique and unique[-1] == record:
            duplicates += 1
            continue
        unique.append(record)
    if duplicates:
        warnings.append(f'{duplicates} duplicate record(s) dropped')

    meta = StreamMeta(n_records=len(unique))
    if unique:
        meta.t_min = unique[0].t
        meta.t_max = unique[-1].t
    for record in unique:
        meta.beacons.add(record.src)
        meta.beacons.update(record.seen)
        meta.stations.add(record.station)
        if record.seen:
            meta.n_contact_records += 1

    if known_stations is not None:
        for station in sorted(meta.stations - set(known_stations)):
            warnings.append(f'unknown station {station}')

    for message in warnings:
        logger.warning(message)
    return ValidatedStream(records=unique, meta=meta, warnings=warnings)


def drop_beacons(records, ids):
    """Remove everything a set of beacons reported, and them from others' reports."""
    ids = frozenset(ids)
    if not ids:
        return list(records)
    kept = []
    for record in records:
        if record.src in ids:
            continue
        if any(s in ids for s in record.seen):
            record = PacketRecord(record.t, record.station, record.src,
                                  tuple(s for s in record.seen if s not in ids))
        kept.append(record)
    return kept


def select_beacons(spec, beacons):
    """Resolve a ``--drop-beacons`` value.

    ``count:seed`` picks ``count`` beacons uniformly at random (seeded);
    anything else is read as a file with one beacon id per line.
    """
    head, sep, tail = spec.partition(':')
    if sep and head.isdigit() and tail.lstrip('-').isdigit():
        count, seed = int(head), int(tail)
        population = sorted(beacons)
        if count > len(population):
            raise ConfigurationError(f'cannot drop {count} of {len(population)} beacons')
        return set(random.Random(seed).sample(population, count))
    ids = set()
    with open(spec, encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            ids.add(_parse_int(line, 'beacon id', line_no))
    return ids


def day_window(day):
    if day < 0:
        raise ConfigurationError(f'day must be non-negative, got {day}')
    return day * SECONDS_PER_DAY, (day + 1) * SECONDS_PER_DAY


def slice_stream(records, t0, t1):
    return [r for r in records if t0 <= r.t < t1]


def read_labels(path):
    """``id,<label>,...`` CSV (as written by ``simulate --labels``) to a dict."""
    labels = {}
    with open(path, encoding='utf-8', newline='') as handle:
        reader = csv.DictReader(line for line in handle if not line.startswith('#'))
        if not reader.fieldnames or 'id' not in reader.fieldnames:
            raise ConfigurationError(f'{path}: labels file needs an id column')
        for row in reader:
            beacon = _parse_int(row.pop('id'), 'id', reader.line_num)
            labels[beacon] = {k: v for k, v in row.items() if v not in (None, '')}
    return labels


def write_labels(labels, path, header_lines=()):
    columns = sorted({key for row in labels.values() for key in row})
    buffer = io.StringIO()
    for line in header_lines:
        buffer.write(f'# {line}\n')
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['id'] + columns)
    for beacon in sorted(labels):
        writer.writerow([beacon] + [labels[beacon].get(c, '') for c in columns])
    Path(path).write_text(buffer.getvalue(), encoding='utf-8')
