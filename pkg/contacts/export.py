import csv

from beacons.grid import PairKey
from core.exceptions import PacketParseError
from .events import ContactEvent

EVENT_HEADER = ['pair_lo', 'pair_hi', 'first_bin', 'last_bin', 'duration_s', 'total_packets']


def _write_header(handle, header_lines):
    for line in header_lines:
        handle.write(f'# {line}\n')


def _format_number(x):
    if isinstance(x, float):
        return str(int(x)) if x.is_integer() else repr(x)
    return str(x)


def write_events(events, path, header_lines=()):
    with open(path, 'w', newline='', encoding='utf-8') as file:
        _write_header(file, header_lines)
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(EVENT_HEADER)
        for e in events:
            writer.writerow([e.pair[0], e.pair[1], e.first_bin, e.last_bin,
                             _format_number(e.duration), e.total_packets])
    return len(events)


def read_events(path):
    events = []
    with open(path, newline='', encoding='utf-8') as file:
        reader = csv.DictReader(line for line in file if not line.startswith('#'))
        for i, row in enumerate(reader, start=1):
            try:
                first, last = int(row['first_bin']), int(row['last_bin'])
                width = float(row['duration_s']) / (last - first + 1)
                events.append(ContactEvent(first, PairKey(int(row['pair_lo']), int(row['pair_hi'])),
                                           last, int(row['total_packets']), width))
            except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
                raise PacketParseError(f'bad event row: {exc}', i) from None
    return events


def write_samples(samples, path, header_lines=()):
    """One value per line."""
    with open(path, 'w', encoding='utf-8') as file:
        _write_header(file, header_lines)
        for x in samples:
            file.write(_format_number(float(x)) + '\n')
    return len(samples)


def write_histogram(rows, path, header_lines=()):
    with open(path, 'w', newline='', encoding='utf-8') as file:
        _write_header(file, header_lines)
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(['left', 'right', 'count', 'density'])
        for left, right, count, density in rows:
            writer.writerow([f'{left:.6g}', f'{right:.6g}', count, f'{density:.6g}'])
    return len(rows)
