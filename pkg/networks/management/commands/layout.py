import csv

import numpy as np
from django.conf import settings

from core.commands import StreamCommand
from core.exceptions import ConfigurationError, InsufficientDataError, PacketParseError
from core.pipeline import require_records
from networks.instant import instant_graphs
from networks.layout import LayoutParams, default_anchors, emit_frames, station_proximity


def read_anchors(path):
    """``station,x,y`` CSV to ``{station: (x, y)}``."""
    anchors = {}
    with open(path, newline='', encoding='utf-8') as file:
        rows = csv.reader(line for line in file if not line.startswith('#'))
        for i, row in enumerate(rows, start=1):
            if not row or row[0].strip().lower() == 'station':
                continue
            try:
                station, x, y = row
                anchors[int(station.strip().lstrip('S'))] = (float(x), float(y))
            except ValueError:
                raise PacketParseError(f'bad anchor row {row!r}', i) from None
    return anchors


class Command(StreamCommand):
    help = 'Force-directed layout coordinates of the instantaneous network, one frame per window'

    defaults = {
        'steps': 10,
        'seed': lambda: settings.CONTACTNET_SEED,
        'spring': LayoutParams.spring,
        'repulsion': LayoutParams.repulsion,
        'damping': LayoutParams.damping,
        'rest_length': LayoutParams.rest_length,
    }

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--out', help='Frame file to write')
        parser.add_argument('--anchors', help='station,x,y CSV of station positions (default: a circle)')
        parser.add_argument('--from', dest='t_from', type=float, help='First time to lay out, seconds')
        parser.add_argument('--to', dest='t_to', type=float, help='End time (exclusive), seconds')
        parser.add_argument('--steps', type=int, help='Layout iterations per frame')
        parser.add_argument('--seed', type=int, help='Seed for the initial positions')
        parser.add_argument('--spring', type=float, help='Spring constant')
        parser.add_argument('--repulsion', type=float, help='Repulsion constant between beacons')
        parser.add_argument('--damping', type=float, help='Damping factor in (0, 1)')
        parser.add_argument('--rest-length', type=float, help='Base spring rest length')

    def run(self, **options):
        if not options.get('out'):
            raise ConfigurationError('an output frame file is required (--out)')
        params = LayoutParams(options['spring'], options['repulsion'], options['damping'], options['rest_length'])

        stream = require_records(self.load_input(), 'layout')
        grid = stream.grid
        records = stream.records
        if options.get('t_from') is not None or options.get('t_to') is not None:
            t0 = options['t_from'] if options.get('t_from') is not None else float('-inf')
            t1 = options['t_to'] if options.get('t_to') is not None else float('inf')
            records = [r for r in records if t0 <= r.t < t1]
            if not records:
                raise InsufficientDataError(f'no records in [{t0:g}, {t1:g})')

        anchors = read_anchors(options['anchors']) if options.get('anchors') else default_anchors(stream.meta.stations)
        graphs = list(instant_graphs(records, grid))
        frames = emit_frames(graphs, anchors, options['out'], np.random.default_rng(options['seed']),
                             options['steps'], station_proximity(records, grid), params, self.header_lines())
        self.success(f"Wrote {frames} frames to {options['out']}")
        return {'command': 'layout', 'frames': frames, 'first_bin': graphs[0].bin, 'last_bin': graphs[-1].bin,
                'anchors': len(anchors), 'seed': options['seed']}
