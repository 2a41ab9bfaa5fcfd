from pathlib import Path

from beacons.ingest import SECONDS_PER_DAY, read_labels
from contacts.events import detect_contacts
from core.commands import StreamCommand
from core.exceptions import ConfigurationError
from core.pipeline import require_records
from networks.aggregate import (GRAPH_FORMATS, WEIGHT_MODES, aggregate, average_degree, daily_graphs,
                                export_graph, filter_edges, strengths)


class Command(StreamCommand):
    help = 'Aggregate the contacts of a time span into a weighted network'

    defaults = {
        'weight_mode': 'packets',
        'threshold': 1,
        'min_weight': 0,
        'drop_isolated': False,
        'daily': False,
    }

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--from', dest='t_from', type=float, help='Span start in seconds (default: stream start)')
        parser.add_argument('--to', dest='t_to', type=float, help='Span end in seconds, exclusive (default: stream end)')
        parser.add_argument('--weight-mode', choices=WEIGHT_MODES, help='Edge weight: packets or contact events')
        parser.add_argument('--threshold', type=int, help='Contact threshold for the events weight mode')
        parser.add_argument('--min-weight', type=float, help='Keep only edges heavier than this')
        parser.add_argument('--drop-isolated', action='store_true', default=None,
                            help='Remove nodes left without edges by --min-weight')
        parser.add_argument('--labels', help='id,<label>... CSV attached to the nodes')
        parser.add_argument('--daily', action='store_true', default=None,
                            help='One graph per day; --out may contain {day}')
        parser.add_argument('--out', help='Graph file (.json for graph-json, anything else edge-csv)')
        parser.add_argument('--graph-format', choices=GRAPH_FORMATS, help='Override the format chosen from --out')

    def _describe(self, g):
        weights = strengths(g)
        top = sorted(weights.items(), key=lambda item: (-item[1], item[0]))[:5]
        return {
            'span': list(g.span),
            'nodes': len(g.nodes),
            'edges': len(g.edges),
            'total_weight': g.total_weight(),
            'average_degree': round(average_degree(g), 6),
            'top_strength': [[n, s] for n, s in top],
        }

    def _export(self, g, path, day=None):
        header = self.header() if day is None else self.header(day=day)
        fmt = export_graph(g, path, self.options.get('graph_format'), header)
        self.success(f'Wrote {fmt} graph ({len(g.nodes)} nodes, {len(g.edges)} edges) to {path}')

    def run(self, **options):
        stream = require_records(self.load_input(), 'aggregation')
        grid = stream.grid
        contact_map = stream.contact_map()
        labels = read_labels(options['labels']) if options.get('labels') else None
        events = detect_contacts(contact_map, options['threshold']) if options['weight_mode'] == 'events' else []

        if options['daily']:
            if options.get('t_from') is not None or options.get('t_to') is not None:
                raise ConfigurationError('--daily cannot be combined with --from/--to')
            first = int(stream.records[0].t // SECONDS_PER_DAY)
            last = int(stream.records[-1].t // SECONDS_PER_DAY)
            graphs = daily_graphs(contact_map, events, range(first, last + 1), options['weight_mode'], labels)
            graphs = [filter_edges(g, options['min_weight'], options['drop_isolated']) for g in graphs]
            out = options.get('out')
            for day, g in zip(range(first, last + 1), graphs):
                if out:
                    path = out.format(day=day) if '{day}' in out else _suffixed(out, day)
                    self._export(g, path, day)
            return {'command': 'aggregate', 'days': {day: self._describe(g)
                                                      for day, g in zip(range(first, last + 1), graphs)}}

        t0 = options['t_from'] if options.get('t_from') is not None else grid.origin
        t1 = options['t_to'] if options.get('t_to') is not None else grid.bin_end(grid.bin_of(stream.records[-1].t))
        g = aggregate(contact_map, events, t0, t1, options['weight_mode'], labels)
        g = filter_edges(g, options['min_weight'], options['drop_isolated'])
        if options.get('out'):
            self._export(g, options['out'])
        else:
            self.notice(f'{len(g.nodes)} nodes, {len(g.edges)} edges over [{t0:g}, {t1:g})')
        return {'command': 'aggregate', 'weight_mode': options['weight_mode'], **self._describe(g)}


def _suffixed(path, day):
    path = Path(path)
    return str(path.with_name(f'{path.stem}.day{day}{path.suffix}'))
