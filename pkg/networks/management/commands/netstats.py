import csv

from beacons.simulation import ScenarioConfig, phase_of_bins
from core.commands import StreamCommand
from core.pipeline import require_records, scenario_from_extra
from networks.instant import CLIQUE_SIZES, CliqueCensus, attendance_series, clique_series, degree_series, phase_means


class Command(StreamCommand):
    help = 'Instantaneous network series: average degree, room attendance and maximal cliques'

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--degree', help='Write bin,t_start,value rows of the average degree')
        parser.add_argument('--attendance', help='Write bin,t_start,room,value rows of beacons per room')
        parser.add_argument('--cliques', help='Write bin,t_start,size,value rows of maximal cliques')

    def _write(self, path, header, rows):
        with open(path, 'w', newline='', encoding='utf-8') as file:
            for line in self.header_lines():
                file.write(f'# {line}\n')
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)

    def run(self, **options):
        scenario = scenario_from_extra(self.extra_config)
        rooms = (scenario or ScenarioConfig()).stations

        stream = require_records(self.load_input(), 'network statistics')
        grid = stream.grid
        contact_map = stream.contact_map()

        degrees = degree_series(stream.records, grid, contact_map)
        attendance = attendance_series(stream.records, grid, rooms)
        cliques = clique_series(stream.records, grid, contact_map)
        self.success(f'{len(degrees)} windows analysed')

        if options.get('degree'):
            self._write(options['degree'], ['bin', 't_start', 'value'],
                        ([k, f'{grid.bin_start(k):g}', f'{value:.6g}'] for k, value in degrees))
        if options.get('attendance'):
            self._write(options['attendance'], ['bin', 't_start', 'room', 'value'],
                        ([k, f'{grid.bin_start(k):g}', room, n]
                         for (room, k), n in sorted(attendance.counts.items(), key=lambda item: (item[0][1], item[0][0]))))
        if options.get('cliques'):
            self._write(options['cliques'], ['bin', 't_start', 'size', 'value'],
                        ([c.bin, f'{grid.bin_start(c.bin):g}', CliqueCensus.label(size), c.counts[size]]
                         for c in cliques for size in CLIQUE_SIZES))

        totals = {CliqueCensus.label(size): sum(c.counts[size] for c in cliques) for size in CLIQUE_SIZES}
        summary = {
            'command': 'netstats',
            'windows': len(degrees),
            'mean_degree': round(sum(v for _, v in degrees) / len(degrees), 6) if degrees else 0.0,
            'maximal_cliques': totals,
        }
        if scenario is not None:
            kinds = phase_of_bins(scenario, grid)
            summary['degree_by_phase'] = {k: round(v, 6) for k, v in phase_means(degrees, kinds).items()}
            for size in (3, 4):
                series = [(c.bin, c.counts[size]) for c in cliques]
                summary[f'cliques{size}_by_phase'] = {
                    k: round(v, 6) for k, v in phase_means(series, kinds).items()}
        return summary
