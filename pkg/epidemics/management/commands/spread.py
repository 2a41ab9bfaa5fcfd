import csv

import numpy as np
from django.conf import settings

from beacons.simulation import phase_of_bins
from core.commands import StreamCommand
from core.pipeline import require_records, scenario_from_extra
from epidemics.si import EpidemicParams, format_tree, infections_by_phase, run_many, run_si, transmission_tree


class Command(StreamCommand):
    help = 'SI contagion emulated on the contacts of a packet file'

    defaults = {
        'beta': lambda: settings.CONTACTNET_DEFAULT_BETA,
        'immune_frac': [0.0],
        'runs': 1,
        'seed': lambda: settings.CONTACTNET_SEED,
    }

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--beta', type=float, help='Transmission probability per packet and window')
        parser.add_argument('--immune-frac', type=float, nargs='+',
                            help='Fraction(s) of initially immune beacons; several values run a sweep')
        parser.add_argument('--runs', type=int, help='Independent runs per immune fraction')
        parser.add_argument('--seed', type=int, help='Random seed')
        parser.add_argument('--seed-beacon', type=int, help='Start the epidemic from this beacon')
        parser.add_argument('--trace', help='Write bin,t_start,n_infected rows')
        parser.add_argument('--events', help='Write bin,infector,infectee rows')
        parser.add_argument('--tree', help='Write the transmission tree of the first run as indented text')

    def _write_csv(self, path, header, blocks):
        with open(path, 'w', newline='', encoding='utf-8') as file:
            for line in self.header_lines():
                file.write(f'# {line}\n')
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(header)
            for label, rows in blocks:
                if label:
                    file.write(f'# {label}\n')
                writer.writerows(rows)

    def run(self, **options):
        stream = require_records(self.load_input(), 'the epidemic')
        grid = stream.grid
        contact_map = stream.contact_map()
        beacons = stream.beacons
        scenario = scenario_from_extra(self.extra_config)
        kinds = phase_of_bins(scenario, grid) if scenario else None

        sweep = {}
        labelled = []
        for frac in options['immune_frac']:
            params = EpidemicParams(options['beta'], frac, options['seed'], options.get('seed_beacon'))
            if options['runs'] == 1:
                traces = [run_si(contact_map, params, beacons)]
            else:
                traces = run_many(contact_map, params, options['runs'], beacons)
            finals = np.array([t.final_infected for t in traces], dtype=float)
            result = {
                'runs': len(traces),
                'mean_final_infected': round(float(finals.mean()), 6),
                'std_final_infected': round(float(finals.std()), 6),
                'final_infected': int(finals[0]),
                'immune': len(traces[0].immune),
            }
            if kinds is not None:
                result['infections_by_phase'] = infections_by_phase(traces, kinds)
            sweep[frac] = result
            labelled.extend((f'immune_frac {frac:g} run {i}', t) for i, t in enumerate(traces))
            self.success(f'immune fraction {frac:g}: {result["mean_final_infected"]:g} infected on average '
                         f'over {len(traces)} run(s)')

        single = len(labelled) == 1
        if options.get('trace'):
            self._write_csv(options['trace'], ['bin', 't_start', 'n_infected'], (
                (None if single else label, ([k, f'{grid.bin_start(k):g}', n] for k, n in trace.series))
                for label, trace in labelled))
        if options.get('events'):
            self._write_csv(options['events'], ['bin', 'infector', 'infectee'], (
                (None if single else label, (list(e) for e in trace.events))
                for label, trace in labelled))
        if options.get('tree'):
            with open(options['tree'], 'w', encoding='utf-8') as file:
                for line in self.header_lines():
                    file.write(f'# {line}\n')
                file.write(format_tree(transmission_tree(labelled[0][1])) + '\n')

        first = next(iter(sweep.values()))
        return {
            'command': 'spread',
            'beta': options['beta'],
            'seed': options['seed'],
            'beacons': len(beacons),
            'final_infected': first['final_infected'],
            'sweep': {f'{frac:g}': result for frac, result in sweep.items()},
        }
