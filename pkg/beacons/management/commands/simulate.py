from dataclasses import asdict

from django.conf import settings

from beacons.ingest import FORMATS, write_labels, write_packets
from beacons.serializers import scenario_fields, scenario_from_mapping
from beacons.simulation import ScenarioGenerator, agent_labels
from core.commands import PipelineCommand
from core.exceptions import ConfigurationError


class Command(PipelineCommand):
    help = 'Generate a synthetic conference packet stream from a scenario config'

    def add_arguments(self, parser):
        parser.add_argument('--out', help='Packet file to write (.csv or .jsonl, optionally .gz)')
        parser.add_argument('--format', choices=FORMATS, help='Packet format (default: from the file name)')
        parser.add_argument('--seed', type=int, help='Random seed (overrides rng_seed in the config)')
        parser.add_argument('--days', type=int, help='Number of simulated days')
        parser.add_argument('--agents', type=int, help='Number of agents wearing beacons')
        parser.add_argument('--labels', help='Also write id,country,role metadata for every beacon')

    def scenario(self):
        opts = self.options
        unknown = set(self.extra_config) - scenario_fields()
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(map(str, unknown)))}")
        data = dict(self.extra_config)
        if opts.get('seed') is not None:
            data['rng_seed'] = opts['seed']
        elif 'rng_seed' not in data:
            data['rng_seed'] = settings.CONTACTNET_SEED
        if opts.get('days') is not None:
            data['days'] = opts['days']
        if opts.get('agents') is not None:
            data['n_agents'] = opts['agents']
        return scenario_from_mapping(data)

    def run(self, **options):
        if not options.get('out'):
            raise ConfigurationError('an output file is required (--out)')
        config = self.scenario()
        header = self.header_lines(seed=config.rng_seed, scenario=asdict(config))

        generator = ScenarioGenerator(config)
        count = write_packets(generator, options['out'], options.get('format'), header)
        self.success(f"Wrote {count} packets for {config.n_agents} beacons over {config.days} day(s) "
                     f"to {options['out']}")

        if options.get('labels'):
            write_labels(agent_labels(config), options['labels'], header)
            self.success(f"Wrote labels for {config.n_agents} beacons to {options['labels']}")

        return {
            'command': 'simulate',
            'out': options['out'],
            'records': count,
            'beacons': config.n_agents,
            'days': config.days,
            'seed': config.rng_seed,
            **generator.stats,
        }
