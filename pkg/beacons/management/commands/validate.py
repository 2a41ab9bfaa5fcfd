from beacons.ingest import write_packets
from core.commands import StreamCommand
from core.pipeline import scenario_from_extra


class Command(StreamCommand):
    help = 'Check a packet file: sort, deduplicate and summarise it'

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--stations', type=int, nargs='+',
                            help='Known station ids (default: the rooms of the config, if any)')
        parser.add_argument('--out', help='Write the cleaned stream here')

    def run(self, **options):
        known = options.get('stations')
        if known is None:
            scenario = scenario_from_extra(self.extra_config)
            known = list(scenario.stations) if scenario else None

        stream = self.load_input(known_stations=known)
        meta = stream.meta
        self.success(f"{meta.n_records} records from {len(meta.beacons)} beacons "
                     f"via {len(meta.stations)} stations; {meta.n_contact_records} report a contact")

        if options.get('out'):
            count = write_packets(stream.records, options['out'], header_lines=self.header_lines())
            self.success(f"Wrote {count} cleaned records to {options['out']}")

        return {'command': 'validate', **stream.summary(), 'warning_messages': stream.warnings}
