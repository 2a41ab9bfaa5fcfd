from django.conf import settings

from contacts.events import contact_durations, detect_contacts
from contacts.export import write_events
from contacts.powerlaw import fit_power_law
from core.commands import StreamCommand
from core.exceptions import ConfigurationError
from core.pipeline import require_records


class Command(StreamCommand):
    help = 'Detect contact events in a packet file and optionally fit their durations'

    defaults = {
        'threshold': 1,
        'strong': False,
        'fit': False,
        'xmin': None,
    }

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--threshold', type=int, help='Packets per window for a pair to be in contact')
        parser.add_argument('--strong', action='store_true', default=None,
                            help='Strong contacts (threshold CONTACTNET_STRONG_THRESHOLD)')
        parser.add_argument('--out', help='Write the contact events as CSV')
        parser.add_argument('--fit', action='store_true', default=None,
                            help='Fit a discrete power law to the contact durations')
        parser.add_argument('--xmin', type=float, help='Lower cut-off of the fit in seconds (default: one window)')

    def run(self, **options):
        threshold = options['threshold']
        if options['strong']:
            if threshold not in (1, settings.CONTACTNET_STRONG_THRESHOLD):
                raise ConfigurationError('--strong and --threshold disagree')
            threshold = settings.CONTACTNET_STRONG_THRESHOLD

        stream = require_records(self.load_input(), 'contact detection')
        events = detect_contacts(stream.contact_map(), threshold)
        pairs = {e.pair for e in events}
        self.success(f'{len(events)} contact events between {len(pairs)} pairs (threshold {threshold})')

        summary = {
            'command': 'contacts',
            'threshold': threshold,
            'events': len(events),
            'pairs': len(pairs),
            'records': stream.meta.n_records,
            'dropped_beacons': sorted(stream.dropped),
        }

        if options.get('out'):
            write_events(events, options['out'], self.header_lines(threshold=threshold))
            self.success(f"Wrote events to {options['out']}")

        if options['fit']:
            width = stream.grid.bin_width
            result = fit_power_law(contact_durations(events), options['xmin'] or width, unit=width)
            self.success(f'Duration exponent {result.exponent:.3f} +/- {result.std_err:.3f} '
                         f'({result.n_tail} events >= {result.xmin:g} s)')
            summary['fit'] = result.as_dict()
        return summary
