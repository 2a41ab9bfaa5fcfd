import numpy as np

from beacons.ingest import select_beacons
from contacts.events import INTERVAL_MEASURES, detect_contacts, events_involving
from contacts.export import read_events, write_histogram, write_samples
from contacts.powerlaw import fit_power_law, log_binned_histogram
from core.commands import StreamCommand
from core.exceptions import ConfigurationError, InsufficientDataError
from core.pipeline import require_records


def _subset(spec, beacons):
    """``count:seed`` sample of beacons, or a file of ids."""
    chosen = select_beacons(spec, beacons)
    if len(chosen) < 2:
        raise ConfigurationError(f"--among '{spec}' selects fewer than two beacons")
    return chosen


class Command(StreamCommand):
    help = 'Duration and inter-contact-interval statistics of contact events'

    defaults = {
        'measure': 'durations',
        'threshold': 1,
        'fit': False,
        'bins_per_decade': 5,
    }

    def add_arguments(self, parser):
        self.add_stream_arguments(parser)
        parser.add_argument('--events', help='Read contact events from a CSV written by the contacts command')
        parser.add_argument('--measure', choices=sorted(INTERVAL_MEASURES),
                            help='durations, or inter-contact intervals: global, per-beacon, per-pair')
        parser.add_argument('--threshold', type=int, help='Contact threshold when reading packets')
        parser.add_argument('--among', help='Only events among a subset of beacons: count:seed or a file of ids')
        parser.add_argument('--out', help='Write the samples, one value per line')
        parser.add_argument('--hist', help='Write a log-binned histogram as CSV')
        parser.add_argument('--bins-per-decade', type=int, help='Histogram resolution')
        parser.add_argument('--fit', action='store_true', default=None, help='Fit a discrete power law')
        parser.add_argument('--xmin', type=float, help='Lower cut-off of the fit in seconds')

    def _events(self, options):
        if options.get('events') and options.get('input'):
            raise ConfigurationError('give either --events or --in, not both')
        if options.get('events'):
            events = read_events(options['events'])
            width = events[0].bin_width if events else options['bin_width']
            return events, width
        stream = require_records(self.load_input(), 'statistics')
        return detect_contacts(stream.contact_map(), options['threshold']), stream.grid.bin_width

    def run(self, **options):
        events, width = self._events(options)
        if options.get('among'):
            beacons = {b for e in events for b in e.pair}
            events = events_involving(events, _subset(options['among'], beacons))

        measure = options['measure']
        samples = INTERVAL_MEASURES[measure](events)
        summary = {'command': 'stats', 'measure': measure, 'events': len(events), 'samples': len(samples)}
        if samples:
            values = np.asarray(samples, dtype=float)
            summary.update(mean=round(float(values.mean()), 6), median=float(np.median(values)),
                           max=float(values.max()))
        self.success(f'{len(samples)} {measure} samples from {len(events)} events')

        if options.get('out'):
            write_samples(samples, options['out'], self.header_lines())
        if options.get('hist'):
            rows = log_binned_histogram(samples, options['bins_per_decade'])
            write_histogram(rows, options['hist'], self.header_lines())
            summary['histogram_bins'] = len(rows)

        if options['fit']:
            if not samples:
                raise InsufficientDataError(f'no {measure} samples to fit')
            result = fit_power_law(samples, options.get('xmin') or width, unit=width)
            self.success(f'{measure} exponent {result.exponent:.3f} +/- {result.std_err:.3f}')
            summary['fit'] = result.as_dict()
        return summary
