"""
Discrete power laws: sampling, maximum-likelihood fitting and log-binned
histograms for plotting heavy-tailed samples.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from core.exceptions import ConfigurationError, DegenerateDataError, InsufficientDataError

MIN_TAIL = 10
MAX_ALPHA = 20.0

# support cut-off when no upper bound is given; the mass beyond it is
# below 1e-6 for every exponent > 2
DEFAULT_UPPER_BOUND = 10 ** 6


@lru_cache(maxsize=64)
def _cdf_table(alpha, lower_bound, upper_bound):
    weights = np.arange(lower_bound, upper_bound + 1, dtype=float) ** -alpha
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return cdf


class DiscretePowerLaw:
    """p(x) proportional to x**-alpha on the integers ``lower_bound..upper_bound``."""

    def __init__(self, alpha, lower_bound=1, upper_bound=None):
        upper_bound = DEFAULT_UPPER_BOUND if upper_bound is None else upper_bound
        if not alpha > 1:
            raise ConfigurationError(f'power-law exponent must exceed 1, got {alpha}')
        if lower_bound < 1 or upper_bound < lower_bound:
            raise ConfigurationError(f'invalid support [{lower_bound}, {upper_bound}]')
        self.alpha = float(alpha)
        self.lower_bound = int(lower_bound)
        self.upper_bound = int(upper_bound)

    def __repr__(self):
        return f'DiscretePowerLaw(alpha={self.alpha}, lower_bound={self.lower_bound}, upper_bound={self.upper_bound})'

    def Z(self):
        """Normaliser from the Hurwitz zeta function."""
        return zeta(self.alpha, self.lower_bound) - zeta(self.alpha, self.upper_bound + 1)

    def pmf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lower_bound) & (x <= self.upper_bound)
        return np.where(inside, x ** -self.alpha / self.Z(), 0.0)

    def rvs(self, rng, size=None):
        """Inverse-CDF sampling from the tabulated support."""
        cdf = _cdf_table(self.alpha, self.lower_bound, self.upper_bound)
        u = rng.random(size)
        draws = np.searchsorted(cdf, u, side='right') + self.lower_bound
        # u can sit exactly on the last cdf entry
        draws = np.minimum(draws, self.upper_bound)
        if size is None:
            return int(draws)
        return draws.astype(np.int64)


@dataclass(frozen=True)
class FitResult:
    exponent: float
    xmin: float
    n_tail: int
    std_err: float

    def as_dict(self):
        return {
            'exponent': round(self.exponent, 6),
            'xmin': self.xmin,
            'n_tail': self.n_tail,
            'std_err': round(self.std_err, 6),
        }


def fit_power_law(samples, xmin=1, unit=1.0):
    """Discrete maximum-likelihood exponent of the tail ``x >= xmin``.

    Samples measured in ``unit`` steps (e.g. seconds on a 20 s grid) are
    mapped to integer multiples of the unit before fitting; ``xmin`` is
    given in sample units.
    """
    if unit <= 0:
        raise ConfigurationError(f'unit must be positive, got {unit}')
    lower = xmin / unit
    if lower < 1:
        raise ConfigurationError(f'xmin must be at least one unit ({unit}), got {xmin}')
    lower = round(lower)

    x = np.rint(np.asarray(samples, dtype=float) / unit)
    tail = x[x >= lower]
    if tail.size < MIN_TAIL:
        raise InsufficientDataError(f'{tail.size} samples >= xmin={xmin}, need at least {MIN_TAIL}')
    if np.all(tail == tail[0]):
        raise DegenerateDataError(f'all {tail.size} tail samples equal {tail[0] * unit}')

    n = tail.size
    log_sum = np.log(tail).sum()

    def neg_log_likelihood(alpha):
        return alpha * log_sum + n * np.log(zeta(alpha, lower))

    soln = minimize_scalar(neg_log_likelihood, bounds=(1.0001, MAX_ALPHA), method='bounded',
                           options={'xatol': 1e-7})
    alpha = float(soln.x)
    return FitResult(exponent=alpha, xmin=xmin, n_tail=int(n), std_err=(alpha - 1) / math.sqrt(n))


def log_binned_histogram(samples, bins_per_decade=5, xmin=None):
    """Histogram on logarithmic bins; rows of (left, right, count, density).

    Density is the count divided by bin width and sample size, so it
    estimates the probability density on log axes. Non-positive samples
    are ignored.
    """
    x = np.asarray(samples, dtype=float)
    x = x[x > 0]
    if xmin is not None:
        x = x[x >= xmin]
    if x.size == 0:
        return []
    lo = math.floor(math.log10(x.min()) * bins_per_decade) / bins_per_decade
    hi = math.ceil(math.log10(x.max()) * bins_per_decade) / bins_per_decade
    if hi <= lo:
        hi = lo + 1.0 / bins_per_decade
    n_bins = int(round((hi - lo) * bins_per_decade))
    edges = np.logspace(lo, hi, n_bins + 1)
    counts, edges = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    density = counts / (widths * x.size)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]), float(density[i]))
        for i in range(len(counts))
    ]
