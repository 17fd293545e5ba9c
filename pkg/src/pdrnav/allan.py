"""Allan-variance noise characterization for still sensor records.

Feeding a long motionless record through `allan_deviation` produces the
familiar log-log curve whose left slope of -1/2 is white measurement
noise and whose floor is the slow bias wander.  `extract_coefficients`
reads off the two standard numbers: the random-walk coefficient N
(the -1/2 line evaluated at one second) and the bias instability B
(the floor divided by 0.664).

Both work on one scalar axis at a time in whatever unit the samples
carry; run them per column for a tri-axial sensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "MIN_SAMPLES",
    "AllanCurve",
    "NoiseCoefficients",
    "allan_deviation",
    "extract_coefficients",
]

MIN_SAMPLES = 1000

# Fewest clusters per curve point; limits the largest tau to a ninth of
# the record so every plotted value averages at least nine differences.
_MIN_CLUSTERS = 9

# Conventional ratio between the Allan floor and the bias instability.
_BIAS_INSTABILITY_SCALE = 0.664

# A curve point belongs to the white-noise region when the local
# log-log slope is within this distance of -1/2.
_SLOPE_TOLERANCE = 0.1


@dataclass
class AllanCurve:
    """Overlapping Allan deviation sampled at log-spaced cluster times."""

    taus: NDArray[np.float64]
    adev: NDArray[np.float64]
    fs: float

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.adev = np.asarray(self.adev, dtype=float)
        if self.taus.shape != self.adev.shape or self.taus.ndim != 1:
            raise ValueError("taus and adev must be matching 1-d arrays")
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        if np.any(self.adev < 0):
            raise ValueError("adev must be nonnegative")


@dataclass
class NoiseCoefficients:
    """The two headline numbers of a stochastic IMU error budget.

    ``random_walk`` is the white-noise density (sensor unit per root
    hertz); ``bias_instability`` is the flat-region floor (sensor unit).
    """

    random_walk: float
    bias_instability: float

    def __post_init__(self):
        if not (self.random_walk > 0 and self.bias_instability > 0):
            raise ValueError("noise coefficients must be positive")


def _cluster_sizes(n_samples: int, points_per_decade: int) -> NDArray[np.int64]:
    m_max = n_samples // _MIN_CLUSTERS
    decades = np.log10(m_max)
    count = max(int(np.ceil(decades * points_per_decade)) + 1, 2)
    grid = np.logspace(0.0, decades, num=count)
    return np.unique(np.round(grid).astype(np.int64))


def allan_deviation(
    series,
    fs: float,
    points_per_decade: int = 16,
) -> AllanCurve:
    """Overlapping Allan deviation of one scalar sample stream.

    For each cluster length tau the variance is half the mean squared
    difference between successive cluster means, taken over every
    (overlapping) start index.  Cluster lengths are log-spaced from one
    sample up to a ninth of the record.

    Parameters
    ----------
    series : ndarray, shape (n,)
        Raw samples of one axis, any physical unit, evenly spaced.
    fs : float
        Sample rate, Hz.
    points_per_decade : int
        Density of the tau grid.

    Returns
    -------
    AllanCurve

    Raises
    ------
    ValueError
        If the record is shorter than ``MIN_SAMPLES`` or ``fs`` is not
        positive.
    """
    series = np.asarray(series, dtype=float).ravel()
    n = series.size
    if n < MIN_SAMPLES:
        raise ValueError(
            f"series has {n} samples, Allan analysis needs at least "
            f"{MIN_SAMPLES}"
        )
    if not (fs > 0 and np.isfinite(fs)):
        raise ValueError("fs must be a positive sample rate")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be at least 1")

    # The deviation is invariant to a constant offset (cluster-mean
    # differences cancel it); centering first makes that exact in
    # floating point instead of leaving ~1e-13 cumsum residue, which
    # matters for sensors parked at g.
    series = series - series.mean()
    # Integrated signal; successive cluster means become second
    # differences of this, one vector operation per tau.
    integral = np.concatenate([[0.0], np.cumsum(series)]) / fs
    sizes = _cluster_sizes(n, points_per_decade)
    adev = np.empty(sizes.size)
    for j, m in enumerate(sizes):
        d = integral[2 * m:] - 2.0 * integral[m:-m] + integral[:-2 * m]
        tau = m / fs
        adev[j] = np.sqrt((d @ d) / (2.0 * d.size * tau * tau))
    return AllanCurve(taus=sizes / fs, adev=adev, fs=float(fs))


def _longest_run(flags: NDArray[np.bool_]) -> NDArray[np.bool_]:
    """Mask keeping only the longest run of True (first one on ties)."""
    out = np.zeros_like(flags)
    best_len, best_start, run = 0, 0, 0
    for i, f in enumerate(flags):
        run = run + 1 if f else 0
        if run > best_len:
            best_len, best_start = run, i - run + 1
    out[best_start:best_start + best_len] = True
    return out


def _local_slopes(log_tau: NDArray, log_adev: NDArray) -> NDArray:
    """Centered log-log slope at every curve point (one-sided at ends)."""
    slopes = np.empty_like(log_tau)
    slopes[1:-1] = (log_adev[2:] - log_adev[:-2]) / (log_tau[2:] - log_tau[:-2])
    slopes[0] = (log_adev[1] - log_adev[0]) / (log_tau[1] - log_tau[0])
    slopes[-1] = (log_adev[-1] - log_adev[-2]) / (log_tau[-1] - log_tau[-2])
    return slopes


def extract_coefficients(curve: AllanCurve) -> NoiseCoefficients:
    """Random-walk and bias-instability coefficients from a curve.

    The white-noise region is every curve point whose local log-log
    slope lies within 0.1 of -1/2; a fixed-slope line is least-squares
    fitted there and read at tau = 1 s to give the random-walk
    coefficient.  The bias instability is the curve minimum divided by
    the conventional 0.664.

    Raises
    ------
    ValueError
        If the curve spans less than three decades of tau, or no
        white-noise region exists ("ARW not identifiable").
    """
    taus, adev = curve.taus, curve.adev
    if taus.size < 4:
        raise ValueError("curve has too few points to classify slopes")
    span = taus[-1] / taus[0]
    if span < 1e3:
        raise ValueError(
            f"curve spans {np.log10(span):.2f} decades of tau, need 3"
        )
    positive = adev > 0
    if not np.any(positive):
        raise ValueError("ARW not identifiable: curve is identically zero")

    log_tau = np.log10(taus[positive])
    log_adev = np.log10(adev[positive])
    if log_tau.size >= 4:
        slopes = _local_slopes(log_tau, log_adev)
        qualifies = np.abs(slopes + 0.5) <= _SLOPE_TOLERANCE
    else:
        qualifies = np.zeros(log_tau.size, dtype=bool)
    # The white-noise region is one contiguous stretch of the curve;
    # isolated qualifying points elsewhere (noise wiggles on the floor)
    # must not join the fit, so keep only the longest run.
    in_region = _longest_run(qualifies)
    if not np.any(in_region):
        raise ValueError(
            "ARW not identifiable: no region with log-log slope near -1/2"
        )
    # Fixed-slope fit: only the intercept is free, so it is the mean of
    # log(adev) + log(tau)/2; at tau = 1 s the line reads 10^intercept.
    intercept = float(np.mean(log_adev[in_region] + 0.5 * log_tau[in_region]))
    random_walk = 10.0 ** intercept
    bias_instability = float(np.min(adev[positive])) / _BIAS_INSTABILITY_SCALE
    return NoiseCoefficients(
        random_walk=random_walk, bias_instability=bias_instability
    )
