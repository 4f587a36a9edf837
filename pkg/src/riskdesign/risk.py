"""Coherent risk measures for empirical loss samples.

Everything here operates on finite, equal-weight samples.  Risk attitudes are
encoded either as a step-density spectrum (:class:`RiskSpectrum`) or as the
matching discrete mixture of tail averages (:class:`KusuokaMeasure`); the two
views are interchangeable and evaluate identically.
"""
from __future__ import annotations

import json
import math

import numpy as np

# Normalization slack accepted when validating spectra and atom mixtures.
MASS_TOL = 1e-9

# Guard against float noise in alpha * n at atom boundaries.
_INDEX_EPS = 1e-9


class EmpiricalLoss:
    """A finite sample of scalar losses, one atom of mass 1/N per entry.

    The raw values and a sorted view are kept side by side; both arrays are
    frozen after construction.
    """

    __slots__ = ("values", "sorted_view")

    def __init__(self, values) -> None:
        arr = np.array(values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("loss sample must be one-dimensional")
        if arr.size == 0:
            raise ValueError("loss sample must contain at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("loss sample contains non-finite values")
        srt = np.sort(arr, kind="stable")
        arr.flags.writeable = False
        srt.flags.writeable = False
        self.values = arr
        self.sorted_view = srt

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __repr__(self) -> str:
        return f"EmpiricalLoss(n={self.n}, mean={self.values.mean():.6g})"


def _as_sorted(sample) -> np.ndarray:
    if isinstance(sample, EmpiricalLoss):
        return sample.sorted_view
    return EmpiricalLoss(sample).sorted_view


def _check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"risk level must lie in [0, 1), got {alpha}")
    return alpha


def _quantile_index(n: int, alpha: float) -> int:
    """0-based index of the empirical alpha-quantile.

    At atom boundaries the upper endpoint of the quantile interval is taken,
    which keeps the returned value a minimizer of the tail-average program.
    """
    return min(int(math.floor(alpha * n + _INDEX_EPS)), n - 1)


def value_at_risk(sample, alpha: float) -> float:
    """Empirical quantile of a loss sample at level ``alpha``.

    Args:
        sample: an :class:`EmpiricalLoss` or anything accepted by its
            constructor.
        alpha: tail level in ``[0, 1)``; ``alpha = 0`` returns the minimum.

    Returns:
        The sample value at the quantile index.
    """
    srt = _as_sorted(sample)
    alpha = _check_level(alpha)
    return float(srt[_quantile_index(srt.size, alpha)])


def _avar_sorted(srt: np.ndarray, alpha: float) -> float:
    n = srt.size
    i = _quantile_index(n, alpha)
    t = srt[i]
    tail = float(np.maximum(srt[i:] - t, 0.0).sum())
    return float(t + tail / ((1.0 - alpha) * n))


def average_value_at_risk(sample, alpha: float) -> float:
    """Mean of the worst ``(1 - alpha)`` fraction of a loss sample.

    Evaluates ``min_t { t + (1/((1-alpha) N)) sum_k (z_k - t)_+ }`` in closed
    form, with the minimizing ``t`` taken from :func:`value_at_risk`.
    """
    srt = _as_sorted(sample)
    alpha = _check_level(alpha)
    return _avar_sorted(srt, alpha)


def dual_representation_check(sample, alpha: float) -> float:
    """Tail average recomputed through its reweighting dual.

    Mass is assigned greedily from the largest losses downward, capped at
    ``1/((1-alpha) N)`` per sample point.  Agrees with
    :func:`average_value_at_risk` up to rounding.
    """
    srt = _as_sorted(sample)
    alpha = _check_level(alpha)
    n = srt.size
    cap = 1.0 / ((1.0 - alpha) * n)
    used = cap * np.arange(n, dtype=float)
    weights = np.clip(1.0 - used, 0.0, cap)
    return float(np.dot(weights, srt[::-1]))


class RiskSpectrum:
    """Nondecreasing step density on ``[0, 1)`` integrating to one.

    Stored as breakpoints ``tau_i`` with positive jumps ``a_i``; the density at
    ``tau`` is the sum of jumps at or below ``tau``.  The first breakpoint is
    always 0 and is the only one allowed to carry a zero jump (a spectrum with
    no mass at the left edge).
    """

    __slots__ = ("breakpoints", "jumps")

    def __init__(self, breakpoints, jumps) -> None:
        taus = np.array(breakpoints, dtype=float)
        jmp = np.array(jumps, dtype=float)
        if taus.ndim != 1 or jmp.ndim != 1 or taus.size != jmp.size:
            raise ValueError("breakpoints and jumps must be 1-d of equal length")
        if taus.size == 0:
            raise ValueError("spectrum needs at least one step")
        if taus[0] != 0.0:
            if taus[0] < 0.0:
                raise ValueError("breakpoints must lie in [0, 1)")
            taus = np.concatenate(([0.0], taus))
            jmp = np.concatenate(([0.0], jmp))
        if np.any(np.diff(taus) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if taus[-1] >= 1.0:
            raise ValueError("breakpoints must lie in [0, 1)")
        if jmp[0] < 0.0 or np.any(jmp[1:] < 0.0):
            raise ValueError("jumps must be nonnegative")
        keep = np.ones(taus.size, dtype=bool)
        keep[1:] = jmp[1:] > 0.0
        taus, jmp = taus[keep], jmp[keep]
        mass = float(np.dot(jmp, 1.0 - taus))
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"spectrum mass {mass!r} deviates from 1 beyond {MASS_TOL}")
        taus.flags.writeable = False
        jmp.flags.writeable = False
        self.breakpoints = taus
        self.jumps = jmp

    # -- constructors -------------------------------------------------

    @classmethod
    def flat(cls) -> "RiskSpectrum":
        """Risk-neutral spectrum (plain expectation)."""
        return cls([0.0], [1.0])

    @classmethod
    def tail_average(cls, alpha: float) -> "RiskSpectrum":
        """Spectrum whose risk functional is the tail average at ``alpha``."""
        alpha = _check_level(alpha)
        if alpha == 0.0:
            return cls.flat()
        return cls([0.0, alpha], [0.0, 1.0 / (1.0 - alpha)])

    @classmethod
    def mean_semideviation(cls, theta: float, kappa: float) -> "RiskSpectrum":
        """Two-level spectrum of the upper-semideviation risk functional.

        ``theta`` weights the semideviation term and ``kappa`` is the
        probability that the loss exceeds its mean; the density is
        ``1 - theta * kappa`` below ``1 - kappa`` and jumps by ``theta`` there.
        """
        theta = float(theta)
        kappa = float(kappa)
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not 0.0 < kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        return cls([0.0, 1.0 - kappa], [1.0 - theta * kappa, theta])

    @classmethod
    def from_pairs(cls, pairs) -> "RiskSpectrum":
        taus = [p[0] for p in pairs]
        jumps = [p[1] for p in pairs]
        return cls(taus, jumps)

    @classmethod
    def from_json(cls, text: str) -> "RiskSpectrum":
        return cls.from_pairs(json.loads(text))

    # -- views --------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return int(self.breakpoints.size)

    @property
    def zero_mass(self) -> float:
        """Density value at the left edge."""
        return float(self.jumps[0])

    def value(self, tau) -> np.ndarray | float:
        """Density evaluated at ``tau`` (scalar or array)."""
        tau_arr = np.asarray(tau, dtype=float)
        idx = np.searchsorted(self.breakpoints, tau_arr, side="right")
        cum = np.concatenate(([0.0], np.cumsum(self.jumps)))
        out = cum[idx]
        return float(out) if np.isscalar(tau) else out

    def block_weights(self, n: int) -> np.ndarray:
        """Integral of the density over each of ``n`` equal quantile blocks.

        The weights are the coefficients of the sorted sample values in the
        spectral risk; they are nondecreasing and sum to one.
        """
        if n < 1:
            raise ValueError("need at least one block")
        grid = np.arange(n + 1, dtype=float) / n
        cum_integral = np.maximum(grid[None, :] - self.breakpoints[:, None], 0.0)
        integral = self.jumps @ cum_integral
        return np.diff(integral)

    def to_pairs(self) -> list[tuple[float, float]]:
        return [(float(t), float(a)) for t, a in zip(self.breakpoints, self.jumps)]

    def to_json(self) -> str:
        return json.dumps(self.to_pairs())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RiskSpectrum):
            return NotImplemented
        return (
            self.breakpoints.size == other.breakpoints.size
            and bool(np.all(self.breakpoints == other.breakpoints))
            and bool(np.all(self.jumps == other.jumps))
        )

    def __hash__(self) -> int:
        return hash((self.breakpoints.tobytes(), self.jumps.tobytes()))

    def __repr__(self) -> str:
        pairs = ", ".join(f"({t:.4g}, {a:.4g})" for t, a in self.to_pairs())
        return f"RiskSpectrum([{pairs}])"


class KusuokaMeasure:
    """Discrete mixing measure over tail-average levels.

    Atoms ``(tau_i, sigma_i)`` with nonnegative weights summing to one; the
    induced risk functional is the matching convex combination of tail
    averages.
    """

    __slots__ = ("levels", "weights")

    def __init__(self, levels, weights) -> None:
        taus = np.array(levels, dtype=float)
        sig = np.array(weights, dtype=float)
        if taus.ndim != 1 or sig.ndim != 1 or taus.size != sig.size:
            raise ValueError("levels and weights must be 1-d of equal length")
        if taus.size == 0:
            raise ValueError("mixing measure needs at least one atom")
        if np.any(np.diff(taus) <= 0.0):
            raise ValueError("levels must be strictly increasing")
        if np.any(taus < 0.0) or np.any(taus >= 1.0):
            raise ValueError("levels must lie in [0, 1)")
        if np.any(sig < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(sig.sum()) - 1.0) > MASS_TOL:
            raise ValueError("atom weights must sum to 1")
        taus.flags.writeable = False
        sig.flags.writeable = False
        self.levels = taus
        self.weights = sig

    def __repr__(self) -> str:
        atoms = ", ".join(f"({t:.4g}, {s:.4g})" for t, s in zip(self.levels, self.weights))
        return f"KusuokaMeasure([{atoms}])"


def spectrum_to_kusuoka(spectrum: RiskSpectrum) -> KusuokaMeasure:
    """Convert a step spectrum to its mixture of tail averages.

    Each jump ``a_i`` at ``tau_i`` becomes an atom of weight
    ``a_i * (1 - tau_i)``.
    """
    return KusuokaMeasure(
        spectrum.breakpoints, spectrum.jumps * (1.0 - spectrum.breakpoints)
    )


def _mixture_value(srt: np.ndarray, levels: np.ndarray, weights: np.ndarray) -> float:
    total = 0.0
    for tau, sigma in zip(levels, weights):
        total += sigma * _avar_sorted(srt, tau)
    return float(total)


def kusuoka_risk(sample, measure: KusuokaMeasure) -> float:
    """Risk of a sample under a discrete mixture of tail averages."""
    srt = _as_sorted(sample)
    return _mixture_value(srt, measure.levels, measure.weights)


def spectral_risk(sample, spectrum: RiskSpectrum) -> float:
    """Spectral risk of a sample: quantiles weighted by the step density.

    Equals the sorted sample values dotted with the per-block integrals of the
    density, and is evaluated through the tail-average mixture so that it
    agrees with :func:`kusuoka_risk` after :func:`spectrum_to_kusuoka` with
    identical arithmetic.
    """
    srt = _as_sorted(sample)
    sigma = spectrum.jumps * (1.0 - spectrum.breakpoints)
    return _mixture_value(srt, spectrum.breakpoints, sigma)


def approximate_spectrum(target, n: int) -> RiskSpectrum:
    """Sample a density oracle on a uniform grid and renormalize.

    Args:
        target: callable mapping ``tau in [0, 1)`` to a density value;
            must be nondecreasing at the sampled points.
        n: number of grid points ``(i - 1)/n``, ``i = 1..n``.

    Returns:
        A step spectrum through the sampled values, rescaled to unit mass.
    """
    if n < 1:
        raise ValueError("need at least one grid point")
    taus = np.arange(n, dtype=float) / n
    vals = np.array([float(target(t)) for t in taus])
    if not np.all(np.isfinite(vals)) or vals[0] < 0.0:
        raise ValueError("density oracle returned invalid values")
    diffs = np.diff(vals)
    if np.any(diffs < -1e-12):
        raise ValueError("density oracle is decreasing at sampled points")
    jumps = np.concatenate(([vals[0]], np.clip(diffs, 0.0, None)))
    mass = float(np.dot(jumps, 1.0 - taus))
    if mass <= 0.0:
        raise ValueError("density oracle has no mass on the grid")
    return RiskSpectrum(taus, jumps / mass)


def pseudo_metric_estimate(m1: KusuokaMeasure, m2: KusuokaMeasure, probes) -> float:
    """Lower estimate of the gap between two tail-average mixtures.

    The exact distance is a supremum over all loss profiles; only a finite
    list of probe samples can be checked, so the result under-estimates.

    Args:
        m1, m2: mixing measures to compare.
        probes: nonempty iterable of loss samples.
    """
    gaps = []
    for probe in probes:
        srt = _as_sorted(probe)
        gaps.append(abs(_mixture_value(srt, m1.levels, m1.weights)
                        - _mixture_value(srt, m2.levels, m2.weights)))
    if not gaps:
        raise ValueError("need at least one probe sample")
    return float(max(gaps))
