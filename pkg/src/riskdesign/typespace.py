"""Populations of risk-preference types and distances between them."""
from __future__ import annotations

import json

import numpy as np

from .risk import RiskSpectrum

WEIGHT_TOL = 1e-12


class TypeSpace:
    """Finitely many risk-preference types on the real line.

    Each type pairs a scalar location with a risk spectrum; locations are
    strictly increasing and double as the ground metric for transport
    distances between type distributions.
    """

    __slots__ = ("locations", "spectra", "_grid", "_jump_matrix")

    def __init__(self, locations, spectra) -> None:
        locs = np.array(locations, dtype=float)
        spectra = list(spectra)
        if locs.ndim != 1 or locs.size == 0:
            raise ValueError("need at least one type location")
        if np.any(np.diff(locs) <= 0.0):
            raise ValueError("type locations must be strictly increasing")
        if len(spectra) != locs.size:
            raise ValueError("one spectrum per location required")
        for sp in spectra:
            if not isinstance(sp, RiskSpectrum):
                raise TypeError("spectra must be RiskSpectrum instances")
        locs.flags.writeable = False
        self.locations = locs
        self.spectra = spectra
        grid = np.unique(np.concatenate([sp.breakpoints for sp in spectra]))
        jm = np.zeros((locs.size, grid.size))
        for m, sp in enumerate(spectra):
            jm[m, np.searchsorted(grid, sp.breakpoints)] = sp.jumps
        grid.flags.writeable = False
        jm.flags.writeable = False
        self._grid = grid
        self._jump_matrix = jm

    @property
    def m(self) -> int:
        return int(self.locations.size)

    @property
    def union_breakpoints(self) -> np.ndarray:
        """All breakpoints appearing in any type's spectrum."""
        return self._grid

    @property
    def jump_matrix(self) -> np.ndarray:
        """Per-type spectrum jumps aligned on the union breakpoint grid."""
        return self._jump_matrix

    def to_json_dict(self) -> dict:
        return {
            "locations": [float(v) for v in self.locations],
            "spectra": [sp.to_pairs() for sp in self.spectra],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TypeSpace":
        return cls(d["locations"], [RiskSpectrum.from_pairs(p) for p in d["spectra"]])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "TypeSpace":
        return cls.from_json_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"TypeSpace(m={self.m}, locations={self.locations.tolist()})"


class TypeDistribution:
    """Probability weights over the types of a :class:`TypeSpace`."""

    __slots__ = ("weights",)

    def __init__(self, weights) -> None:
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.flags.writeable = False
        self.weights = w

    @classmethod
    def uniform(cls, m: int) -> "TypeDistribution":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def point_mass(cls, m: int, index: int) -> "TypeDistribution":
        w = np.zeros(m)
        w[index] = 1.0
        return cls(w)

    @property
    def m(self) -> int:
        return int(self.weights.size)

    def __repr__(self) -> str:
        return f"TypeDistribution({self.weights.tolist()})"


def _weights_of(mu) -> np.ndarray:
    if isinstance(mu, TypeDistribution):
        return mu.weights
    return TypeDistribution(mu).weights


def equivalent_spectrum(ts: TypeSpace, mu) -> RiskSpectrum:
    """Population-level spectrum: the mu-mixture of the per-type spectra.

    Jumps are mixed on the union breakpoint grid, so the output is affine in
    the weights; a point mass returns the underlying type's spectrum
    unchanged.
    """
    w = _weights_of(mu)
    if w.size != ts.m:
        raise ValueError("weight count does not match type count")
    mixed = w @ ts.jump_matrix
    return RiskSpectrum(ts.union_breakpoints, mixed)


def wasserstein1(mu, nu, ts: TypeSpace) -> float:
    """Order-1 transport distance between two type distributions.

    Uses the closed form on the line: cumulative weight gaps integrated
    against the location spacings.
    """
    wm = _weights_of(mu)
    wn = _weights_of(nu)
    if wm.size != ts.m or wn.size != ts.m:
        raise ValueError("weight count does not match type count")
    if ts.m == 1:
        return 0.0
    cdf_gap = np.cumsum(wm - wn)[:-1]
    spacings = np.diff(ts.locations)
    return float(np.dot(np.abs(cdf_gap), spacings))


def wasserstein1_subgradient(mu, nu, ts: TypeSpace) -> np.ndarray:
    """Subgradient of :func:`wasserstein1` in the first argument.

    Component ``m`` accumulates ``sign(cdf gap) * spacing`` over the segments
    at or beyond ``m``; the sign of an exactly zero gap is taken as zero.
    """
    wm = _weights_of(mu)
    wn = _weights_of(nu)
    if wm.size != ts.m or wn.size != ts.m:
        raise ValueError("weight count does not match type count")
    g = np.zeros(ts.m)
    if ts.m == 1:
        return g
    cdf_gap = np.cumsum(wm - wn)[:-1]
    seg = np.sign(cdf_gap) * np.diff(ts.locations)
    # suffix sums: segment j contributes to every component m <= j
    g[:-1] = np.cumsum(seg[::-1])[::-1]
    return g


def simplex_project(v) -> TypeDistribution:
    """Euclidean projection of a real vector onto the probability simplex.

    Sorted-threshold method: subtract the largest uniform shift that keeps
    the positive part summing to one, then clip.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("input must be a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    desc = np.sort(v)[::-1]
    cum = np.cumsum(desc)
    k = np.arange(1, v.size + 1)
    thresholds = (cum - 1.0) / k
    idx = np.nonzero(desc > thresholds)[0][-1]
    w = np.clip(v - thresholds[idx], 0.0, None)
    total = float(w.sum())
    if total != 1.0:
        w = w / total
    return TypeDistribution(w)
