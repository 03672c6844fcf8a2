"""Deterministic polynomial maps and synthetic multi-series generation.

Series are generated by the lag-one recursion x_i = g(theta, x_{i-1}) + z_i
with z_i drawn from a finite zero-mean Gaussian mixture. Pairs of series may
share mixture components; sharing is by construction (one immutable spec
object compounded into each series' noise).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import RngHandle, draw_categorical
from .errors import DivergenceError

# Values beyond this magnitude mean the orbit has left any basin of interest;
# polynomial maps then explode super-exponentially.
DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class PolynomialMap:
    """Deterministic part g(theta, x) = sum_r theta_r x^r."""

    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.coefficients) == 0:
            raise ValueError("a polynomial map needs at least a constant term")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x: float) -> float:
        return eval_map(self, x)


def eval_map(poly: PolynomialMap, x: float) -> float:
    """Horner evaluation of the deterministic part at x."""
    acc = 0.0
    for c in reversed(poly.coefficients):
        acc = acc * x + c
    return acc


def quadratic_map(q: float) -> PolynomialMap:
    """1 - q x^2, padded to quintic length."""
    return PolynomialMap((1.0, 0.0, -q, 0.0, 0.0, 0.0))


def cubic_map(c: float) -> PolynomialMap:
    """0.05 + c x - 0.99 x^3, padded to quintic length."""
    return PolynomialMap((0.05, c, 0.0, -0.99, 0.0, 0.0))


# The synthetic maps used throughout the numerical experiments.
NAMED_MAPS = {
    "Q1": quadratic_map(1.65),
    "Q2": quadratic_map(1.71),
    "Q3": quadratic_map(1.75),
    "C1": cubic_map(2.55),
    "C2": cubic_map(2.65),
}


@dataclass(frozen=True)
class NoiseMixtureSpec:
    """Finite zero-mean Gaussian mixture: weights over per-component variances."""

    weights: tuple
    variances: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        v = tuple(float(x) for x in self.variances)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variances", v)
        if len(w) != len(v) or len(w) == 0:
            raise ValueError("weights and variances must be non-empty and equal length")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(w)}")
        if any(x <= 0 for x in v) or any(x < 0 for x in w):
            raise ValueError("variances must be positive, weights non-negative")

    @property
    def variance(self) -> float:
        return sum(w * v for w, v in zip(self.weights, self.variances))


def compound_noise(selection: Sequence[float], components: Sequence[Optional[NoiseMixtureSpec]]) -> NoiseMixtureSpec:
    """Compound a selection-probability row with shared component mixtures.

    Entries of ``components`` with zero selection weight may be None. The
    result is one flat mixture whose shared sub-blocks carry identical
    parameters wherever the same component object is reused across series.
    """
    weights, variances = [], []
    for p, comp in zip(selection, components):
        if p == 0:
            continue
        if comp is None:
            raise ValueError("nonzero selection weight on a missing component")
        for w, v in zip(comp.weights, comp.variances):
            weights.append(p * w)
            variances.append(v)
    return NoiseMixtureSpec(tuple(weights), tuple(variances))


def sample_noise(spec: NoiseMixtureSpec, rng: RngHandle) -> float:
    """One draw from the finite mixture."""
    k = draw_categorical(np.asarray(spec.weights), rng)
    return float(rng.generator.normal(0.0, math.sqrt(spec.variances[k])))


@dataclass(frozen=True)
class EscapeReport:
    escaped: bool
    escape_index: Optional[int]
    bound: float


def detect_escape(series: Sequence[float], bound: float) -> EscapeReport:
    """First index at which |x_i| exceeds the bound, scanning from the start."""
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    for i, x in enumerate(series):
        if abs(x) > bound:
            return EscapeReport(True, i, bound)
    return EscapeReport(False, None, bound)


@dataclass
class MultiSeries:
    """Observed multi-series with optional synthetic ground truth."""

    series: list  # list of 1-d float arrays
    x0_true: Optional[list] = None
    maps_true: Optional[list] = None
    noise_true: Optional[list] = None
    futures_true: Optional[list] = None
    selection_true: Optional[list] = None  # generating selection rows, if synthetic

    def __post_init__(self):
        self.series = [np.asarray(s, dtype=float) for s in self.series]
        for j, s in enumerate(self.series):
            if s.size < 2:
                raise ValueError(f"series {j} has fewer than 2 observations")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"series {j} contains non-finite values")

    @property
    def m(self) -> int:
        return len(self.series)

    @property
    def lengths(self) -> list:
        return [int(s.size) for s in self.series]

    def to_json_dict(self) -> dict:
        doc = {"m": self.m, "series": [s.tolist() for s in self.series]}
        if self.maps_true is not None:
            doc["truth"] = {
                "x0": list(self.x0_true) if self.x0_true is not None else None,
                "maps": [list(p.coefficients) for p in self.maps_true],
                "noise": [
                    {"weights": list(n.weights), "variances": list(n.variances)}
                    for n in self.noise_true
                ],
                "futures": [list(map(float, f)) for f in self.futures_true]
                if self.futures_true is not None
                else None,
                "selection": [list(map(float, r)) for r in self.selection_true]
                if self.selection_true is not None
                else None,
            }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MultiSeries":
        truth = doc.get("truth")
        kwargs = {}
        if truth is not None:
            kwargs = {
                "x0_true": truth.get("x0"),
                "maps_true": [PolynomialMap(tuple(c)) for c in truth["maps"]],
                "noise_true": [
                    NoiseMixtureSpec(tuple(n["weights"]), tuple(n["variances"]))
                    for n in truth["noise"]
                ],
                "futures_true": [np.asarray(f, dtype=float) for f in truth["futures"]]
                if truth.get("futures") is not None
                else None,
                "selection_true": truth.get("selection"),
            }
        return cls(series=[np.asarray(s, dtype=float) for s in doc["series"]], **kwargs)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load_json(cls, path) -> "MultiSeries":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def save_csv(self, directory, stem: str = "series") -> list:
        """One CSV per series with columns (index, value). Returns the paths."""
        import os

        paths = []
        for j, s in enumerate(self.series):
            path = os.path.join(directory, f"{stem}_{j + 1}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["index", "value"])
                for i, x in enumerate(s, start=1):
                    writer.writerow([i, repr(float(x))])
            paths.append(path)
        return paths


def simulate_series(
    poly: PolynomialMap,
    noise: NoiseMixtureSpec,
    n: int,
    x0: float,
    horizon: int,
    rng: RngHandle,
    series_index: Optional[int] = None,
):
    """Simulate n observations plus ``horizon`` held-out futures from one map.

    The futures continue the recursion in the same RNG stream, so the truth is
    reproducible from the data seed alone. Raises DivergenceError (with the
    finite prefix attached) when a value leaves the guard region.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    values = np.empty(n + horizon)
    x = float(x0)
    for i in range(n + horizon):
        x = eval_map(poly, x) + sample_noise(noise, rng)
        if not math.isfinite(x) or abs(x) > DIVERGENCE_BOUND:
            raise DivergenceError(i, series=series_index, prefix=values[:i].copy())
        values[i] = x
    return values[:n].copy(), values[n:].copy()


def simulate_multi(specs, horizons, rng: RngHandle) -> MultiSeries:
    """Simulate m series from per-series (map, noise, n, x0) specs.

    ``specs`` is a sequence of (PolynomialMap, NoiseMixtureSpec, n, x0);
    ``horizons`` gives the held-out length per series.
    """
    obs, futs, maps, noises, x0s = [], [], [], [], []
    for j, ((poly, noise, n, x0), horizon) in enumerate(zip(specs, horizons)):
        series, future = simulate_series(poly, noise, n, x0, horizon, rng, series_index=j)
        obs.append(series)
        futs.append(future)
        maps.append(poly)
        noises.append(noise)
        x0s.append(float(x0))
    return MultiSeries(
        series=obs, x0_true=x0s, maps_true=maps, noise_true=noises, futures_true=futs
    )
