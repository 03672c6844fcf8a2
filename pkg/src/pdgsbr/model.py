"""Latent state, hyperparameters and shared-atom bookkeeping for the sampler.

Index conventions: series are 0-based internally (j = 0..m-1), measure and
cluster labels in allocations are stored 0-based (delta in 0..m-1) except for
the cluster index d which stays 1-based to match the slice constraint
d <= N. Allocation arrays run over i = 0..n_j+T_j-1, i.e. observed points
followed by the out-of-sample latent points.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distributions import RngHandle, draw_beta, draw_categorical, draw_dirichlet, draw_gamma
from .dynamics import MultiSeries, PolynomialMap, eval_map

# Starting slice bound. Starting from N = d = 1 is degenerate: the first
# geometric-probability update then sees zero tail counts, jumps to the
# lambda ~ 1 corner and locks every point into a single cluster, a
# self-reinforcing mode the chain escapes only slowly. A dispersed start
# gives the allocation block room to form clusters before lambda settles.
INIT_SLICE_BOUND = 10


@dataclass
class PriorConfig:
    """Every fixed hyperparameter of the hierarchical model.

    Flat (improper) priors are used for the control parameters and the
    initial conditions; x0_support bounds the slice-sampling window for the
    latter.
    """

    m: int
    dirichlet_alpha: np.ndarray  # m x m, rows are the Dirichlet parameters of p_j
    beta_a: np.ndarray  # m x m symmetric
    beta_b: np.ndarray  # m x m symmetric
    gamma_a: float = 1e-3
    gamma_b: float = 1e-3
    poly_degree: int = 5
    horizon: Optional[np.ndarray] = None  # T_j per series, default 1
    x0_support: Optional[np.ndarray] = None  # (lo, hi) per series, default [-5, 5]

    def __post_init__(self):
        m = self.m
        self.dirichlet_alpha = np.broadcast_to(
            np.asarray(self.dirichlet_alpha, dtype=float), (m, m)
        ).copy()
        self.beta_a = np.broadcast_to(np.asarray(self.beta_a, dtype=float), (m, m)).copy()
        self.beta_b = np.broadcast_to(np.asarray(self.beta_b, dtype=float), (m, m)).copy()
        if self.horizon is None:
            self.horizon = np.ones(m, dtype=int)
        self.horizon = np.broadcast_to(np.asarray(self.horizon, dtype=int), (m,)).copy()
        if self.x0_support is None:
            self.x0_support = np.tile([-5.0, 5.0], (m, 1))
        self.x0_support = np.broadcast_to(
            np.asarray(self.x0_support, dtype=float), (m, 2)
        ).copy()
        for name, mat in (("dirichlet_alpha", self.dirichlet_alpha),
                          ("beta_a", self.beta_a), ("beta_b", self.beta_b)):
            if np.any(mat <= 0) or not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} entries must be positive and finite")
        for name in ("beta_a", "beta_b"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
        if self.gamma_a <= 0 or self.gamma_b <= 0:
            raise ValueError("gamma hyperparameters must be positive")
        if np.any(self.horizon < 0):
            raise ValueError("horizons must be non-negative")

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "dirichlet_alpha": self.dirichlet_alpha.tolist(),
            "beta_a": self.beta_a.tolist(),
            "beta_b": self.beta_b.tolist(),
            "gamma_a": self.gamma_a,
            "gamma_b": self.gamma_b,
            "poly_degree": self.poly_degree,
            "horizon": self.horizon.tolist(),
            "x0_support": self.x0_support.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PriorConfig":
        return cls(
            m=doc["m"],
            dirichlet_alpha=np.asarray(doc["dirichlet_alpha"]),
            beta_a=np.asarray(doc["beta_a"]),
            beta_b=np.asarray(doc["beta_b"]),
            gamma_a=doc["gamma_a"],
            gamma_b=doc["gamma_b"],
            poly_degree=doc["poly_degree"],
            horizon=np.asarray(doc["horizon"]),
            x0_support=np.asarray(doc["x0_support"]),
        )


class AtomTable:
    """Growable precision atoms, one sequence per unordered series pair.

    Storage is keyed by the sorted pair, so reads and writes through (j, l)
    and (l, j) always hit the same sequence: the shared measures are equal
    by construction, not by convention.
    """

    def __init__(self, m: int):
        self.m = m
        self._atoms = {(j, l): [] for j in range(m) for l in range(j, m)}

    @staticmethod
    def _key(j: int, l: int):
        return (j, l) if j <= l else (l, j)

    def size(self, j: int, l: int) -> int:
        return len(self._atoms[self._key(j, l)])

    def get(self, j: int, l: int, k: int) -> float:
        """Precision of the k-th atom (k is 1-based, matching cluster labels)."""
        return self._atoms[self._key(j, l)][k - 1]

    def set(self, j: int, l: int, k: int, value: float) -> None:
        if value <= 0:
            raise ValueError("precisions must be strictly positive")
        self._atoms[self._key(j, l)][k - 1] = float(value)

    def append(self, j: int, l: int, value: float) -> None:
        if value <= 0:
            raise ValueError("precisions must be strictly positive")
        self._atoms[self._key(j, l)].append(float(value))

    def row(self, j: int, l: int) -> np.ndarray:
        return np.asarray(self._atoms[self._key(j, l)], dtype=float)

    def max_size(self) -> int:
        return max(len(v) for v in self._atoms.values())

    def trim(self, size: int) -> None:
        """Drop atoms beyond ``size`` in every pair.

        Atoms above the current slice bound contribute nothing to any full
        conditional and are redrawn from the base measure whenever a bound
        grows back, so discarding them leaves the chain's law unchanged while
        keeping the table (and every kernel that scans it) small.
        """
        if size < 1:
            raise ValueError(f"size must be >= 1, got {size}")
        for key in self._atoms:
            del self._atoms[key][size:]

    def pairs(self):
        return sorted(self._atoms.keys())

    def to_dict(self) -> dict:
        return {f"{j},{l}": list(v) for (j, l), v in self._atoms.items()}

    @classmethod
    def from_dict(cls, m: int, doc: dict) -> "AtomTable":
        table = cls(m)
        for key, values in doc.items():
            j, l = (int(t) for t in key.split(","))
            table._atoms[(j, l)] = [float(v) for v in values]
        return table


@dataclass
class Allocations:
    """Per-observation latent labels: measure delta, cluster d, slice bound N."""

    delta: list  # per series: int array in 0..m-1
    d: list  # per series: int array, 1-based cluster labels
    N: list  # per series: int array, N >= d

    def validate(self, m: int) -> None:
        for j in range(len(self.delta)):
            if np.any(self.d[j] > self.N[j]) or np.any(self.d[j] < 1):
                raise ValueError(f"slice constraint d <= N violated in series {j}")
            if np.any(self.delta[j] < 0) or np.any(self.delta[j] >= m):
                raise ValueError(f"measure label out of range in series {j}")

    def to_dict(self) -> dict:
        return {
            "delta": [a.tolist() for a in self.delta],
            "d": [a.tolist() for a in self.d],
            "N": [a.tolist() for a in self.N],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Allocations":
        return cls(
            delta=[np.asarray(a, dtype=int) for a in doc["delta"]],
            d=[np.asarray(a, dtype=int) for a in doc["d"]],
            N=[np.asarray(a, dtype=int) for a in doc["N"]],
        )


@dataclass
class ChainState:
    """All latent variables of one Gibbs chain."""

    atoms: AtomTable
    alloc: Allocations
    p: np.ndarray  # m x m stochastic matrix
    lam: np.ndarray  # m x m symmetric, entries in (0, 1)
    theta: list  # per series: coefficient array of length R+1
    x0: np.ndarray  # per series initial condition
    future: list  # per series: array of T_j out-of-sample values
    iteration: int = 0
    init_fallback: Optional[list] = None  # True where OLS init was singular
    tau_common: Optional[float] = None  # only used by the parametric baseline

    @property
    def m(self) -> int:
        return self.p.shape[0]

    def validate(self) -> None:
        if np.max(np.abs(self.p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("selection-probability rows must sum to 1")
        if np.any(self.lam <= 0) or np.any(self.lam >= 1):
            raise ValueError("geometric probabilities must lie in (0, 1)")
        if not np.allclose(self.lam, self.lam.T):
            raise ValueError("lambda matrix must be symmetric")
        self.alloc.validate(self.m)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "atoms": self.atoms.to_dict(),
            "alloc": self.alloc.to_dict(),
            "p": self.p.tolist(),
            "lam": self.lam.tolist(),
            "theta": [t.tolist() for t in self.theta],
            "x0": self.x0.tolist(),
            "future": [f.tolist() for f in self.future],
            "iteration": self.iteration,
            "init_fallback": self.init_fallback,
            "tau_common": self.tau_common,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChainState":
        return cls(
            atoms=AtomTable.from_dict(doc["m"], doc["atoms"]),
            alloc=Allocations.from_dict(doc["alloc"]),
            p=np.asarray(doc["p"], dtype=float),
            lam=np.asarray(doc["lam"], dtype=float),
            theta=[np.asarray(t, dtype=float) for t in doc["theta"]],
            x0=np.asarray(doc["x0"], dtype=float),
            future=[np.asarray(f, dtype=float) for f in doc["future"]],
            iteration=doc["iteration"],
            init_fallback=doc.get("init_fallback"),
            tau_common=doc.get("tau_common"),
        )


@dataclass
class TraceRecord:
    """One retained (post burn-in, post thinning) Gibbs iteration."""

    iteration: int
    theta: list
    p: Optional[np.ndarray]
    lam: Optional[np.ndarray]
    x0: np.ndarray
    future: list
    z_pred: np.ndarray
    atom_counts: Optional[dict] = None  # {"j,l": K_jl}
    tau_common: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "theta": [np.asarray(t).tolist() for t in self.theta],
            "p": None if self.p is None else np.asarray(self.p).tolist(),
            "lam": None if self.lam is None else np.asarray(self.lam).tolist(),
            "x0": np.asarray(self.x0).tolist(),
            "future": [np.asarray(f).tolist() for f in self.future],
            "z_pred": np.asarray(self.z_pred).tolist(),
            "atom_counts": self.atom_counts,
            "tau_common": self.tau_common,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TraceRecord":
        return cls(
            iteration=doc["iteration"],
            theta=[np.asarray(t, dtype=float) for t in doc["theta"]],
            p=None if doc.get("p") is None else np.asarray(doc["p"], dtype=float),
            lam=None if doc.get("lam") is None else np.asarray(doc["lam"], dtype=float),
            x0=np.asarray(doc["x0"], dtype=float),
            future=[np.asarray(f, dtype=float) for f in doc["future"]],
            z_pred=np.asarray(doc["z_pred"], dtype=float),
            atom_counts=doc.get("atom_counts"),
            tau_common=doc.get("tau_common"),
        )

    def flat_columns(self) -> dict:
        """Flattened scalar columns, in a stable documented order."""
        cols = {"iteration": self.iteration}
        for j, t in enumerate(self.theta):
            for r, v in enumerate(np.asarray(t)):
                cols[f"theta_{j + 1}_{r}"] = float(v)
        if self.p is not None:
            m = np.asarray(self.p).shape[0]
            for j in range(m):
                for l in range(m):
                    cols[f"p_{j + 1}_{l + 1}"] = float(self.p[j, l])
            for j in range(m):
                for l in range(j, m):
                    cols[f"lam_{j + 1}_{l + 1}"] = float(self.lam[j, l])
        for j, v in enumerate(np.asarray(self.x0)):
            cols[f"x0_{j + 1}"] = float(v)
        for j, f in enumerate(self.future):
            for k, v in enumerate(np.asarray(f)):
                cols[f"future_{j + 1}_{k + 1}"] = float(v)
        for j, v in enumerate(np.asarray(self.z_pred)):
            cols[f"z_pred_{j + 1}"] = float(v)
        if self.atom_counts is not None:
            for key, count in sorted(self.atom_counts.items()):
                cols[f"K_{key.replace(',', '_')}"] = int(count)
        if self.tau_common is not None:
            cols["tau"] = float(self.tau_common)
        return cols


def geometric_weights(lam: float, K: int) -> np.ndarray:
    """K leading geometric weights lam (1-lam)^(k-1) plus the exact tail lump.

    The tail is computed as (1-lam)^K so the vector sums to 1 exactly.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    one_minus = 1.0 - lam
    head = lam * one_minus ** np.arange(K)
    return np.append(head, one_minus ** K)


def ensure_atoms(state: ChainState, prior: PriorConfig, rng: RngHandle) -> ChainState:
    """Resize every pair's atom sequence to exactly N* = max N_{ji}.

    Missing atoms are fresh draws from the Gamma(a, b) base measure; surplus
    ones are dropped (see AtomTable.trim). Growth happens in sorted pair
    order so the draw sequence is reproducible.
    """
    n_star = max(int(np.max(N)) for N in state.alloc.N)
    state.atoms.trim(n_star)
    for j, l in state.atoms.pairs():
        while state.atoms.size(j, l) < n_star:
            state.atoms.append(j, l, draw_gamma(prior.gamma_a, prior.gamma_b, rng))
    return state


def init_chain(data: MultiSeries, prior: PriorConfig, rng: RngHandle) -> ChainState:
    """Starting state: prior draws for (p, lambda, delta), least squares for
    theta, residual-quantile precisions for the initial atoms.

    The model is silent about initialization; any finite start is valid under
    the flat priors, and least squares shortens burn-in considerably. A
    singular design falls back to theta = 0 with a per-series warning flag.
    """
    m = data.m
    if prior.m != m:
        raise ValueError(f"prior is for m={prior.m} but data has m={m} series")
    R = prior.poly_degree

    p = np.vstack([draw_dirichlet(prior.dirichlet_alpha[j], rng) for j in range(m)])
    lam = np.eye(m)
    for j in range(m):
        for l in range(j, m):
            lam[j, l] = lam[l, j] = draw_beta(prior.beta_a[j, l], prior.beta_b[j, l], rng)

    theta, fallback, sq_resid = [], [], []
    for j in range(m):
        x = data.series[j]
        design = np.vander(x[:-1], R + 1, increasing=True)
        coeffs, _, rank, _ = np.linalg.lstsq(design, x[1:], rcond=None)
        if rank < R + 1 or not np.all(np.isfinite(coeffs)):
            theta.append(np.zeros(R + 1))
            fallback.append(True)
        else:
            theta.append(coeffs)
            fallback.append(False)
        sq_resid.append((x[1:] - design @ theta[j]) ** 2)

    # Initial atoms matched to the least-squares residual scales. Base-measure
    # draws with shape 1e-3 are so diffuse that early allocation sweeps rarely
    # form more than one usable cluster, which can lock the geometric
    # probabilities near 1 for a long stretch of the run.
    atoms = AtomTable(m)
    probs = (np.arange(INIT_SLICE_BOUND) + 0.5) / INIT_SLICE_BOUND
    for j, l in atoms.pairs():
        pooled = sq_resid[j] if j == l else np.concatenate((sq_resid[j], sq_resid[l]))
        scales = np.maximum(np.quantile(pooled, probs), 1e-12)
        for value in 1.0 / scales:
            atoms.append(j, l, value)

    delta, d, N = [], [], []
    for j in range(m):
        total = data.lengths[j] + int(prior.horizon[j])
        delta.append(
            np.asarray([draw_categorical(p[j], rng) for _ in range(total)], dtype=int)
        )
        d.append(rng.generator.integers(1, INIT_SLICE_BOUND + 1, size=total))
        N.append(np.full(total, INIT_SLICE_BOUND, dtype=int))
    alloc = Allocations(delta=delta, d=d, N=N)

    x0 = np.asarray([float(s[0]) for s in data.series])
    future = []
    for j in range(m):
        poly = PolynomialMap(tuple(theta[j]))
        vals, x = [], float(data.series[j][-1])
        for _ in range(int(prior.horizon[j])):
            x = eval_map(poly, x)
            if not np.isfinite(x) or abs(x) > 1e6:  # keep the start numerically tame
                x = float(data.series[j][-1])
            vals.append(x)
        future.append(np.asarray(vals))

    state = ChainState(
        atoms=atoms, alloc=alloc, p=p, lam=lam, theta=theta, x0=x0,
        future=future, iteration=0, init_fallback=fallback,
    )
    state.validate()
    return state


# --- checkpoint and trace I/O -----------------------------------------------

def save_checkpoint(path, state: ChainState, rng: RngHandle, extra: Optional[dict] = None) -> None:
    doc = {"state": state.to_dict(), "rng": rng.get_state()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    return ChainState.from_dict(doc["state"]), RngHandle.from_state(doc["rng"]), doc


def write_trace_csv(path, records) -> None:
    if not records:
        raise ValueError("empty trace")
    fieldnames = list(records[0].flat_columns().keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for record in records:
            row = record.flat_columns()
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_trace_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict()) + "\n")


def read_trace_jsonl(path) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TraceRecord.from_json_dict(json.loads(line)))
    return records
