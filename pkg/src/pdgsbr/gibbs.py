"""Full-conditional kernels and chain drivers.

One sweep applies, in a fixed documented order: the (d, delta) block, the
slice bounds N (with atom growth), the precisions, the selection rows, the
geometric probabilities, the control parameters, the initial conditions, the
out-of-sample points, and finally the noise-predictive draws. Any fixed scan
order is a valid Gibbs sampler; fixing it makes traces reproducible.

All mixture weights are computed in log space with max-subtraction: the
precisions span many orders of magnitude and linear-space products underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import (
    RngHandle,
    UnnormalizedLogDensity,
    draw_beta,
    draw_categorical,
    draw_dirichlet,
    draw_gamma,
    slice_sample_1d,
)
from .dynamics import MultiSeries, PolynomialMap, eval_map
from .errors import SingularDesignError
from .model import (
    Allocations,
    ChainState,
    PriorConfig,
    TraceRecord,
    ensure_atoms,
    geometric_weights,
    init_chain,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

# Slice-sampling window for interior out-of-sample points (their flat prior
# needs a bounded support; orbits of interest live deep inside it).
FUTURE_SUPPORT = (-1e6, 1e6)

# Condition-number threshold beyond which a control-parameter draw refuses to
# proceed; silently regularizing would change the stated model.
THETA_COND_LIMIT = 1e12

# Hard ceiling on the slice bounds N. A freshly drawn geometric probability
# on a currently unused pair can be arbitrarily close to 0, which would make
# the bound (and with it the atom table and the allocation block) explode by
# orders of magnitude for one transient sweep. Truncating at 2000 discards
# mixture mass of at most (1 - lambda)^2000, which only matters in exactly
# those transient states.
SLICE_BOUND_CAP = 2000


@dataclass
class GibbsConfig:
    """Run-length and tuning knobs of one chain."""

    iterations: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    slice_width: float = 0.25
    max_stepout: int = 16
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.slice_width <= 0 or self.max_stepout < 1:
            raise ValueError("invalid slice-sampler tuning")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "seed": self.seed,
            "slice_width": self.slice_width,
            "max_stepout": self.max_stepout,
            "checkpoint_interval": self.checkpoint_interval,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GibbsConfig":
        return cls(**doc)


# --- shared helpers -----------------------------------------------------------

def full_path(state: ChainState, data: MultiSeries, j: int) -> np.ndarray:
    """The complete state sequence x_{j,0}, ..., x_{j,n_j+T_j} of series j."""
    return np.concatenate(([state.x0[j]], data.series[j], state.future[j]))


def residuals(state: ChainState, data: MultiSeries, j: int) -> np.ndarray:
    """Squared residuals h_i = (x_{ji} - g_j(theta_j, x_{j,i-1}))^2, i = 1..n_j+T_j."""
    xs = full_path(state, data, j)
    preds = np.polynomial.polynomial.polyval(xs[:-1], state.theta[j])
    return (xs[1:] - preds) ** 2


def _atom_matrix(state: ChainState, j: int) -> np.ndarray:
    """Precisions tau_{jlk} as an (m, K) matrix for fixed series j."""
    rows = [state.atoms.row(j, l) for l in range(state.m)]
    K = max(len(r) for r in rows)
    out = np.full((state.m, K), np.nan)
    for l, r in enumerate(rows):
        out[l, : len(r)] = r
    return out


def _tau_per_point(state: ChainState, j: int) -> np.ndarray:
    """Allocated precision tau_{j, delta_ji, d_ji} for every point of series j."""
    taus = _atom_matrix(state, j)
    return taus[state.alloc.delta[j], state.alloc.d[j] - 1]


# --- densities used by the marginalization oracle ------------------------------

def normal_pdf(x: float, mean: float, tau: float) -> float:
    """Gaussian density with precision parameterization."""
    return math.sqrt(tau / (2.0 * math.pi)) * math.exp(-0.5 * tau * (x - mean) ** 2)


def augmented_joint_density(x, x_prev, r, k, l, theta, p_row, lam_row, tau_rows) -> float:
    """Joint density of (x, N=r, d=k, delta=l) given the rest of one series' block.

    Zero outside the slice constraint k <= r.
    """
    if k > r or k < 1 or r < 1:
        return 0.0
    lam = lam_row[l]
    tau = tau_rows[l][k - 1]
    g = eval_map(PolynomialMap(tuple(theta)), x_prev)
    return p_row[l] * lam ** 2 * (1.0 - lam) ** (r - 1) * normal_pdf(x, g, tau)


def mixture_partial_density(x, x_prev, theta, p_row, lam_row, tau_rows, K: int) -> float:
    """Leading-K part of the noise-convolved transition mixture density."""
    g = eval_map(PolynomialMap(tuple(theta)), x_prev)
    total = 0.0
    for l in range(len(p_row)):
        lam = lam_row[l]
        for k in range(1, K + 1):
            total += p_row[l] * lam * (1.0 - lam) ** (k - 1) * normal_pdf(x, g, tau_rows[l][k - 1])
    return total


# --- posterior-parameter helpers (kernels draw from these; tests audit them) ---

def precision_posterior_params(state: ChainState, data: MultiSeries, prior: PriorConfig) -> dict:
    """Gamma (shape, rate) of every atom's full conditional, keyed by (j, l, k).

    Counts and residual sums run over the whole augmented index range
    i = 1..n_j+T_j and pool both series of an off-diagonal pair.
    """
    m = state.m
    K = state.atoms.max_size()
    counts = np.zeros((m, m, K))
    rsums = np.zeros((m, m, K))
    for j in range(m):
        h = residuals(state, data, j)
        np.add.at(counts[j], (state.alloc.delta[j], state.alloc.d[j] - 1), 1.0)
        np.add.at(rsums[j], (state.alloc.delta[j], state.alloc.d[j] - 1), h)
    params = {}
    for j, l in state.atoms.pairs():
        for k in range(1, state.atoms.size(j, l) + 1):
            c = counts[j, l, k - 1] + (counts[l, j, k - 1] if j < l else 0.0)
            r = rsums[j, l, k - 1] + (rsums[l, j, k - 1] if j < l else 0.0)
            params[(j, l, k)] = (prior.gamma_a + 0.5 * c, prior.gamma_b + 0.5 * r)
    return params


def selection_posterior_alpha(state: ChainState, prior: PriorConfig) -> np.ndarray:
    """Dirichlet parameters alpha_{jl} + #{i : delta_ji = l} for every row."""
    m = state.m
    counts = np.zeros((m, m))
    for j in range(m):
        np.add.at(counts[j], state.alloc.delta[j], 1.0)
    return prior.dirichlet_alpha + counts


def geometric_posterior_params(state: ChainState, prior: PriorConfig):
    """Beta (a, b) of every lambda_{jl} full conditional (j <= l keys).

    Uses S_{jl} = #{i : delta_ji = l} and S'_{jl} = sum over those i of
    (N_ji - 1); an off-diagonal pair pools both orientations.
    """
    m = state.m
    S = np.zeros((m, m))
    Sp = np.zeros((m, m))
    for j in range(m):
        np.add.at(S[j], state.alloc.delta[j], 1.0)
        np.add.at(Sp[j], state.alloc.delta[j], state.alloc.N[j] - 1.0)
    params = {}
    for j in range(m):
        for l in range(j, m):
            pooled_S = S[j, l] + (S[l, j] if j < l else 0.0)
            pooled_Sp = Sp[j, l] + (Sp[l, j] if j < l else 0.0)
            params[(j, l)] = (prior.beta_a[j, l] + 2.0 * pooled_S, prior.beta_b[j, l] + pooled_Sp)
    return params


def parametric_tau_params(state: ChainState, data: MultiSeries, prior: PriorConfig):
    """Gamma (shape, rate) of the common-precision full conditional."""
    total_n = sum(data.lengths[j] + len(state.future[j]) for j in range(state.m))
    rss = sum(float(residuals(state, data, j).sum()) for j in range(state.m))
    return prior.gamma_a + 0.5 * total_n, prior.gamma_b + 0.5 * rss


# --- the nine kernels -----------------------------------------------------------

def update_alloc_block(state: ChainState, data: MultiSeries, prior: PriorConfig,
                       rng: RngHandle) -> ChainState:
    """Jointly redraw (d_ji, delta_ji) from p_{jl} N(x_ji | g_j, 1/tau_{jlk}).

    The support is l = 1..m, k = 1..N_ji; weights are normalized in log space
    so extreme precisions can never underflow the whole block to zero.
    """
    for j in range(state.m):
        h = residuals(state, data, j)
        taus = _atom_matrix(state, j)  # (m, K)
        K = taus.shape[1]
        with np.errstate(invalid="ignore"):
            base = np.log(state.p[j])[:, None] + 0.5 * np.log(taus)
        logw = base[None, :, :] - 0.5 * taus[None, :, :] * h[:, None, None]
        karange = np.arange(K)
        mask = karange[None, None, :] >= state.alloc.N[j][:, None, None]
        logw = np.where(mask | ~np.isfinite(logw), -np.inf, logw)
        flat = logw.reshape(h.size, state.m * K)
        peak = flat.max(axis=1, keepdims=True)
        weights = np.exp(flat - peak)
        cdf = np.cumsum(weights, axis=1)
        u = rng.generator.random(h.size) * cdf[:, -1]
        idx = np.minimum((cdf < u[:, None]).sum(axis=1), state.m * K - 1)
        state.alloc.delta[j] = (idx // K).astype(int)
        state.alloc.d[j] = (idx % K + 1).astype(int)
    return state


def update_slice_N(state: ChainState, prior: PriorConfig, rng: RngHandle) -> ChainState:
    """Redraw every slice bound from its truncated geometric and grow atoms.

    Inversion on the closed-form tail CDF: N = d + floor(log(1-u)/log(1-lam)).
    """
    for j in range(state.m):
        lam_i = state.lam[j, state.alloc.delta[j]]
        u = rng.generator.random(lam_i.size)
        offset = np.floor(np.log1p(-u) / np.log1p(-lam_i))
        bound = state.alloc.d[j] + np.minimum(offset, SLICE_BOUND_CAP).astype(int)
        state.alloc.N[j] = np.minimum(bound, SLICE_BOUND_CAP)
        np.maximum(state.alloc.N[j], state.alloc.d[j], out=state.alloc.N[j])
    return ensure_atoms(state, prior, rng)


def update_precisions(state: ChainState, data: MultiSeries, prior: PriorConfig,
                      rng: RngHandle) -> ChainState:
    """Conjugate gamma redraw of every stored atom."""
    params = precision_posterior_params(state, data, prior)
    for (j, l, k), (shape, rate) in sorted(params.items()):
        state.atoms.set(j, l, k, draw_gamma(shape, rate, rng))
    return state


def update_selection_probs(state: ChainState, prior: PriorConfig, rng: RngHandle) -> ChainState:
    """Conjugate Dirichlet redraw of every selection row."""
    alpha_post = selection_posterior_alpha(state, prior)
    for j in range(state.m):
        state.p[j] = draw_dirichlet(alpha_post[j], rng)
    return state


def update_geometric_probs(state: ChainState, prior: PriorConfig, rng: RngHandle) -> ChainState:
    """Conjugate beta redraw of every geometric probability (mirrored)."""
    params = geometric_posterior_params(state, prior)
    for (j, l), (a, b) in sorted(params.items()):
        value = draw_beta(a, b, rng)
        state.lam[j, l] = state.lam[l, j] = value
    return state


def update_theta(state: ChainState, data: MultiSeries, prior: PriorConfig,
                 rng: RngHandle, tau_override: Optional[float] = None) -> ChainState:
    """Exact multivariate-normal redraw of each coefficient vector.

    Under the flat prior the full conditional is Gaussian with precision
    matrix sum_i tau_i v_i v_i' over the monomial designs v_i. A condition
    estimate above THETA_COND_LIMIT is an error, never a silent ridge.
    """
    R = prior.poly_degree
    for j in range(state.m):
        xs = full_path(state, data, j)
        V = np.vander(xs[:-1], R + 1, increasing=True)
        tau_i = (np.full(xs.size - 1, tau_override) if tau_override is not None
                 else _tau_per_point(state, j))
        A = V.T @ (V * tau_i[:, None])
        b = V.T @ (tau_i * xs[1:])
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > THETA_COND_LIMIT:
            raise SingularDesignError(j, cond)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(j) from exc
        mu = np.linalg.solve(A, b)
        z = rng.generator.standard_normal(R + 1)
        state.theta[j] = mu + np.linalg.solve(L.T, z)
    return state


def update_x0(state: ChainState, data: MultiSeries, prior: PriorConfig,
              rng: RngHandle, config: Optional[GibbsConfig] = None,
              tau_override: Optional[float] = None) -> ChainState:
    """One slice transition per initial condition.

    The exponent is a polynomial in x0 and can be multimodal (modes near the
    real roots of g(x) - x_1), hence the slice sampler instead of anything
    assuming log-concavity.
    """
    width = config.slice_width if config else 0.25
    stepout = config.max_stepout if config else 16
    for j in range(state.m):
        tau = (tau_override if tau_override is not None
               else state.atoms.get(j, state.alloc.delta[j][0], state.alloc.d[j][0]))
        theta = tuple(state.theta[j])
        x1 = float(data.series[j][0])
        poly = PolynomialMap(theta)

        def log_target(x, _tau=tau, _x1=x1, _poly=poly):
            return -0.5 * _tau * (_x1 - eval_map(_poly, x)) ** 2

        lo, hi = prior.x0_support[j]
        current = float(np.clip(state.x0[j], lo, hi))
        target = UnnormalizedLogDensity(log_target, lo, hi)
        state.x0[j] = slice_sample_1d(target, current, width, stepout, rng)
    return state


def update_future(state: ChainState, data: MultiSeries, prior: PriorConfig,
                  rng: RngHandle, config: Optional[GibbsConfig] = None,
                  tau_override: Optional[float] = None) -> ChainState:
    """Redraw the out-of-sample points: slice transitions for the interior
    ones (two Gaussian factors in the exponent) and an exact normal for the
    terminal one."""
    width = config.slice_width if config else 0.25
    stepout = config.max_stepout if config else 16
    for j in range(state.m):
        T = len(state.future[j])
        if T == 0:
            continue
        n = data.lengths[j]
        xs = full_path(state, data, j)
        poly = PolynomialMap(tuple(state.theta[j]))

        def tau_at(i):  # precision allocated to observation index i (1-based)
            if tau_override is not None:
                return tau_override
            return state.atoms.get(j, state.alloc.delta[j][i - 1], state.alloc.d[j][i - 1])

        for k in range(1, T):
            pos = n + k  # index of x_{j,n+k} inside xs
            tau_here = tau_at(n + k)
            tau_next = tau_at(n + k + 1)
            x_prev, x_next = xs[pos - 1], xs[pos + 1]
            g_prev = eval_map(poly, x_prev)

            def log_target(v, _t1=tau_here, _t2=tau_next, _gp=g_prev, _xn=x_next, _poly=poly):
                return -0.5 * (_t1 * (v - _gp) ** 2 + _t2 * (_xn - eval_map(_poly, v)) ** 2)

            target = UnnormalizedLogDensity(log_target, *FUTURE_SUPPORT)
            current = float(np.clip(xs[pos], *FUTURE_SUPPORT))
            xs[pos] = slice_sample_1d(target, current, width, stepout, rng)

        tau_T = tau_at(n + T)
        mean = eval_map(poly, xs[n + T - 1])
        xs[n + T] = rng.generator.normal(mean, tau_T ** -0.5)
        state.future[j] = xs[n + 1:].copy()
    return state


def sample_noise_predictive(state: ChainState, prior: PriorConfig, rng: RngHandle) -> np.ndarray:
    """Per-series draw from the noise predictive.

    Scans the updated selection row, then the geometric weights with the
    exact tail lump; a tail selection draws a fresh atom from the base
    measure.
    """
    n_star = state.atoms.max_size()
    z = np.empty(state.m)
    for j in range(state.m):
        l = draw_categorical(state.p[j], rng)
        weights = geometric_weights(state.lam[j, l], n_star)
        k = draw_categorical(weights, rng)
        if k == n_star:  # tail lump
            tau = draw_gamma(prior.gamma_a, prior.gamma_b, rng)
        else:
            tau = state.atoms.get(j, l, k + 1)
        z[j] = rng.generator.normal(0.0, tau ** -0.5)
    return z


def sweep(state: ChainState, data: MultiSeries, prior: PriorConfig,
          config: GibbsConfig, rng: RngHandle):
    """One full Gibbs scan. Returns the state and the noise-predictive draws."""
    update_alloc_block(state, data, prior, rng)
    update_slice_N(state, prior, rng)
    update_precisions(state, data, prior, rng)
    update_selection_probs(state, prior, rng)
    update_geometric_probs(state, prior, rng)
    update_theta(state, data, prior, rng)
    update_x0(state, data, prior, rng, config)
    update_future(state, data, prior, rng, config)
    z = sample_noise_predictive(state, prior, rng)
    state.iteration += 1
    return state, z


def parametric_sweep(state: ChainState, data: MultiSeries, prior: PriorConfig,
                     config: GibbsConfig, rng: RngHandle):
    """One scan of the common-precision Gaussian baseline."""
    shape, rate = parametric_tau_params(state, data, prior)
    state.tau_common = draw_gamma(shape, rate, rng)
    tau = state.tau_common
    update_theta(state, data, prior, rng, tau_override=tau)
    update_x0(state, data, prior, rng, config, tau_override=tau)
    update_future(state, data, prior, rng, config, tau_override=tau)
    z = rng.generator.normal(0.0, tau ** -0.5, size=state.m)
    state.iteration += 1
    return state, z


def _record(state: ChainState, z: np.ndarray, parametric: bool) -> TraceRecord:
    return TraceRecord(
        iteration=state.iteration,
        theta=[t.copy() for t in state.theta],
        p=None if parametric else state.p.copy(),
        lam=None if parametric else state.lam.copy(),
        x0=state.x0.copy(),
        future=[f.copy() for f in state.future],
        z_pred=np.asarray(z, dtype=float).copy(),
        atom_counts=None if parametric else {
            f"{j},{l}": state.atoms.size(j, l) for j, l in state.atoms.pairs()
        },
        tau_common=state.tau_common if parametric else None,
    )


def _drive(state: ChainState, data: MultiSeries, prior: PriorConfig, config: GibbsConfig,
           rng: RngHandle, step, parametric: bool, checkpoint_path=None):
    records = []
    while state.iteration < config.iterations:
        current = state.iteration + 1
        try:
            state, z = step(state, data, prior, config, rng)
        except Exception as exc:
            exc.iteration = current
            logger.error("chain halted at sweep %d: %s", current, exc)
            raise
        if current > config.burn_in and (current - config.burn_in) % config.thinning == 0:
            records.append(_record(state, z, parametric))
        if checkpoint_path and (current == config.iterations or (
                config.checkpoint_interval and current % config.checkpoint_interval == 0)):
            save_checkpoint(checkpoint_path, state, rng, {"config": config.to_dict()})
        if current % 1000 == 0:
            logger.info("sweep %d/%d", current, config.iterations)
    return records


def run_chain(data: MultiSeries, prior: PriorConfig, config: GibbsConfig,
              checkpoint_path=None, resume=None):
    """Run the pairwise-dependent sampler; returns the retained trace records.

    ``resume`` is an optional (state, rng) pair from a checkpoint; the replay
    is bit-exact because the generator state is serialized alongside.
    """
    if resume is not None:
        state, rng = resume
    else:
        rng = RngHandle(config.seed)
        state = init_chain(data, prior, rng)
    return _drive(state, data, prior, config, rng, sweep, False, checkpoint_path)


def run_gsbr(data: MultiSeries, prior: PriorConfig, config: GibbsConfig, **kwargs):
    """Single-series special case: identical to run_chain with m = 1."""
    if data.m != 1:
        raise ValueError("the single-series sampler needs exactly one series")
    return run_chain(data, prior, config, **kwargs)


def run_parametric_gaussian(data: MultiSeries, prior: PriorConfig, config: GibbsConfig,
                            checkpoint_path=None, resume=None):
    """Common-precision Gaussian baseline over (tau, theta, x0, futures)."""
    if resume is not None:
        state, rng = resume
    else:
        rng = RngHandle(config.seed)
        state = init_chain(data, prior, rng)
        state.tau_common = 1.0
    return _drive(state, data, prior, config, rng, parametric_sweep, True, checkpoint_path)
