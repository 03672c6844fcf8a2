import math

import numpy as np
import pytest

from pdgsbr.distributions import RngHandle
from pdgsbr.dynamics import (
    NAMED_MAPS,
    MultiSeries,
    NoiseMixtureSpec,
    eval_map,
    simulate_multi,
)
from pdgsbr.errors import SingularDesignError
from pdgsbr.gibbs import (
    GibbsConfig,
    augmented_joint_density,
    geometric_posterior_params,
    mixture_partial_density,
    normal_pdf,
    parametric_tau_params,
    precision_posterior_params,
    residuals,
    run_chain,
    run_gsbr,
    run_parametric_gaussian,
    sample_noise_predictive,
    selection_posterior_alpha,
    sweep,
    update_alloc_block,
    update_future,
    update_geometric_probs,
    update_precisions,
    update_selection_probs,
    update_slice_N,
    update_theta,
    update_x0,
)
from pdgsbr.model import (
    Allocations,
    AtomTable,
    ChainState,
    PriorConfig,
    ensure_atoms,
    init_chain,
    load_checkpoint,
)

N_KERNEL = 20_000


def batch_means_se(samples, n_batches=100):
    samples = np.asarray(samples)
    size = len(samples) // n_batches
    means = samples[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batches)


def make_prior(m, R=5, **kw):
    defaults = dict(
        m=m,
        dirichlet_alpha=np.full((m, m), 1.0),
        beta_a=np.full((m, m), 0.5),
        beta_b=np.full((m, m), 0.5),
        poly_degree=R,
    )
    defaults.update(kw)
    return PriorConfig(**defaults)


def single_series_state(series, theta, atom_values, horizon=0, lam=0.5,
                        future=None, d=None, N=None, x0=0.0):
    """Hand-built m = 1 chain state with every latent pinned."""
    n = len(series) + horizon
    atoms = AtomTable(1)
    for v in atom_values:
        atoms.append(0, 0, v)
    K = len(atom_values)
    alloc = Allocations(
        delta=[np.zeros(n, dtype=int)],
        d=[np.asarray(d if d is not None else np.ones(n), dtype=int)],
        N=[np.asarray(N if N is not None else np.full(n, K), dtype=int)],
    )
    state = ChainState(
        atoms=atoms,
        alloc=alloc,
        p=np.array([[1.0]]),
        lam=np.array([[lam]]),
        theta=[np.asarray(theta, dtype=float)],
        x0=np.array([x0]),
        future=[np.asarray(future if future is not None else [], dtype=float)],
    )
    data = MultiSeries(series=[np.asarray(series, dtype=float)])
    return state, data


def random_fixture(seed, m=2, n=25):
    """A randomized multi-series state after a few warm-up sweeps."""
    rng = RngHandle(seed)
    specs = [
        (NAMED_MAPS["Q1"], NoiseMixtureSpec((1.0,), (1e-3,)), n, 0.4 + 0.1 * j)
        for j in range(m)
    ]
    data = simulate_multi(specs, [1] * m, rng)
    prior = make_prior(m)
    state = init_chain(data, prior, rng)
    config = GibbsConfig(iterations=5)
    for _ in range(5):
        sweep(state, data, prior, config, rng)
    return state, data, prior, rng


class TestPosteriorParameterAudits:
    """Compare the vectorized posterior-parameter helpers against plain loops."""

    @pytest.mark.parametrize("seed", range(6))
    def test_precision_params_match_brute_force(self, seed):
        state, data, prior, _ = random_fixture(seed)
        params = precision_posterior_params(state, data, prior)
        h = [residuals(state, data, j) for j in range(state.m)]
        for (j, l, k), (shape, rate) in params.items():
            count, rsum = 0.0, 0.0
            for jj in ((j, l) if j != l else (j,)):
                other = l if jj == j else j
                sel = (state.alloc.delta[jj] == other) & (state.alloc.d[jj] == k)
                count += sel.sum()
                rsum += h[jj][sel].sum()
            assert shape == pytest.approx(prior.gamma_a + 0.5 * count, rel=1e-12)
            assert rate == pytest.approx(prior.gamma_b + 0.5 * rsum, rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_selection_alpha_matches_brute_force(self, seed):
        state, _, prior, _ = random_fixture(seed)
        alpha = selection_posterior_alpha(state, prior)
        for j in range(state.m):
            for l in range(state.m):
                expected = prior.dirichlet_alpha[j, l] + (state.alloc.delta[j] == l).sum()
                assert alpha[j, l] == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("seed", range(6))
    def test_geometric_params_match_brute_force(self, seed):
        state, _, prior, _ = random_fixture(seed)
        params = geometric_posterior_params(state, prior)
        for (j, l), (a, b) in params.items():
            S, Sp = 0.0, 0.0
            for jj in ((j, l) if j != l else (j,)):
                other = l if jj == j else j
                sel = state.alloc.delta[jj] == other
                S += sel.sum()
                Sp += (state.alloc.N[jj][sel] - 1).sum()
            assert a == pytest.approx(prior.beta_a[j, l] + 2.0 * S, rel=1e-14)
            assert b == pytest.approx(prior.beta_b[j, l] + Sp, rel=1e-14)

    @pytest.mark.parametrize("seed", range(4))
    def test_parametric_params_match_brute_force(self, seed):
        state, data, prior, _ = random_fixture(seed)
        shape, rate = parametric_tau_params(state, data, prior)
        total = sum(data.lengths[j] + len(state.future[j]) for j in range(state.m))
        rss = sum(residuals(state, data, j).sum() for j in range(state.m))
        assert shape == pytest.approx(prior.gamma_a + 0.5 * total, rel=1e-14)
        assert rate == pytest.approx(prior.gamma_b + 0.5 * rss, rel=1e-12)


class TestMarginalizationIdentity:
    def test_summing_out_the_augmentation_recovers_the_mixture(self):
        # summing the joint of (x, N, d, delta) over d <= N and delta recovers
        # the leading-K mixture transition density, term by analytic term
        rng = np.random.default_rng(17)
        theta = rng.normal(size=4)
        p_row = np.array([0.3, 0.7])
        lam_row = np.array([0.4, 0.6])
        tau_rows = [rng.gamma(2.0, 1.0, size=3) + 0.1 for _ in range(2)]
        K, R_MAX = 3, 4000
        for _ in range(10):
            x, x_prev = rng.normal(size=2)
            total = 0.0
            for l in range(2):
                for k in range(1, K + 1):
                    for r in range(k, R_MAX + 1):
                        total += augmented_joint_density(
                            x, x_prev, r, k, l, theta, p_row, lam_row, tau_rows
                        )
            expected = mixture_partial_density(x, x_prev, theta, p_row, lam_row, tau_rows, K)
            assert total == pytest.approx(expected, abs=1e-10)

    def test_slice_constraint_zeroes_the_joint(self):
        args = (0.1, 0.2, 1, 2, 0, [0.0], [1.0], [0.5], [[1.0, 2.0]])
        assert augmented_joint_density(*args) == 0.0

    def test_normal_pdf_oracle(self):
        # scipy.stats.norm.pdf(0.3, 1.0, 0.5) with precision 4
        assert normal_pdf(0.3, 1.0, 4.0) == pytest.approx(0.29945493127148975, rel=1e-12)


class TestAllocBlockKernel:
    def test_exact_enumeration_frequencies(self):
        # m = 1, flat map g = 0, two atoms: the block probabilities are
        # proportional to sqrt(tau_k) exp(-tau_k x_i^2 / 2) for k <= N_i = 2
        state, data = single_series_state([0.1, 0.2], [0.0], [1.0, 4.0])
        prior = make_prior(1, R=0)
        rng = RngHandle(21)
        w = np.sqrt([1.0, 4.0]) * np.exp(-0.5 * np.array([1.0, 4.0]) * 0.1 ** 2)
        expected_p2 = w[1] / w.sum()
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_alloc_block(state, data, prior, rng)
            draws[t] = state.alloc.d[0][0]
        freq2 = (draws == 2).mean()
        assert abs(freq2 - expected_p2) < 3.0 * math.sqrt(expected_p2 * (1 - expected_p2) / N_KERNEL)
        assert np.all(state.alloc.delta[0] == 0)

    def test_slice_bound_masks_higher_clusters(self):
        state, data = single_series_state(
            [0.1, 0.2], [0.0], [1e-8, 1e8], N=[1, 1]
        )
        prior = make_prior(1, R=0)
        rng = RngHandle(3)
        for _ in range(200):
            update_alloc_block(state, data, prior, rng)
            assert np.all(state.alloc.d[0] == 1)  # k = 2 is above every N_i

    def test_two_series_measure_selection(self):
        # one shared pair with a precision wildly better-matched to the data
        # pulls the off-diagonal measure with high probability
        rng = RngHandle(8)
        specs = [
            (NAMED_MAPS["Q1"], NoiseMixtureSpec((1.0,), (1e-4,)), 30, 0.4),
            (NAMED_MAPS["Q2"], NoiseMixtureSpec((1.0,), (1e-4,)), 30, 0.5),
        ]
        data = simulate_multi(specs, [0, 0], rng)
        prior = make_prior(2)
        state = init_chain(data, prior, rng)
        state.p = np.array([[0.5, 0.5], [0.5, 0.5]])
        for j in range(2):
            # pin every slice bound to 1 so only the first atom is reachable
            state.alloc.d[j][:] = 1
            state.alloc.N[j][:] = 1
        # diagonal atom is hopeless (tiny precision), shared atom is right
        state.atoms.set(0, 0, 1, 1e-10)
        state.atoms.set(0, 1, 1, 1e4)
        state.atoms.set(1, 1, 1, 1e-10)
        update_alloc_block(state, data, prior, rng)
        assert (state.alloc.delta[0] == 1).mean() > 0.95
        assert (state.alloc.delta[1] == 0).mean() > 0.95


class TestSliceBoundKernel:
    def test_truncated_geometric_law(self):
        state, data = single_series_state([0.1, 0.2], [0.0], [1.0], d=[3, 1], N=[3, 1])
        prior = make_prior(1, R=0)
        rng = RngHandle(13)
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            state.alloc.d[0] = np.array([3, 1])  # keep the conditioning fixed
            update_slice_N(state, prior, rng)
            assert np.all(state.alloc.N[0] >= state.alloc.d[0])
            draws[t] = state.alloc.N[0][0]
        # N - d is geometric(lam = 0.5): P(N = 3) = 0.5, mean = 3 + 1
        freq = (draws == 3).mean()
        assert abs(freq - 0.5) < 3.0 * math.sqrt(0.25 / N_KERNEL)
        assert abs(draws.mean() - 4.0) < 3.0 * draws.std() / math.sqrt(N_KERNEL)

    def test_atoms_grow_with_the_bound(self):
        state, data, prior, rng = random_fixture(2)
        update_slice_N(state, prior, rng)
        n_star = max(int(N.max()) for N in state.alloc.N)
        assert state.atoms.max_size() >= n_star
        for j, l in state.atoms.pairs():
            assert state.atoms.size(j, l) >= n_star


class TestConjugateKernels:
    def test_precision_kernel_moments(self):
        state, data, prior, rng = random_fixture(1)
        params = precision_posterior_params(state, data, prior)
        key = (0, 1, 1)
        shape, rate = params[key]
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_precisions(state, data, prior, rng)
            draws[t] = state.atoms.get(0, 1, 1)
        se = draws.std() / math.sqrt(N_KERNEL)
        assert abs(draws.mean() - shape / rate) < 4.0 * se

    def test_selection_kernel_moments(self):
        state, _, prior, rng = random_fixture(3)
        data = None
        alpha = selection_posterior_alpha(state, prior)
        draws = np.empty((N_KERNEL, state.m))
        for t in range(N_KERNEL):
            update_selection_probs(state, prior, rng)
            draws[t] = state.p[0]
        expected = alpha[0] / alpha[0].sum()
        for l in range(state.m):
            se = draws[:, l].std() / math.sqrt(N_KERNEL)
            assert abs(draws[:, l].mean() - expected[l]) < 4.0 * se
        assert np.allclose(state.p.sum(axis=1), 1.0)

    def test_geometric_kernel_moments_and_symmetry(self):
        state, _, prior, rng = random_fixture(4)
        params = geometric_posterior_params(state, prior)
        a, b = params[(0, 1)]
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_geometric_probs(state, prior, rng)
            assert state.lam[0, 1] == state.lam[1, 0]
            draws[t] = state.lam[0, 1]
        se = draws.std() / math.sqrt(N_KERNEL)
        assert abs(draws.mean() - a / (a + b)) < 4.0 * se


class TestThetaKernel:
    def test_constant_map_exact_posterior(self):
        # flat prior, unit precisions, targets (1, 2, 3): theta ~ N(2, 1/3)
        state, data = single_series_state([1.0, 2.0, 3.0], [0.0], [1.0])
        prior = make_prior(1, R=0)
        rng = RngHandle(31)
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_theta(state, data, prior, rng)
            draws[t] = state.theta[0][0]
        se = draws.std() / math.sqrt(N_KERNEL)
        assert abs(draws.mean() - 2.0) < 4.0 * se
        sq = (draws - 2.0) ** 2
        assert abs(sq.mean() - 1.0 / 3.0) < 4.0 * sq.std() / math.sqrt(N_KERNEL)

    def test_weighted_least_squares_oracle(self):
        # heteroskedastic linear fit: the posterior mean solves the normal
        # equations with per-point precision weights
        gen = np.random.default_rng(5)
        series = gen.normal(size=12).cumsum() / 3.0
        taus = [2.0, 8.0]
        d = gen.integers(1, 3, size=12)
        state, data = single_series_state(series, [0.0, 0.0], taus, d=d, N=np.full(12, 2), x0=0.3)
        prior = make_prior(1, R=1)
        xs = np.concatenate(([0.3], series))
        V = np.vander(xs[:-1], 2, increasing=True)
        w = np.asarray(taus)[d - 1]
        A = V.T @ (V * w[:, None])
        mu = np.linalg.solve(A, V.T @ (w * xs[1:]))
        cov = np.linalg.inv(A)
        rng = RngHandle(32)
        draws = np.empty((N_KERNEL, 2))
        for t in range(N_KERNEL):
            update_theta(state, data, prior, rng)
            draws[t] = state.theta[0]
        for r in range(2):
            se = draws[:, r].std() / math.sqrt(N_KERNEL)
            assert abs(draws[:, r].mean() - mu[r]) < 4.0 * se
        sample_cov = np.cov(draws.T)
        assert np.allclose(sample_cov, cov, rtol=0.1, atol=1e-4)

    def test_singular_design_raises(self):
        state, data = single_series_state(np.full(20, 0.7), np.zeros(6), [1.0])
        prior = make_prior(1, R=5)
        with pytest.raises(SingularDesignError) as exc:
            update_theta(state, data, prior, RngHandle(0))
        assert exc.value.series == 0


class TestInitialConditionKernel:
    def test_linear_map_gives_exact_normal(self):
        # g(x) = 2x, x_1 = 1, tau = 1: the full conditional is N(0.5, 1/4)
        state, data = single_series_state([1.0, 0.5], [0.0, 2.0], [1.0], x0=0.0)
        prior = make_prior(1, R=1)
        config = GibbsConfig(iterations=1, slice_width=0.5)
        rng = RngHandle(41)
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_x0(state, data, prior, rng, config)
            draws[t] = state.x0[0]
        assert abs(draws.mean() - 0.5) < 3.0 * batch_means_se(draws)
        sq = (draws - 0.5) ** 2
        assert abs(sq.mean() - 0.25) < 3.0 * batch_means_se(sq)

    def test_respects_support(self):
        state, data = single_series_state([1.0, 0.5], [0.0, 2.0], [1.0], x0=0.0)
        prior = make_prior(1, R=1, x0_support=np.array([[-0.1, 0.1]]))
        rng = RngHandle(42)
        for _ in range(500):
            update_x0(state, data, prior, rng)
            assert -0.1 <= state.x0[0] <= 0.1

    def test_multimodal_target_visits_both_roots(self):
        # quadratic g: two real roots of g(x) = x_1 give two posterior modes;
        # a moderate precision keeps the valley shallow enough for the
        # stepping-out procedure to bridge
        state, data = single_series_state(
            [0.5, 0.2], NAMED_MAPS["Q1"].coefficients, [10.0], x0=0.55
        )
        prior = make_prior(1, R=5)
        rng = RngHandle(43)
        draws = np.empty(4000)
        for t in range(4000):
            update_x0(state, data, prior, rng)
            draws[t] = state.x0[0]
        # roots of 1 - 1.65 x^2 = 0.5 are +/- sqrt(0.5/1.65) ~ +/- 0.5505
        assert (draws > 0.3).any() and (draws < -0.3).any()


class TestFutureKernel:
    def test_terminal_point_is_exact_normal(self):
        state, data = single_series_state(
            [0.2, -0.4], [0.0, 1.5], [4.0], horizon=1, future=[0.0]
        )
        prior = make_prior(1, R=1, horizon=np.array([1]))
        rng = RngHandle(51)
        mean = 1.5 * -0.4
        draws = np.empty(N_KERNEL)
        for t in range(N_KERNEL):
            update_future(state, data, prior, rng)
            draws[t] = state.future[0][0]
        se = draws.std() / math.sqrt(N_KERNEL)
        assert abs(draws.mean() - mean) < 4.0 * se
        sq = (draws - mean) ** 2
        assert abs(sq.mean() - 0.25) < 4.0 * sq.std() / math.sqrt(N_KERNEL)

    def test_interior_point_marginal_oracle(self):
        # linear map: the joint over (x_{n+1}, x_{n+2}) factorizes, so the
        # interior point is marginally N(g(x_n), 1/tau) and the terminal one
        # N(a g(x_n), a^2/tau_1 + 1/tau_2)
        a = 0.8
        state, data = single_series_state(
            [0.2, -0.5], [0.0, a], [2.0], horizon=2, future=[0.0, 0.0]
        )
        prior = make_prior(1, R=1, horizon=np.array([2]))
        config = GibbsConfig(iterations=1, slice_width=0.5)
        rng = RngHandle(52)
        g = a * -0.5
        draws = np.empty((N_KERNEL, 2))
        for t in range(N_KERNEL):
            update_future(state, data, prior, rng, config)
            draws[t] = state.future[0]
        se1 = batch_means_se(draws[:, 0])
        assert abs(draws[:, 0].mean() - g) < 3.0 * se1
        sq = (draws[:, 0] - g) ** 2
        assert abs(sq.mean() - 0.5) < 3.0 * batch_means_se(sq)
        var2 = a ** 2 * 0.5 + 0.5
        assert abs(draws[:, 1].mean() - a * g) < 3.0 * batch_means_se(draws[:, 1])
        sq2 = (draws[:, 1] - a * g) ** 2
        assert abs(sq2.mean() - var2) < 3.0 * batch_means_se(sq2)

    def test_zero_horizon_is_a_no_op(self):
        state, data = single_series_state([0.2, -0.4], [0.0, 1.5], [4.0])
        prior = make_prior(1, R=1, horizon=np.array([0]))
        before = RngHandle(1).generator.random()
        rng = RngHandle(1)
        update_future(state, data, prior, rng)
        assert rng.generator.random() == before  # no randomness consumed


class TestNoisePredictive:
    def test_degenerate_geometric_uses_first_atom(self):
        tau = 25.0
        state, _ = single_series_state([0.1, 0.2], [0.0], [tau], lam=1 - 1e-12)
        prior = make_prior(1, R=0)
        rng = RngHandle(61)
        draws = np.array([sample_noise_predictive(state, prior, rng)[0] for _ in range(N_KERNEL)])
        sq = draws ** 2
        se = sq.std() / math.sqrt(N_KERNEL)
        assert abs(sq.mean() - 1.0 / tau) < 4.0 * se

    def test_tail_lump_frequency(self):
        # lam = 0.01 with one stored atom: the tail carries mass 0.99 and its
        # fresh base-measure atoms (a = b = 1000, tau ~ 1) give visibly wider
        # draws than the stored tau = 1e8 atom
        state, _ = single_series_state([0.1, 0.2], [0.0], [1e8], lam=0.01)
        prior = make_prior(1, R=0, gamma_a=1000.0, gamma_b=1000.0)
        rng = RngHandle(62)
        draws = np.array([sample_noise_predictive(state, prior, rng)[0] for _ in range(N_KERNEL)])
        wide = (np.abs(draws) > 1e-3).mean()
        assert abs(wide - 0.99) < 3.0 * math.sqrt(0.99 * 0.01 / N_KERNEL) + 1e-3


class TestDrivers:
    def small_run(self, seed=7, **cfg):
        rng = RngHandle(seed)
        specs = [(NAMED_MAPS["Q1"], NoiseMixtureSpec((1.0,), (1e-3,)), 30, 0.4)]
        data = simulate_multi(specs, [1], rng)
        prior = make_prior(1)
        defaults = dict(iterations=40, burn_in=0, thinning=1, seed=5)
        defaults.update(cfg)
        return data, prior, GibbsConfig(**defaults)

    def test_retention_arithmetic(self):
        data, prior, _ = self.small_run()
        config = GibbsConfig(iterations=100, burn_in=50, thinning=5, seed=5)
        records = run_chain(data, prior, config)
        assert len(records) == 10
        assert records[0].iteration == 55
        assert records[-1].iteration == 100

    def test_sweep_determinism(self):
        data, prior, config = self.small_run()
        a = run_chain(data, prior, config)
        b = run_chain(data, prior, config)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.theta[0], rb.theta[0])
            assert np.array_equal(ra.x0, rb.x0)
            assert np.array_equal(ra.z_pred, rb.z_pred)
            assert ra.atom_counts == rb.atom_counts

    def test_single_series_entry_point_matches_general_one(self):
        data, prior, config = self.small_run()
        a = run_chain(data, prior, config)
        b = run_gsbr(data, prior, config)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.theta[0], rb.theta[0])
            assert np.array_equal(ra.future[0], rb.future[0])

    def test_single_series_entry_point_rejects_multi(self):
        rng = RngHandle(1)
        specs = [
            (NAMED_MAPS["Q1"], NoiseMixtureSpec((1.0,), (1e-3,)), 20, 0.4),
            (NAMED_MAPS["Q2"], NoiseMixtureSpec((1.0,), (1e-3,)), 20, 0.4),
        ]
        data = simulate_multi(specs, [1, 1], rng)
        with pytest.raises(ValueError):
            run_gsbr(data, make_prior(2), GibbsConfig(iterations=2))

    def test_checkpoint_resume_is_bit_exact(self, tmp_path):
        data, prior, _ = self.small_run()
        full_cfg = GibbsConfig(iterations=60, burn_in=0, thinning=1, seed=5)
        full = run_chain(data, prior, full_cfg)

        part_cfg = GibbsConfig(iterations=30, burn_in=0, thinning=1, seed=5)
        ck = tmp_path / "checkpoint.json"
        first = run_chain(data, prior, part_cfg, checkpoint_path=ck)
        state, rng, _ = load_checkpoint(ck)
        second = run_chain(data, prior, full_cfg, resume=(state, rng))

        combined = first + second
        assert len(combined) == len(full)
        for ra, rb in zip(combined, full):
            assert ra.iteration == rb.iteration
            assert np.array_equal(ra.theta[0], rb.theta[0])
            assert np.array_equal(ra.x0, rb.x0)
            assert np.array_equal(ra.future[0], rb.future[0])
            assert np.array_equal(ra.z_pred, rb.z_pred)

    def test_halt_records_sweep_index(self):
        # constant series: the control-parameter draw must fail on sweep 1
        data = MultiSeries(series=[np.full(25, 0.7)])
        prior = make_prior(1)
        with pytest.raises(SingularDesignError) as exc:
            run_chain(data, prior, GibbsConfig(iterations=5, seed=3))
        assert exc.value.iteration == 1

    def test_parametric_precision_recovery(self):
        # well-specified Gaussian noise: the pooled precision concentrates
        # near the generating value 1 / sigma^2 = 100
        rng = RngHandle(71)
        specs = [(NAMED_MAPS["Q1"], NoiseMixtureSpec((1.0,), (1e-2,)), 150, 0.4)]
        data = simulate_multi(specs, [1], rng)
        prior = make_prior(1)
        config = GibbsConfig(iterations=600, burn_in=200, seed=9)
        records = run_parametric_gaussian(data, prior, config)
        taus = np.array([r.tau_common for r in records])
        assert records[0].p is None and records[0].atom_counts is None
        assert 60 < taus.mean() < 160

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GibbsConfig(iterations=10, burn_in=10)
        with pytest.raises(ValueError):
            GibbsConfig(iterations=10, thinning=0)
        with pytest.raises(ValueError):
            GibbsConfig(iterations=10, slice_width=-1.0)
