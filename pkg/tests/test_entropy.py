import numpy as np
import pytest

from sgl.entropy import (
    BowenSpec,
    CoverReport,
    DivergenceFit,
    EnsembleSnapshot,
    bowen_distance,
    bowen_matrix,
    conditional_entropy,
    cover_count,
    estimate_eps_entropy,
    estimate_h_mu,
    estimate_h_top,
    evolve_snapshot_states,
    fit_divergence,
    label_states,
    partition_entropy,
)
from sgl.fields import Field, Grid, Window
from sgl.model import ModelParams
from sgl.solver import DivergenceSeries, SolverConfig

GRID = Grid(d=1, box_length=40.0, points_per_dim=128)
PARAMS = ModelParams(alpha=0.5, beta=0.5, q=1)
CFG = SolverConfig(dt=1e-3, t_end=1.0, record_stride=1000)
WINDOW = Window(side=8.0)


def constant(value):
    return Field(GRID, np.full(GRID.shape, value, dtype=complex))


def exact_count(dist, eps):
    return cover_count(dist, dist, eps, method="exact").count


class TestSnapshotAndSpec:
    def test_snapshot_grid_consistency(self):
        other = Grid(d=1, box_length=40.0, points_per_dim=64)
        with pytest.raises(ValueError):
            EnsembleSnapshot(
                fields=[constant(0.0), Field(other, np.zeros(other.shape))]
            )

    def test_empty_snapshot_rejected(self):
        with pytest.raises(ValueError):
            EnsembleSnapshot(fields=[])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BowenSpec(n=0, tau=1.0, window=WINDOW, eps=0.1)
        with pytest.raises(ValueError):
            BowenSpec(n=1, tau=1.0, window=WINDOW, eps=0.0)


class TestBowenDistance:
    def test_depth_one_is_initial_distance(self):
        spec = BowenSpec(n=1, tau=1.0, window=WINDOW, eps=0.1)
        d = bowen_distance(constant(0.3), constant(0.8), spec, None, PARAMS, CFG)
        assert d == pytest.approx(0.5, abs=1e-12)

    def test_identical_fields(self):
        spec = BowenSpec(n=3, tau=0.5, window=WINDOW, eps=0.1)
        u = constant(0.4)
        assert bowen_distance(u, u.copy(), spec, None, PARAMS, CFG) == 0.0

    def test_contracting_pair_dominated_by_first_term(self):
        # both constants relax to amplitude 1; later terms shrink
        spec = BowenSpec(n=2, tau=1.0, window=WINDOW, eps=0.1)
        u, v = constant(1.0), constant(1.05)
        d = bowen_distance(u, v, spec, None, PARAMS, CFG)
        spec0 = BowenSpec(n=1, tau=1.0, window=WINDOW, eps=0.1)
        d0 = bowen_distance(u, v, spec0, None, PARAMS, CFG)
        assert d == pytest.approx(d0, rel=1e-12)

    def test_matrix_agrees_with_pairwise(self):
        fields = [constant(c) for c in (0.2, 0.5, 1.1)]
        states = evolve_snapshot_states(fields, None, PARAMS, CFG, 2, 0.5, [WINDOW])
        dist = bowen_matrix(states)
        spec = BowenSpec(n=2, tau=0.5, window=WINDOW, eps=0.1)
        d01 = bowen_distance(fields[0], fields[1], spec, None, PARAMS, CFG)
        assert dist[0, 1] == pytest.approx(d01, rel=1e-12)
        assert dist[1, 0] == dist[0, 1]
        np.testing.assert_allclose(np.diag(dist), 0.0)

    def test_misaligned_tau_rejected(self):
        with pytest.raises(ValueError):
            evolve_snapshot_states([constant(0.1)], None, PARAMS, CFG, 2, 0.0007, [WINDOW])


class TestCoverCount:
    def equilateral(self):
        # three constants with pairwise distance exactly 1
        vals = [0.0, 1.0, 0.5 + 1j * np.sqrt(3) / 2.0]
        dist = np.array(
            [[abs(a - b) for b in vals] for a in vals]
        )
        return dist

    def test_three_points_fine_eps(self):
        dist = self.equilateral()
        for method in ("greedy", "exact"):
            assert cover_count(dist, dist, 0.5, method=method).count == 3

    def test_three_points_coarse_eps(self):
        dist = self.equilateral()
        for method in ("greedy", "exact"):
            assert cover_count(dist, dist, 3.0, method=method).count == 1

    def test_greedy_upper_bounds_exact(self):
        rng = np.random.default_rng(0)
        for trial in range(30):
            pts = rng.uniform(0.0, 1.0, 8)
            dist = np.abs(pts[:, None] - pts[None, :])
            g = cover_count(dist, dist, 0.3, method="greedy")
            e = cover_count(dist, dist, 0.3, method="exact")
            assert isinstance(g, CoverReport)
            assert e.count <= g.count

    def test_exact_size_limit(self):
        dist = np.zeros((13, 13))
        with pytest.raises(ValueError):
            cover_count(dist, dist, 1.0, method="exact")

    def test_callable_metric_on_snapshot(self):
        snap = EnsembleSnapshot(fields=[constant(0.0), constant(1.0)])
        metric = lambda a, b: float(np.abs(a.values - b.values).max())
        assert cover_count(snap, metric, 0.5).count == 2
        assert cover_count(snap, metric, 2.5).count == 1


class TestSubadditivity:
    def random_sequences(self, seed, n_pts=10, length=6):
        rng = np.random.default_rng(seed)
        return rng.uniform(0.0, 1.0, (n_pts, length))

    @staticmethod
    def seq_metric(seqs, lo, hi):
        block = seqs[:, lo:hi]
        return np.abs(block[:, None, :] - block[None, :, :]).max(axis=2)

    def test_count_nonincreasing_in_eps(self):
        seqs = self.random_sequences(1)
        dist = self.seq_metric(seqs, 0, 6)
        counts = [exact_count(dist, e) for e in (0.8, 0.4, 0.2, 0.1)]
        assert all(b >= a for a, b in zip(counts, counts[1:]))

    def test_window_subadditivity(self):
        # union-window distance is the max of the two window distances;
        # exact covers satisfy N(union) <= N(Q) * N(Q') with no slack
        for seed in range(20):
            seqs = self.random_sequences(seed)
            d_q = self.seq_metric(seqs, 0, 3)
            d_qp = self.seq_metric(seqs, 3, 6)
            d_union = np.maximum(d_q, d_qp)
            eps = 0.35
            assert exact_count(d_union, eps) <= (
                exact_count(d_q, eps) * exact_count(d_qp, eps)
            )

    def test_time_subadditivity(self):
        # depth-(n+m) distance = max(depth-n, shifted depth-m)
        for seed in range(20, 40):
            seqs = self.random_sequences(seed, length=8)
            d_n = self.seq_metric(seqs, 0, 4)
            d_m_shift = self.seq_metric(seqs, 4, 8)
            d_nm = np.maximum(d_n, d_m_shift)
            eps = 0.3
            assert exact_count(d_nm, eps) <= (
                exact_count(d_n, eps) * exact_count(d_m_shift, eps)
            )


class TestHTopEstimate:
    def test_identical_ensemble_zero(self):
        counts = {
            (eps, L, n): [1, 1]
            for eps in (0.1, 0.05)
            for L in (8, 16)
            for n in (2, 4)
        }
        est = estimate_h_top(counts, tau=1.0)
        assert est.h_top_hat == 0.0

    def test_synthetic_exponential_counts(self):
        # N = exp(c * n * tau * L) has density exactly c
        c, tau = 0.3, 0.5
        counts = {
            (eps, L, n): [np.exp(c * n * tau * L)]
            for eps in (0.1, 0.05)
            for L in (4, 8)
            for n in (2, 4, 8)
        }
        est = estimate_h_top(counts, tau=tau)
        assert est.h_top_hat == pytest.approx(c, rel=1e-9)
        for key, rate in est.table.items():
            assert rate >= 0.0

    def test_grid_size_validated(self):
        counts = {(0.1, 8, 2): [1.0], (0.1, 8, 4): [1.0]}
        with pytest.raises(ValueError):
            estimate_h_top(counts, tau=1.0)


class TestPartitionEntropy:
    def test_uniform(self):
        assert partition_entropy([0.25] * 4) == pytest.approx(np.log(4.0))

    def test_point_mass(self):
        assert partition_entropy([1.0, 0.0, 0.0]) == 0.0

    def test_half_quarter_quarter(self):
        assert partition_entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5 * np.log(2.0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            partition_entropy([1.5, -0.5])

    def test_sum_enforced(self):
        with pytest.raises(ValueError):
            partition_entropy([0.5, 0.4])

    def test_bounded_by_log_cells(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = rng.uniform(0.0, 1.0, 6)
            p /= p.sum()
            h = partition_entropy(p)
            assert 0.0 <= h <= np.log(6.0) + 1e-12

    def test_conditional_self_zero(self):
        # H(U|U): joint concentrated on the diagonal
        joint = np.diag([0.2, 0.3, 0.5])
        assert conditional_entropy(joint) == pytest.approx(0.0, abs=1e-12)

    def test_conditional_bounded_by_marginal(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            joint = rng.uniform(0.0, 1.0, (4, 5))
            joint /= joint.sum()
            h_u = partition_entropy(joint.sum(axis=1))
            assert conditional_entropy(joint) <= h_u + 1e-12


class TestLabeling:
    def test_labels_respect_eps(self):
        # states sharing a label lie in the same eps/2 box per coordinate
        rng = np.random.default_rng(4)
        states = rng.normal(size=(40, 3, 2, 5)) + 1j * rng.normal(size=(40, 3, 2, 5))
        lab = label_states(states, eps=1.0)
        flat_states = states.reshape(-1, 5)
        flat_labels = lab.labels.ravel()
        for ell in np.unique(flat_labels):
            members = flat_states[flat_labels == ell]
            if members.shape[0] > 1:
                spread = np.abs(members[:, None, :] - members[None, :, :]).max()
                assert spread <= 1.0

    def test_identical_states_share_label(self):
        states = np.zeros((5, 2, 1, 3), dtype=complex)
        lab = label_states(states, eps=0.5)
        assert np.unique(lab.labels).size == 1


class TestHMuEstimate:
    def test_single_cell_partition(self):
        labels = np.zeros((100, 4, 2), dtype=np.int64)
        est = estimate_h_mu({4: labels}, tau=1.0)
        assert est.h_mu_hat == 0.0

    def test_frozen_dynamics_rate_zero(self):
        # labels constant in k: block entropy flat in n
        rng = np.random.default_rng(5)
        per_sample = rng.integers(0, 3, size=(500, 1, 2))
        labels = np.repeat(per_sample, 4, axis=1)
        est = estimate_h_mu({4: labels}, tau=1.0)
        assert est.h_mu_hat == pytest.approx(0.0, abs=1e-9)

    def test_iid_uniform_two_symbols(self):
        # i.i.d. fair labels: block entropy slope is log 2 per slot
        rng = np.random.default_rng(6)
        labels = rng.integers(0, 2, size=(20000, 4, 1))
        est = estimate_h_mu({1: labels}, tau=1.0)
        assert est.h_mu_hat == pytest.approx(np.log(2.0), rel=0.05)

    def test_singleton_blocks_warn(self):
        rng = np.random.default_rng(7)
        labels = rng.integers(0, 50, size=(30, 3, 2))
        with pytest.warns(RuntimeWarning):
            estimate_h_mu({2: labels}, tau=1.0)


class TestEpsEntropy:
    def test_one_point_ensemble(self):
        counts = {(eps, L): [1] for eps in (0.1, 0.05) for L in (8, 16)}
        est = estimate_eps_entropy(counts)
        assert all(v == 0.0 for v in est.h_eps_hat.values())
        assert est.d_up_hat == 0.0

    def test_synthetic_k_family(self):
        # M = (1/eps)^(kL): H_eps = k log(1/eps), d_up = k
        for k in (2, 4):
            counts = {
                (eps, L): [(1.0 / eps) ** (k * L)]
                for eps in (0.1, 0.05, 0.025)
                for L in (4, 8)
            }
            est = estimate_eps_entropy(counts)
            assert est.d_up_hat == pytest.approx(k, rel=1e-9)

    def test_h_eps_nonincreasing_in_eps(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(0.0, 1.0, (10, 4))
        dist = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=2)
        counts = {}
        for eps in (0.4, 0.2, 0.1):
            for L in (4, 8):
                c = exact_count(dist, eps)
                counts[(eps, L)] = [float(c) ** (L / 4)]
        est = estimate_eps_entropy(counts)
        ordered = [est.h_eps_hat[e] for e in (0.4, 0.2, 0.1)]
        assert ordered[0] <= ordered[1] <= ordered[2]

    def test_needs_two_window_sizes(self):
        with pytest.raises(ValueError):
            estimate_eps_entropy({(0.1, 8): [2]})


class TestDivergenceFit:
    def synthetic_series(self, gamma, eps, seed, t_end=5.0):
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, t_end, 60)
        d = eps * np.exp(gamma * t) * np.exp(0.01 * rng.normal(size=t.size))
        return DivergenceSeries(
            times=t, sup_diff=d, window_side=np.full(t.size, 8.0), eps=eps
        )

    def test_recovers_linear_growth_rate(self):
        eps = 1e-6
        series = [self.synthetic_series(1.0, eps, s) for s in range(4)]
        fit = fit_divergence(series, eps)
        assert isinstance(fit, DivergenceFit)
        assert fit.gamma_hat == pytest.approx(1.0, rel=0.1)
        assert fit.c_hat == pytest.approx(1.0, rel=0.2)

    def test_identical_pairs_excluded(self):
        eps = 1e-6
        zero = DivergenceSeries(
            times=np.linspace(0.0, 5.0, 60),
            sup_diff=np.zeros(60),
            window_side=np.full(60, 8.0),
            eps=eps,
        )
        series = [zero, self.synthetic_series(1.0, eps, 1)]
        with pytest.warns(RuntimeWarning):
            fit = fit_divergence(series, eps)
        assert fit.gamma_hat == pytest.approx(1.0, rel=0.1)

    def test_gamma_stable_under_eps_rescaling(self):
        fits = []
        for eps in (1e-6, 1e-7):
            series = [self.synthetic_series(0.8, eps, s) for s in range(4)]
            fits.append(fit_divergence(series, eps))
        assert fits[0].gamma_hat == pytest.approx(fits[1].gamma_hat, rel=0.05)

    def test_all_degenerate_rejected(self):
        zero = DivergenceSeries(
            times=np.zeros(3), sup_diff=np.zeros(3),
            window_side=np.zeros(3), eps=1.0,
        )
        with pytest.warns(RuntimeWarning):
            with pytest.raises(ValueError):
                fit_divergence([zero], 1.0)

    def test_saturated_points_excluded(self):
        eps = 1e-3
        s = self.synthetic_series(1.0, eps, 2, t_end=12.0)
        fit = fit_divergence([s], eps, saturation=0.5)
        assert fit.gamma_hat == pytest.approx(1.0, rel=0.1)
