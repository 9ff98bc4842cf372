import numpy as np
import pytest
from scipy.integrate import quad

from sgl.fields import Field, Grid, Window, sup_norm
from sgl.forcing import ForcingProfile, Mode, sample_realization
from sgl.kernels import (
    CartwrightGrid,
    KernelConfig,
    cartwright_interpolate,
    cover_refine_step,
    kernel_full,
    kernel_minus,
    kernel_plus,
    verify_kernel_decay,
)
from sgl.model import ModelParams
from sgl.solver import SolverConfig, pair_evolve

CONFIG = KernelConfig(p_star=4.5, alpha=0.0)


class TestConfig:
    def test_split_frequency_floor(self):
        with pytest.raises(ValueError):
            KernelConfig(p_star=4.0)

    def test_chi_plateaus(self):
        assert CONFIG.chi(0.0) == 1.0
        assert CONFIG.chi(0.99) == 1.0
        assert CONFIG.chi(2.01) == 0.0
        assert 0.0 < CONFIG.chi(1.5) < 1.0


class TestKernelQuadrature:
    def test_center_value_against_adaptive_quadrature(self):
        # independent oracle: (1/2pi) int e^{t(1-p^2)} chi(|p|/p*) dp
        t = 1.0
        got = kernel_minus(t, 0.0, CONFIG)
        oracle, err = quad(
            lambda p: np.exp(t * (1.0 - p * p)) * CONFIG.chi(abs(p) / CONFIG.p_star),
            -2.0 * CONFIG.p_star,
            2.0 * CONFIG.p_star,
            epsabs=1e-12,
        )
        oracle /= 2.0 * np.pi
        assert got.imag == pytest.approx(0.0, abs=1e-10)
        assert got.real == pytest.approx(oracle, rel=1e-8)

    def test_even_in_x_when_alpha_zero(self):
        for x in (0.5, 1.7, 6.0):
            assert kernel_minus(1.0, x, CONFIG) == pytest.approx(
                kernel_minus(1.0, -x, CONFIG), abs=1e-12
            )

    def test_partition_of_unity(self):
        x = np.linspace(-10.0, 10.0, 101)
        total = kernel_minus(0.7, x, CONFIG) + kernel_plus(0.7, x, CONFIG)
        full = kernel_full(0.7, x, CONFIG)
        assert np.abs(total - full).max() < 1e-8

    def test_quadrature_converged(self):
        # doubling the resolution moves nothing at the 1e-8 level
        fine = KernelConfig(p_star=4.5, alpha=0.0, quadrature_points=8193)
        x = np.linspace(-8.0, 8.0, 41)
        a = kernel_minus(1.0, x, CONFIG)
        b = kernel_minus(1.0, x, fine)
        assert np.abs(a - b).max() / np.abs(b).max() < 1e-8

    def test_mass_is_symbol_at_zero(self):
        # int K^(-) dx = e^t chi(0) = e^t
        t = 1.0
        x = np.linspace(-30.0, 30.0, 4096)
        vals = kernel_minus(t, x, CONFIG)
        mass = np.trapezoid(vals, x)
        assert mass.real == pytest.approx(np.e, rel=1e-4)
        assert abs(mass.imag) < 1e-6

    def test_plus_band_decays_exponentially(self):
        # sup_x |K^(+)| <= fitted const * e^{-(p*)^2 t/2}/sqrt(t);
        # fit on one half of the t-range, verify on the other
        x = np.linspace(-5.0, 5.0, 201)
        ts = np.linspace(0.5, 2.0, 13)
        sups = np.array([np.abs(kernel_plus(t, x, CONFIG)).max() for t in ts])
        ratio = sups * np.sqrt(ts) * np.exp(CONFIG.p_star ** 2 * ts / 2.0)
        c_fit = ratio[::2].max()
        assert np.all(ratio[1::2] <= 1.5 * c_fit)

    def test_plus_band_vanishes_at_large_time(self):
        x = np.linspace(-5.0, 5.0, 51)
        assert np.abs(kernel_plus(4.0, x, CONFIG)).max() < 1e-20

    def test_alpha_rotates_kernel(self):
        rotated = KernelConfig(p_star=4.5, alpha=1.0)
        v = kernel_minus(1.0, 2.0, rotated)
        assert abs(v.imag) > 0.0


class TestDecayFit:
    def test_first_order_fit(self):
        fit = verify_kernel_decay(CONFIG, 1, [1.0])
        assert fit.max_violation <= 0.0
        assert np.isfinite(fit.c_n) and fit.c_n > 0.0

    def test_constant_grows_with_n(self):
        ts = [0.5, 1.0, 2.0]
        cs = [verify_kernel_decay(CONFIG, n, ts).c_n for n in (1, 2, 3)]
        assert cs[0] < cs[1] < cs[2]

    def test_center_bound(self):
        # at x = 0 the bound reduces to |K_t(0)| <= c_n / sqrt(t)
        fit = verify_kernel_decay(CONFIG, 2, [1.0])
        assert abs(kernel_minus(1.0, 0.0, CONFIG)) <= fit.c_n

    def test_plus_band_fit(self):
        fit = verify_kernel_decay(CONFIG, 1, [0.5, 1.0], kernel="plus")
        assert fit.max_violation <= 0.0

    def test_early_time_rejected(self):
        with pytest.raises(ValueError):
            verify_kernel_decay(CONFIG, 1, [0.25])

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            verify_kernel_decay(CONFIG, 4, [1.0])


class TestCartwright:
    GRID = CartwrightGrid(p_star=4.5, n_max=512)

    def test_nodes_symmetric(self):
        nodes = self.GRID.nodes
        np.testing.assert_allclose(nodes, -nodes[::-1], atol=0.0)
        assert nodes[self.GRID.n_max] == 0.0

    def test_zero_samples(self):
        samples = np.zeros(2 * self.GRID.n_max + 1)
        x = np.linspace(-5.0, 5.0, 11)
        assert np.abs(cartwright_interpolate(samples, self.GRID, x)).max() == 0.0

    def test_exact_at_nodes(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=2 * self.GRID.n_max + 1) * (1 + 0.5j)
        for n in (-3, 0, 7, 40):
            x = self.GRID.nodes[self.GRID.n_max + n]
            got = cartwright_interpolate(samples, self.GRID, x)
            assert got == pytest.approx(samples[self.GRID.n_max + n], rel=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=2 * self.GRID.n_max + 1)
        b = rng.normal(size=2 * self.GRID.n_max + 1)
        x = np.array([0.3, 1.1, -2.2])
        lhs = cartwright_interpolate(2.0 * a + b, self.GRID, x)
        rhs = 2.0 * cartwright_interpolate(a, self.GRID, x) + cartwright_interpolate(
            b, self.GRID, x
        )
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_cosine_reconstruction_improves_with_truncation(self):
        # band-limited f(x) = cos(kx), k <= 2p*: direct-evaluation oracle
        k = 6.0
        errors = []
        for n_max in (256, 512, 1024):
            grid = CartwrightGrid(p_star=4.5, n_max=n_max)
            samples = np.cos(k * grid.nodes)
            x = np.linspace(-0.9 * grid.safe_half_width, 0.9 * grid.safe_half_width, 400)
            got = cartwright_interpolate(samples, grid, x)
            errors.append(np.abs(got - np.cos(k * x)).max())
        assert errors[0] > errors[1] > errors[2]
        assert errors[-1] < 1e-2

    def test_outside_safe_interior_rejected(self):
        samples = np.zeros(2 * self.GRID.n_max + 1)
        with pytest.raises(ValueError):
            cartwright_interpolate(samples, self.GRID, self.GRID.safe_half_width * 1.5)


class TestCoverRefine:
    GRID = Grid(d=1, box_length=40.0, points_per_dim=256)
    PARAMS = ModelParams(alpha=0.5, beta=0.5, q=1)
    CFG = SolverConfig(dt=1e-3, t_end=1.0, record_stride=1000)
    WINDOW = Window(side=8.0)

    def constant(self, value):
        return Field(self.GRID, np.full(self.GRID.shape, value, dtype=complex))

    def test_single_representative(self):
        out = cover_refine_step(
            [self.constant(0.5)], None, self.PARAMS, self.CFG, self.WINDOW, 0.25
        )
        assert len(out.representatives) == 1

    def test_identical_pair_merges(self):
        reps = [self.constant(0.5), self.constant(0.5)]
        out = cover_refine_step(reps, None, self.PARAMS, self.CFG, self.WINDOW, 0.25)
        assert len(out.representatives) == 1

    def test_contracting_pair_merges(self):
        # both members relax toward the same amplitude; pair_evolve
        # confirms the contraction before the cover is asked to merge them
        # (eps chosen so the contracted pair does not straddle a cell edge)
        eps = 0.6
        u0, v0 = self.constant(1.0), self.constant(1.05)
        _, _, series = pair_evolve(
            u0, v0, None, self.PARAMS, self.CFG, window=self.WINDOW
        )
        assert series.sup_diff[-1] < eps / 4.0
        out = cover_refine_step([u0, v0], None, self.PARAMS, self.CFG,
                                self.WINDOW, eps)
        assert len(out.representatives) == 1

    def test_separated_pair_stays_split(self):
        reps = [self.constant(0.0), self.constant(1.0)]
        out = cover_refine_step(reps, None, self.PARAMS, self.CFG, self.WINDOW, 0.05)
        assert len(out.representatives) == 2

    def test_count_never_grows(self):
        rng = np.random.default_rng(2)
        reps = [
            Field(self.GRID, rng.normal(size=self.GRID.shape) * 0.2)
            for _ in range(6)
        ]
        out = cover_refine_step(reps, None, self.PARAMS, self.CFG, self.WINDOW, 0.5)
        assert 1 <= len(out.representatives) <= 6
        assert len(out.cells) == len(out.representatives)

    def test_with_noise_shared_across_members(self):
        profile = ForcingProfile(modes=(Mode((1.0,), 0.05),))
        r = sample_realization(profile, seed=3)
        reps = [self.constant(0.5), self.constant(0.5)]
        out = cover_refine_step(reps, r, self.PARAMS, self.CFG, self.WINDOW, 0.25)
        assert len(out.representatives) == 1
