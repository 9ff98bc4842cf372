"""Frequency-split heat kernels, band-limited interpolation, cover refinement.

The linear propagator has the Fourier representation

    K_t(x) = (1/2pi) int e^(ipx + t(1 - (1+i*alpha)p^2)) dp      (d = 1),

split by a smooth low-pass chi(|p|/p*) into K^(-) (support |p| <= 2p*)
and K^(+) (support |p| >= p*).  K^(-) convolutions land in the Bernstein
class of functions band-limited to 2p*, which a Cartwright series
reconstructs from samples on the lattice x_n = n*pi/(8p*); K^(+) carries
the extra decay factor e^(-(p*)^2 t / 2).  The cover-refinement step uses
those node samples to quantize an evolved ensemble into eps-cells.

Everything here is one-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import Field, Window
from .forcing import NoiseRealization
from .model import ModelParams
from .solver import SolverConfig, evolve_batch, smooth_cutoff


@dataclass(frozen=True)
class KernelConfig:
    p_star: float
    alpha: float = 0.0
    quadrature_points: int = 4097

    def __post_init__(self):
        if self.p_star <= 4.0:
            raise ValueError("split frequency p_star must exceed 4")
        if self.quadrature_points < 64:
            raise ValueError("quadrature_points too small")

    def chi(self, s) -> np.ndarray:
        """Smooth low-pass ramp in |p|/p*: 1 below 1, 0 above 2."""
        return smooth_cutoff(np.asarray(s, dtype=float), 1.0, 1.0)


@dataclass(frozen=True)
class KernelDecayFit:
    n: int
    c_n: float
    max_violation: float


@dataclass(frozen=True)
class CartwrightGrid:
    p_star: float
    n_max: int

    def __post_init__(self):
        if self.p_star <= 0 or self.n_max < 1:
            raise ValueError("need p_star > 0 and n_max >= 1")

    @property
    def spacing(self) -> float:
        return np.pi / (8.0 * self.p_star)

    @property
    def nodes(self) -> np.ndarray:
        """x_n = n*pi/(8p*) for |n| <= n_max, symmetric about 0."""
        return np.arange(-self.n_max, self.n_max + 1) * self.spacing

    @property
    def safe_half_width(self) -> float:
        """Interior where series truncation stays controlled."""
        return 0.5 * self.n_max * self.spacing


def _quadrature(t: float, x, config: KernelConfig, band: str):
    """Trapezoid quadrature of the (chi-weighted) symbol against e^{ipx}."""
    if t <= 0:
        raise ValueError("kernel time must be positive")
    # the symbol decays like e^{-t p^2}; integrate to where it is < 1e-40
    p_max = max(2.0 * config.p_star, np.sqrt(1.0 + 95.0 / t))
    p = np.linspace(-p_max, p_max, config.quadrature_points)
    sym = np.exp(t * (1.0 - (1.0 + 1j * config.alpha) * p ** 2))
    if band == "minus":
        sym = sym * config.chi(np.abs(p) / config.p_star)
    elif band == "plus":
        sym = sym * (1.0 - config.chi(np.abs(p) / config.p_star))
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * np.multiply.outer(x, p))
    vals = np.trapezoid(phase * sym, p, axis=-1) / (2.0 * np.pi)
    return vals if x.ndim else complex(vals)


def kernel_minus(t: float, x, config: KernelConfig):
    """Low-frequency kernel: symbol times chi(|p|/p*), support |p| <= 2p*."""
    return _quadrature(t, x, config, "minus")


def kernel_plus(t: float, x, config: KernelConfig):
    """High-frequency complement: symbol times 1 - chi(|p|/p*)."""
    return _quadrature(t, x, config, "plus")


def kernel_full(t: float, x, config: KernelConfig):
    """Unsplit kernel, for partition cross-checks."""
    return _quadrature(t, x, config, "full")


def verify_kernel_decay(
    config: KernelConfig,
    n: int,
    t_list,
    kernel: str = "minus",
    x_max: float = 20.0,
    x_points: int = 801,
) -> KernelDecayFit:
    """Fit the smallest c_n with |K_t(x)| <= c_n t^(-1/2) (1 + x^2/t)^(-n).

    For the high band the envelope carries the extra factor
    e^(-(p*)^2 t / 2).  The fitted constant is the sup of the ratio, so
    max_violation <= 0 whenever the fit succeeds; a non-finite ratio
    signals quadrature misconfiguration.
    """
    if n not in (1, 2, 3):
        raise ValueError("decay order n must be 1, 2 or 3")
    if kernel not in ("minus", "plus"):
        raise ValueError("kernel must be 'minus' or 'plus'")
    x = np.linspace(-x_max, x_max, x_points)
    ratios = []
    for t in t_list:
        if t < 0.5:
            raise ValueError("decay bounds require t >= 0.5")
        vals = np.abs(_quadrature(float(t), x, config, kernel))
        env = (1.0 + x ** 2 / t) ** (-n) / np.sqrt(t)
        if kernel == "plus":
            env = env * np.exp(-config.p_star ** 2 * t / 2.0)
        ratios.append(vals / env)
    ratios = np.stack(ratios)
    if not np.isfinite(ratios).all():
        raise ArithmeticError("kernel decay fit failed: non-finite ratio")
    c_n = float(ratios.max())
    violation = 0.0
    for t, row in zip(t_list, ratios):
        env = (1.0 + x ** 2 / t) ** (-n) / np.sqrt(t)
        if kernel == "plus":
            env = env * np.exp(-config.p_star ** 2 * t / 2.0)
        violation = max(violation, float((row * env - c_n * env).max()))
    return KernelDecayFit(n=n, c_n=c_n, max_violation=violation)


def cartwright_interpolate(samples, grid: CartwrightGrid, x):
    """Reconstruct a 2p*-band-limited function from its node samples.

        f(x) = [sin(8p*x) / (32 (p*)^2)]
               * sum_n (-1)^n f(x_n) sin(4p*(x - x_n)) / (x - x_n)^2,

    with the removable singularity at x = x_n taken as the limit f(x_n).
    """
    nodes = grid.nodes
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != nodes.shape:
        raise ValueError("need one sample per node")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.abs(x_arr).max() > grid.safe_half_width:
        raise ValueError(
            f"|x| exceeds the safe interior {grid.safe_half_width:.6g} "
            f"of the truncated node range"
        )
    ps = grid.p_star
    signs = (-1.0) ** np.arange(-grid.n_max, grid.n_max + 1)
    diff = x_arr[:, None] - nodes[None, :]
    near = np.abs(diff) < 1e-9 * grid.spacing
    diff_safe = np.where(near, 1.0, diff)
    terms = signs * samples * np.sin(4.0 * ps * diff_safe) / diff_safe ** 2
    # nodes hit exactly: the term's limit is f(x_n) and the sine prefactor
    # kills every other term, so substitute the sample directly
    out = np.sin(8.0 * ps * x_arr) / (32.0 * ps ** 2) * np.where(
        near, 0.0, terms
    ).sum(axis=-1)
    hit = near.any(axis=-1)
    if hit.any():
        idx = near.argmax(axis=-1)
        out = np.where(hit, samples[idx], out)
    return out if np.asarray(x).ndim else complex(out[0])


@dataclass
class RefinedCover:
    representatives: list
    cells: list
    nodes: np.ndarray
    eps: float


def _node_samples(values: np.ndarray, field_grid, nodes: np.ndarray) -> np.ndarray:
    """Field values at the grid points nearest the requested nodes."""
    idx = np.rint(
        nodes / field_grid.spacing + field_grid.points_per_dim // 2
    ).astype(int)
    return values[idx]


def cover_refine_step(
    representatives: list,
    realization: NoiseRealization | None,
    params: ModelParams,
    config: SolverConfig,
    window: Window,
    eps: float,
    kernel_config: KernelConfig | None = None,
) -> RefinedCover:
    """One refinement step of an eps-cover of an evolving ensemble.

    Every representative advances one time unit under the SAME noise; the
    evolved fields are sampled on the Cartwright nodes inside the window
    and quantized to boxes of side eps/2 (real and imaginary parts
    independently).  One representative per occupied cell survives.
    """
    if not representatives:
        raise ValueError("need at least one representative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if kernel_config is None:
        kernel_config = KernelConfig(p_star=4.5)
    grid = representatives[0].grid
    if grid.d != 1:
        raise ValueError("cover refinement is one-dimensional")
    window.validate_inside(grid)

    cfg = replace(config, t_end=1.0, checkpoint_times=(1.0,))
    reals = None if realization is None else [realization] * len(representatives)
    records = evolve_batch(list(representatives), reals, params, cfg)
    evolved = [rec.checkpoints[1.0] for rec in records]

    spacing = np.pi / (8.0 * kernel_config.p_star)
    n_max = max(int(np.ceil(window.side / 2.0 / spacing)), 1)
    cg = CartwrightGrid(p_star=kernel_config.p_star, n_max=n_max)
    center = window.center[0] if window.center else 0.0
    nodes = cg.nodes + center
    nodes = nodes[np.abs(nodes - center) <= window.side / 2.0]

    box = eps / 2.0
    seen = {}
    for f in evolved:
        vals = _node_samples(f.values, grid, nodes)
        key = tuple(
            np.concatenate(
                [np.floor(vals.real / box), np.floor(vals.imag / box)]
            ).astype(np.int64)
        )
        if key not in seen:
            seen[key] = f
    return RefinedCover(
        representatives=list(seen.values()),
        cells=list(seen.keys()),
        eps=eps,
        nodes=nodes,
    )
