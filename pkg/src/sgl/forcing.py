"""Smooth homogeneous random forcing built from an almost-periodic profile.

The spatial profile is a finite trigonometric sum

    xi(x) = sum_j a_j cos(k_j . x + phi_j + theta_{g(j)})

whose translate closure is a torus; sampling the torus phase theta
uniformly (Haar) makes the law of the forcing invariant under spatial
shifts.  The temporal part is a single scalar Wiener process: one
increment dw multiplies the whole spatial profile.

Streams are generated in fixed-size blocks from a seeded generator, so a
realization is a pure function of its seed no matter in which order
increments are queried.  Time shifts re-index the same stream, which
makes the cocycle property exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Field, Grid

_BLOCK = 8192


class AlignmentError(ValueError):
    """Query time does not sit on the increment lattice."""


@dataclass(frozen=True)
class Mode:
    wave_vector: tuple
    amplitude: float
    base_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "wave_vector", tuple(float(k) for k in self.wave_vector))


@dataclass(frozen=True)
class ForcingProfile:
    modes: tuple
    torus_dim: int = 0  # 0 means one torus factor per mode

    def __post_init__(self):
        modes = tuple(
            m if isinstance(m, Mode) else Mode(*m) for m in self.modes
        )
        if not modes:
            raise ValueError("profile needs at least one mode")
        if not all(math.isfinite(m.amplitude) for m in modes):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "modes", modes)
        k = self.torus_dim if self.torus_dim > 0 else len(modes)
        if k > len(modes):
            raise ValueError("torus_dim cannot exceed the number of modes")
        object.__setattr__(self, "torus_dim", k)

    def derivative_weighted_sum(self, order: int) -> float:
        """sum |a_j| |k_j|^order, finite for every order (smoothness surrogate)."""
        return sum(
            abs(m.amplitude) * np.linalg.norm(m.wave_vector) ** order for m in self.modes
        )


def xi_field(profile: ForcingProfile, phase_point: np.ndarray, grid: Grid) -> Field:
    """Evaluate the profile translated to the given torus phase on the grid."""
    theta = np.asarray(phase_point, dtype=float)
    x = grid.coords()
    vals = np.zeros(grid.shape)
    k = profile.torus_dim
    for j, m in enumerate(profile.modes):
        kv = np.asarray(m.wave_vector[: grid.d])
        phase = x @ kv if grid.d > 1 else x[..., 0] * kv[0]
        vals = vals + m.amplitude * np.cos(phase + m.base_phase + theta[j % k])
    return Field(grid, vals.astype(np.complex128))


def phase_from_shift(profile: ForcingProfile, shift) -> np.ndarray:
    """Torus point realizing the spatial translate xi(. + shift).

    Exact only when every mode has its own torus factor.
    """
    if profile.torus_dim != len(profile.modes):
        raise ValueError("phase_from_shift needs torus_dim == number of modes")
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    return np.array(
        [np.dot(m.wave_vector[: len(shift)], shift) for m in profile.modes]
    )


class _StreamCache:
    """Lazily grown block of N(0,1) draws, (1 + torus_dim) per step."""

    def __init__(self, seed: int, width: int):
        self.rng = np.random.default_rng(np.random.PCG64(seed))
        self.width = width
        self.data = np.empty((0, width))

    def ensure(self, n_steps: int) -> None:
        while self.data.shape[0] < n_steps:
            block = self.rng.standard_normal((_BLOCK, self.width))
            self.data = np.vstack([self.data, block])

    def rows(self, start: int, count: int) -> np.ndarray:
        self.ensure(start + count)
        return self.data[start : start + count]


@dataclass
class NoiseRealization:
    """One noise sample: torus phase y0 plus a Wiener increment stream."""

    profile: ForcingProfile
    seed: int
    dt: float
    drift_mode: str = "frozen"          # "frozen" or "torus_brownian"
    diffusion: float = 0.0
    y0: np.ndarray = field(default=None, repr=False)
    _cache: _StreamCache = field(default=None, repr=False)
    _offset: int = 0                    # step offset into the parent stream

    def __post_init__(self):
        if self.drift_mode not in ("frozen", "torus_brownian"):
            raise ValueError(f"unknown drift mode {self.drift_mode!r}")
        if self._cache is None:
            k = self.profile.torus_dim
            # dedicated draw for y0 so the increment stream starts clean
            init_rng = np.random.default_rng(np.random.PCG64(self.seed).jumped())
            self.y0 = init_rng.uniform(0.0, 2.0 * np.pi, size=k)
            self._cache = _StreamCache(self.seed, 1 + k)

    def step_index(self, t: float) -> int:
        i = t / self.dt
        j = round(i)
        if abs(i - j) > 1e-8 * max(1.0, abs(i)):
            raise AlignmentError(f"time {t} is not a multiple of dt={self.dt}")
        return int(j)

    def wiener_increments(self, start_step: int, count: int) -> np.ndarray:
        """Delta-w for `count` steps from `start_step`, each N(0, dt)."""
        rows = self._cache.rows(self._offset + start_step, count)
        return rows[:, 0] * math.sqrt(self.dt)

    def drift_at(self, step: int) -> np.ndarray:
        """Torus drift z(t) at t = step*dt (z(0) = 0)."""
        k = self.profile.torus_dim
        if self.drift_mode == "frozen" or step == 0:
            return np.zeros(k)
        base = self._cache.rows(self._offset, step)[:, 1:]
        z = self.diffusion * math.sqrt(self.dt) * base.sum(axis=0)
        return z

    def phase_at(self, step: int) -> np.ndarray:
        return self.y0 + self.drift_at(step)

    def shifted(self, tau: float) -> "NoiseRealization":
        """The realization theta^tau omega: same stream, re-indexed."""
        steps = self.step_index(tau)
        out = NoiseRealization(
            profile=self.profile,
            seed=self.seed,
            dt=self.dt,
            drift_mode=self.drift_mode,
            diffusion=self.diffusion,
            y0=self.y0,
            _cache=self._cache,
            _offset=self._offset + steps,
        )
        if self.drift_mode == "torus_brownian":
            # z is measured from the shifted origin: y0 absorbs z(tau)
            out.y0 = self.y0 + self.drift_at(steps)
        return out


@dataclass(frozen=True)
class ShiftOperator:
    tau: float

    def __call__(self, realization: NoiseRealization) -> NoiseRealization:
        return realization.shifted(self.tau)


def sample_realization(
    profile: ForcingProfile,
    seed: int,
    dt: float = 1e-3,
    drift_mode: str = "frozen",
    diffusion: float = 0.0,
) -> NoiseRealization:
    """Draw y0 from the Haar (uniform) measure and seed the increment stream."""
    return NoiseRealization(
        profile=profile, seed=seed, dt=dt, drift_mode=drift_mode, diffusion=diffusion
    )


def increment(realization: NoiseRealization, t: float, grid: Grid):
    """(spatial profile at time t, Delta-w for the step starting at t)."""
    step = realization.step_index(t)
    dw = float(realization.wiener_increments(step, 1)[0])
    f = xi_field(realization.profile, realization.phase_at(step), grid)
    return f, dw
