"""Exponential time-differencing integration of the stochastic equation.

The linear part L = (1 + i*alpha) Lap + 1 is diagonal in Fourier space,
so every step applies the exact multiplier exp(dt * symbol(L)); the
nonlinearity is advanced explicitly (etd1) or with a predictor-corrector
(etd2, the default) and the stochastic convolution uses the left-point
Ito evaluation

    int_t^{t+dt} e^((t+dt-s)L) xi_s dw_s  ~  e^(dt L) xi_t Dw .

States carry a leading batch axis throughout; a batch evolves under
per-member noise streams but shares the grid, which is what the
pair/ensemble constructions need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Field, Grid, WeightLattice, WeightSpec, Window, weight_on_grid
from .forcing import NoiseRealization, xi_field
from .model import ModelParams


class BlowUpError(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"solution lost finiteness at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 10.0
    scheme: str = "etd2"
    record_stride: int = 100
    cutoff_smoothing: float = 1.0
    with_cutoff: bool = True
    delta: float = 0.2              # weight decay for recorded local norms
    lattice_spacing: float = 1.0    # centre lattice for uniformly-local norms
    stopping_radii: tuple = ()
    checkpoint_times: tuple = ()
    max_record_m: int = 2           # record hm_ul for m = 0..max_record_m
    nonlinear_scale: float = 1.0    # 0 disables the nonlinearity (linear regime)

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < self.dt:
            raise ValueError("need dt > 0 and t_end >= dt")
        if self.scheme not in ("etd1", "etd2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True)
class StoppingEvent:
    radius: float
    time: float | None

    @property
    def triggered(self) -> bool:
        return self.time is not None


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    sup_norm: np.ndarray            # over the whole box
    l2loc_0: np.ndarray             # weighted L2 at centre 0
    hm_ul: dict                     # m -> array of uniformly-local norms
    checkpoints: dict = field(default_factory=dict)   # time -> Field
    stopping: tuple = ()

    def stopping_event(self, radius: float) -> StoppingEvent:
        return stopping_time(self, radius)


def stopping_time(record: TrajectoryRecord, radius: float) -> StoppingEvent:
    """First recorded time with sup-norm >= radius, None if never reached."""
    hits = np.nonzero(record.sup_norm >= radius)[0]
    t = float(record.times[hits[0]]) if hits.size else None
    return StoppingEvent(radius=radius, time=t)


def linear_multiplier(p, t: float, alpha: float):
    """Fourier symbol of exp(tL): exp(t(1 - (1+i*alpha)|p|^2))."""
    p = np.asarray(p, dtype=float)
    p_sq = np.sum(p * p, axis=-1) if p.ndim > 1 else p * p
    return np.exp(t * (1.0 - (1.0 + 1j * alpha) * p_sq))


def smooth_cutoff(s: np.ndarray, level: float, width: float = 1.0) -> np.ndarray:
    """Quintic ramp: 1 below `level`, 0 above `level + width`."""
    x = np.clip((np.asarray(s, dtype=float) - level) / width, 0.0, 1.0)
    return 1.0 - x ** 3 * (10.0 + x * (-15.0 + 6.0 * x))


def _nonlinear_values(
    values: np.ndarray, params: ModelParams, with_cutoff: bool, smoothing: float
) -> np.ndarray:
    amp = np.abs(values)
    out = -(1.0 + 1j * params.beta) * amp ** (2.0 * params.q) * values
    if with_cutoff:
        out *= smooth_cutoff(amp, params.big_m, smoothing)
    return out


def nonlinearity(u: Field, params: ModelParams, with_cutoff: bool = False,
                 smoothing: float = 1.0) -> Field:
    """Pointwise -(1+i*beta) [P_M(|u|)] |u|^(2q) u."""
    return Field(u.grid, _nonlinear_values(u.values, params, with_cutoff, smoothing))


class Stepper:
    """Batched ETD stepper; holds the precomputed symbols for one grid."""

    def __init__(self, grid: Grid, params: ModelParams, config: SolverConfig):
        self.grid = grid
        self.params = params
        self.config = config
        self.axes = tuple(range(-grid.d, 0))
        p_sq = grid.wavenumber_sq()
        self.multiplier = np.exp(config.dt * (1.0 - (1.0 + 1j * params.alpha) * p_sq))
        # 2/3-rule dealiasing for integer exponents; pointwise power
        # in physical space otherwise (documented limitation)
        if float(params.q) in (1.0, 2.0):
            k = np.abs(grid.wavenumbers())
            keep = k <= (2.0 / 3.0) * k.max()
            if grid.d == 1:
                self.dealias = keep.astype(float)
            else:
                self.dealias = (keep[:, None] & keep[None, :]).astype(float)
        else:
            self.dealias = None

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=self.axes)

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(spectrum, axes=self.axes)

    def _n_hat(self, values: np.ndarray) -> np.ndarray:
        if self.config.nonlinear_scale == 0.0:
            return np.zeros_like(values)
        n = self.config.nonlinear_scale * _nonlinear_values(
            values, self.params, self.config.with_cutoff, self.config.cutoff_smoothing
        )
        n_hat = self.fft(n)
        if self.dealias is not None:
            n_hat = n_hat * self.dealias
        return n_hat

    def step_hat(self, u_hat: np.ndarray, noise_hat) -> np.ndarray:
        """One step in Fourier space.  noise_hat is xi_hat*dw or None."""
        dt = self.config.dt
        m = self.multiplier
        u = self.ifft(u_hat)
        n0_hat = self._n_hat(u)
        s_hat = 0.0 if noise_hat is None else m * noise_hat
        if self.config.scheme == "etd1":
            return m * (u_hat + dt * n0_hat) + s_hat
        pred = m * (u_hat + dt * n0_hat) + s_hat
        n1_hat = self._n_hat(self.ifft(pred))
        return m * u_hat + 0.5 * dt * (m * n0_hat + n1_hat) + s_hat


def step(u: Field, t: float, realization: NoiseRealization | None,
         params: ModelParams, config: SolverConfig) -> Field:
    """Advance a single field by one time step."""
    if realization is not None and abs(realization.dt - config.dt) > 1e-15:
        raise ValueError("realization dt does not match solver dt")
    stepper = Stepper(u.grid, params, config)
    noise_hat = None
    if realization is not None:
        i = realization.step_index(t)
        dw = realization.wiener_increments(i, 1)[0]
        xi = xi_field(realization.profile, realization.phase_at(i), u.grid)
        noise_hat = stepper.fft(xi.values) * dw
    out = stepper.ifft(stepper.step_hat(stepper.fft(u.values), noise_hat))
    if not np.isfinite(out).all():
        raise BlowUpError(t + config.dt)
    return Field(u.grid, out)


class _Recorder:
    """Accumulates the standard observables from Fourier-space states."""

    def __init__(self, grid: Grid, config: SolverConfig):
        self.grid = grid
        self.config = config
        self.lattice = WeightLattice(grid, config.delta, config.lattice_spacing)
        self.w0 = weight_on_grid(WeightSpec(config.delta, (0.0, 0.0)[: grid.d]), grid)
        self.cell = grid.spacing ** grid.d
        k = grid.wavenumbers()
        if grid.d == 1:
            self.grad_mults = [[1j * k]]
        else:
            self.grad_mults = [[1j * k[:, None], 1j * k[None, :]]]
        self.times = []
        self.sup = []
        self.l2loc = []
        self.hm_ul = {m: [] for m in range(config.max_record_m + 1)}

    def record(self, t: float, u_hat: np.ndarray, stepper: Stepper) -> np.ndarray:
        """Append observables; returns |u| in physical space (batched)."""
        u = stepper.ifft(u_hat)
        if not np.isfinite(u).all():
            raise BlowUpError(t)
        amp2 = np.abs(u) ** 2
        red_axes = tuple(range(-self.grid.d, 0))
        self.times.append(t)
        self.sup.append(np.sqrt(amp2.max(axis=red_axes)))
        self.l2loc.append(
            np.sqrt(np.sum(self.w0 * amp2, axis=red_axes) * self.cell)
        )
        # cumulative gradient densities, derivatives straight from u_hat
        dens = amp2.copy()
        current = [u_hat]
        for m in range(self.config.max_record_m + 1):
            if m > 0:
                nxt = []
                for comp in current:
                    for mu in self.grad_mults[0]:
                        nxt.append(mu * comp)
                current = nxt
                for comp in current:
                    dens += np.abs(stepper.ifft(comp)) ** 2
            flatd = dens.reshape(dens.shape[: dens.ndim - self.grid.d] + (-1,))
            vals = (flatd @ self.lattice.matrix.T).max(axis=-1) * self.cell
            self.hm_ul[m].append(np.sqrt(vals))
        return np.sqrt(amp2)

    def build(self, batch: int) -> list:
        times = np.array(self.times)
        sup = np.array(self.sup)
        l2 = np.array(self.l2loc)
        hm = {m: np.array(v) for m, v in self.hm_ul.items()}
        out = []
        for b in range(batch):
            out.append(
                TrajectoryRecord(
                    times=times,
                    sup_norm=sup[:, b],
                    l2loc_0=l2[:, b],
                    hm_ul={m: v[:, b] for m, v in hm.items()},
                )
            )
        return out


def _prepare_batch(u0s) -> tuple:
    grid = u0s[0].grid
    vals = np.stack([np.asarray(f.values, dtype=np.complex128) for f in u0s])
    return grid, vals


def evolve_batch(
    u0s: list,
    realizations: list | None,
    params: ModelParams,
    config: SolverConfig,
) -> list:
    """Evolve a batch of fields, each under its own realization (or no noise).

    Realizations must share dt and the frozen drift mode (the fast path
    precomputes each xi spectrum once); non-frozen drift falls back to a
    per-step profile evaluation.
    """
    grid, u = _prepare_batch(u0s)
    batch = u.shape[0]
    stepper = Stepper(grid, params, config)
    recorder = _Recorder(grid, config)
    n_steps = int(round(config.t_end / config.dt))
    shape_tail = (1,) * grid.d

    frozen_xi_hat = None
    if realizations is not None:
        if len(realizations) != batch:
            raise ValueError("one realization per batch member required")
        for r in realizations:
            if abs(r.dt - config.dt) > 1e-15:
                raise ValueError("realization dt does not match solver dt")
        if all(r.drift_mode == "frozen" for r in realizations):
            frozen_xi_hat = np.stack(
                [
                    stepper.fft(xi_field(r.profile, r.phase_at(0), grid).values)
                    for r in realizations
                ]
            )

    u_hat = stepper.fft(u)
    recorder.record(0.0, u_hat, stepper)
    checkpoint_steps = {
        int(round(t / config.dt)): t for t in config.checkpoint_times
    }
    checkpoints = {b: {} for b in range(batch)}
    if 0 in checkpoint_steps:
        for b in range(batch):
            checkpoints[b][checkpoint_steps[0]] = Field(grid, stepper.ifft(u_hat[b]))

    chunk = 4096
    i = 0
    while i < n_steps:
        count = min(chunk, n_steps - i)
        if realizations is not None:
            dws = np.stack(
                [r.wiener_increments(i, count) for r in realizations]
            )  # (batch, count)
        for j in range(count):
            t = (i + j) * config.dt
            noise_hat = None
            if realizations is not None:
                if frozen_xi_hat is not None:
                    noise_hat = frozen_xi_hat * dws[:, j].reshape((batch,) + shape_tail)
                else:
                    xi_hat = np.stack(
                        [
                            stepper.fft(
                                xi_field(r.profile, r.phase_at(i + j), grid).values
                            )
                            for r in realizations
                        ]
                    )
                    noise_hat = xi_hat * dws[:, j].reshape((batch,) + shape_tail)
            u_hat = stepper.step_hat(u_hat, noise_hat)
            s = i + j + 1
            if s % config.record_stride == 0 or s == n_steps:
                recorder.record(s * config.dt, u_hat, stepper)
            if s in checkpoint_steps:
                for b in range(batch):
                    checkpoints[b][checkpoint_steps[s]] = Field(
                        grid, stepper.ifft(u_hat[b])
                    )
        i += count

    records = recorder.build(batch)
    for b, rec in enumerate(records):
        rec.checkpoints = checkpoints[b]
        rec.stopping = tuple(
            stopping_time(rec, r) for r in config.stopping_radii
        )
    return records


def evolve(
    u0: Field,
    realization: NoiseRealization | None,
    params: ModelParams,
    config: SolverConfig,
) -> TrajectoryRecord:
    """Single-trajectory wrapper around the batched integrator."""
    reals = None if realization is None else [realization]
    return evolve_batch([u0], reals, params, config)[0]


@dataclass
class DivergenceSeries:
    times: np.ndarray
    sup_diff: np.ndarray
    window_side: np.ndarray
    eps: float


def pair_evolve(
    u0: Field,
    v0: Field,
    realization: NoiseRealization | None,
    params: ModelParams,
    config: SolverConfig,
    window: Window | None = None,
    eps: float | None = None,
    shrink_c: float = 2.0,
):
    """Evolve u and v under the SAME noise; record their sup difference.

    The difference is measured on windows shrinking linearly in time,
    side(t) = L - shrink_c*(1+t)*log(1/eps), floored at one length unit,
    so boundary effects never contaminate the series.
    """
    if u0.grid != v0.grid:
        raise ValueError("pair members must share the grid")
    grid = u0.grid
    if window is None:
        window = Window(side=grid.box_length / 2.0)
    window.validate_inside(grid)
    if eps is None:
        mask = window.mask(grid)
        eps = float(np.abs(u0.values - v0.values)[mask].max())
        if eps == 0.0:
            eps = np.finfo(float).tiny

    stepper = Stepper(grid, params, config)
    recorder = _Recorder(grid, config)
    n_steps = int(round(config.t_end / config.dt))
    u_hat = np.stack([stepper.fft(u0.values), stepper.fft(v0.values)])

    noise_hat0 = None
    if realization is not None:
        if abs(realization.dt - config.dt) > 1e-15:
            raise ValueError("realization dt does not match solver dt")
        if realization.drift_mode == "frozen":
            noise_hat0 = stepper.fft(
                xi_field(realization.profile, realization.phase_at(0), grid).values
            )

    log_inv_eps = max(np.log(1.0 / eps), 0.0)
    times, diffs, sides = [], [], []

    def record_div(t, u_hat_pair):
        side = max(window.side - shrink_c * (1.0 + t) * log_inv_eps, 1.0)
        side = min(side, window.side)
        w = Window(side=side, center=window.center)
        mask = w.mask(grid)
        diff = stepper.ifft(u_hat_pair[0] - u_hat_pair[1])
        times.append(t)
        diffs.append(float(np.abs(diff)[mask].max()))
        sides.append(side)

    recorder.record(0.0, u_hat, stepper)
    record_div(0.0, u_hat)
    dws = None
    if realization is not None:
        dws = realization.wiener_increments(0, n_steps)
    for s in range(n_steps):
        noise_hat = None
        if realization is not None:
            if noise_hat0 is not None:
                xi_hat = noise_hat0
            else:
                xi_hat = stepper.fft(
                    xi_field(realization.profile, realization.phase_at(s), grid).values
                )
            noise_hat = xi_hat[None, ...] * dws[s]
        u_hat = stepper.step_hat(u_hat, noise_hat)
        if (s + 1) % config.record_stride == 0 or s + 1 == n_steps:
            t = (s + 1) * config.dt
            recorder.record(t, u_hat, stepper)
            record_div(t, u_hat)

    rec_u, rec_v = recorder.build(2)
    series = DivergenceSeries(
        times=np.array(times),
        sup_diff=np.array(diffs),
        window_side=np.array(sides),
        eps=eps,
    )
    return rec_u, rec_v, series
