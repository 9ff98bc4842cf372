"""Cesaro-mean statistics and stationarity / homogeneity / tightness diagnostics.

Time averages of observables along trajectories estimate integrals
against the invariant measure; ensemble averages across independent
realizations supply error bars.  The diagnostics never certify weak
convergence, they only check the signatures expected of a stationary,
spatially homogeneous limit: stabilization of running means, agreement
of window means, agreement under spatial shifts, and occupancy curves
approaching one on large balls.

Standard errors use the batch-means method, which tolerates the serial
correlation a trajectory carries.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import (
    Field,
    WeightSpec,
    Window,
    hm_ul_norm,
    local_l2_norm,
    sup_norm,
)
from .solver import TrajectoryRecord

KINDS = (
    "sup_norm_window",
    "l2loc",
    "hm_ul",
    "amplitude_moment",
    "spatial_correlation",
)


@dataclass(frozen=True)
class Observable:
    """A named functional of a field state."""

    name: str
    kind: str
    delta: float = 0.2
    m: int = 0
    p: float = 2.0
    lag: float = 0.0
    window: Window | None = None
    center: tuple = (0.0,)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")

    def shifted(self, shift: float) -> "Observable":
        """The same observable evaluated around a shifted centre."""
        if self.kind == "sup_norm_window":
            if self.window is None:
                raise ValueError("sup_norm_window observable needs a window")
            w = Window(
                side=self.window.side,
                center=tuple(c + shift for c in self.window.center),
            )
            return replace(self, window=w)
        if self.kind in ("l2loc", "hm_ul"):
            return replace(self, center=tuple(c + shift for c in self.center))
        raise ValueError(f"observable kind {self.kind!r} has no spatial centre")

    def evaluate(self, f: Field) -> float:
        if self.kind == "sup_norm_window":
            return sup_norm(f, self.window)
        if self.kind == "l2loc":
            return local_l2_norm(f, WeightSpec(self.delta, self.center))
        if self.kind == "hm_ul":
            return hm_ul_norm(f, self.delta, self.m).value
        if self.kind == "amplitude_moment":
            return float((np.abs(f.values) ** self.p).mean())
        # spatial correlation at the given lag, circular shift on the grid
        steps = self.lag / f.grid.spacing
        k = int(round(steps))
        if abs(steps - k) > 1e-9:
            raise ValueError("correlation lag must be a multiple of the spacing")
        shifted = np.roll(f.values, -k, axis=0)
        return float(np.real(np.mean(f.values * np.conj(shifted))))

    def series(self, record: TrajectoryRecord) -> np.ndarray:
        """The recorded time series of this observable, where available."""
        if self.kind == "sup_norm_window":
            return record.sup_norm
        if self.kind == "l2loc":
            return record.l2loc_0
        if self.kind == "hm_ul":
            return record.hm_ul[self.m]
        raise ValueError(f"kind {self.kind!r} is not recorded along trajectories")


@dataclass
class CesaroSeries:
    observable: Observable
    times: np.ndarray
    running_mean: np.ndarray
    standard_error: np.ndarray


@dataclass(frozen=True)
class TightnessReport:
    radius_grid: np.ndarray
    occupancy: np.ndarray
    m: int


def _burn_slice(n: int, burn_in: float) -> int:
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in fraction must be in [0, 1)")
    return min(int(np.floor(n * burn_in)), n - 1)


def _batch_stderr(series: np.ndarray, n_batches: int = 8) -> float:
    """Batch-means standard error of the mean of a correlated series."""
    n = series.size
    b = min(n_batches, n)
    if b < 2:
        return np.inf
    edges = np.linspace(0, n, b + 1).astype(int)
    means = np.array([series[i:j].mean() for i, j in zip(edges, edges[1:])])
    return float(means.std(ddof=1) / np.sqrt(b))


def _pool(record_or_ensemble, observable: Observable):
    if isinstance(record_or_ensemble, TrajectoryRecord):
        records = [record_or_ensemble]
    else:
        records = list(record_or_ensemble)
    times = records[0].times
    data = np.stack([observable.series(r) for r in records])
    return times, data.mean(axis=0)


def cesaro_mean(
    record_or_ensemble,
    observable: Observable,
    burn_in: float = 0.25,
) -> CesaroSeries:
    """Running time-average of an observable with batch-means error bars."""
    times, series = _pool(record_or_ensemble, observable)
    start = _burn_slice(times.size, burn_in)
    t = times[start:]
    s = series[start:]
    running = np.cumsum(s) / np.arange(1, s.size + 1)
    stderr = np.array([_batch_stderr(s[: k + 1]) for k in range(s.size)])
    return CesaroSeries(
        observable=observable,
        times=t,
        running_mean=running,
        standard_error=stderr,
    )


def stationarity_test(
    record_or_ensemble,
    observable: Observable,
    windows: int = 4,
    burn_in: float = 0.25,
) -> float:
    """Max standardized discrepancy between window means after burn-in.

    Scores near or below 3 are consistent with stationarity; a trend or
    transient shows up as a large score.
    """
    if windows < 2:
        raise ValueError("need at least 2 windows")
    times, series = _pool(record_or_ensemble, observable)
    start = _burn_slice(times.size, burn_in)
    s = series[start:]
    edges = np.linspace(0, s.size, windows + 1).astype(int)
    means, errs = [], []
    for i, j in zip(edges, edges[1:]):
        means.append(s[i:j].mean())
        errs.append(_batch_stderr(s[i:j], n_batches=4))
    score = 0.0
    for i in range(windows):
        for j in range(i + 1, windows):
            spread = np.hypot(errs[i], errs[j])
            gap = abs(means[i] - means[j])
            score = max(score, gap / spread if spread > 0 else (np.inf if gap > 0 else 0.0))
    return float(score)


def homogeneity_test(
    snapshots: list,
    observable: Observable,
    shifts,
) -> float:
    """Max standardized discrepancy of shifted observable means.

    `snapshots` is one list of Fields per realization; each realization
    contributes the time average of the observable at every shifted
    centre, and the shifted means are compared with the shift-0 mean
    across realizations.
    """
    if not snapshots or not snapshots[0]:
        raise ValueError("need at least one realization with one snapshot")
    grid = snapshots[0][0].grid
    obs_by_shift = []
    for a in shifts:
        ob = observable.shifted(float(a))
        if ob.kind == "sup_norm_window":
            ob.window.validate_inside(grid)
        obs_by_shift.append(ob)

    # per-realization time averages, per shift: shape (n_shifts, n_real)
    means = np.array(
        [
            [np.mean([ob.evaluate(f) for f in real]) for real in snapshots]
            for ob in obs_by_shift
        ]
    )
    n_real = means.shape[1]
    mu = means.mean(axis=1)
    se = means.std(axis=1, ddof=1) / np.sqrt(n_real) if n_real > 1 else np.full(
        len(obs_by_shift), np.inf
    )
    score = 0.0
    for i in range(1, len(obs_by_shift)):
        spread = np.hypot(se[0], se[i])
        gap = abs(mu[i] - mu[0])
        score = max(score, gap / spread if spread > 0 else (np.inf if gap > 0 else 0.0))
    return float(score)


def tightness(
    ensemble,
    m: int,
    radius_grid,
    burn_in: float = 0.25,
) -> TightnessReport:
    """Occupancy curve: fraction of samples with the H^m ul-norm <= R."""
    records = [ensemble] if isinstance(ensemble, TrajectoryRecord) else list(ensemble)
    samples = []
    for r in records:
        series = r.hm_ul[m]
        samples.append(series[_burn_slice(series.size, burn_in):])
    pooled = np.concatenate(samples)
    radius_grid = np.asarray(radius_grid, dtype=float)
    occupancy = np.array([(pooled <= rad).mean() for rad in radius_grid])
    return TightnessReport(radius_grid=radius_grid, occupancy=occupancy, m=m)
