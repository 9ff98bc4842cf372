"""Cover-counting entropy and dimension estimators.

A finite ensemble of states stands in for the random attractor.  All
pairwise dynamical (Bowen) distances come from ONE batched evolution of
the whole ensemble under the shared noise realization: the forcing is
additive, so evolving the batch jointly and differencing afterwards is
exact and turns the quadratic pair count into a single solver run.

Limits in the definitions (n -> inf, L -> inf, eps -> 0) are replaced by
least-squares slope fits over finite grids; every estimate keeps its fit
residuals, and nothing here claims convergence to the true densities.
"""

from __future__ import annotations

import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import Field, Window
from .forcing import NoiseRealization, xi_field
from .model import ModelParams
from .solver import BlowUpError, DivergenceSeries, SolverConfig, Stepper


@dataclass
class EnsembleSnapshot:
    """Attractor samples at a common (time, realization)."""

    fields: list
    realization_id: int = 0
    time: float = 0.0

    def __post_init__(self):
        if not self.fields:
            raise ValueError("snapshot needs at least one field")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise ValueError("snapshot fields must share the grid")

    @property
    def grid(self):
        return self.fields[0].grid


@dataclass(frozen=True)
class BowenSpec:
    n: int
    tau: float
    window: Window
    eps: float

    def __post_init__(self):
        if self.n < 1 or self.tau <= 0 or self.eps <= 0:
            raise ValueError("need n >= 1, tau > 0, eps > 0")


@dataclass(frozen=True)
class CoverReport:
    spec: object
    count: int
    method: str
    elapsed: float


@dataclass
class PartitionLabeling:
    eps: float
    labels: np.ndarray      # integers, shape (n_samples, n_times, n_shifts)


@dataclass
class EntropyEstimate:
    table: dict = field(default_factory=dict)
    h_top_hat: float | None = None
    h_mu_hat: float | None = None
    h_eps_hat: dict = field(default_factory=dict)
    d_up_hat: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DivergenceFit:
    gamma_hat: float
    c_hat: float
    residual: float


def evolve_snapshot_states(
    fields: list,
    realization: NoiseRealization | None,
    params: ModelParams,
    config: SolverConfig,
    n: int,
    tau: float,
    windows: list,
) -> np.ndarray:
    """Window samples of every ensemble member at times k*tau, k < n.

    All members evolve under the SAME noise.  Returns a complex array of
    shape (n_samples, n, n_windows, n_window_points); the windows must
    contain equal numbers of grid points.
    """
    grid = fields[0].grid
    steps_per_tau = int(round(tau / config.dt))
    if abs(steps_per_tau * config.dt - tau) > 1e-9:
        raise ValueError("tau must be a multiple of the solver dt")
    masks = []
    for w in windows:
        w.validate_inside(grid)
        masks.append(w.mask(grid))
    sizes = {int(m.sum()) for m in masks}
    if len(sizes) != 1:
        raise ValueError("windows must contain equal numbers of grid points")

    stepper = Stepper(grid, params, config)
    u_hat = stepper.fft(
        np.stack([np.asarray(f.values, dtype=np.complex128) for f in fields])
    )
    xi_hat = None
    dws = None
    if realization is not None:
        if abs(realization.dt - config.dt) > 1e-15:
            raise ValueError("realization dt does not match solver dt")
        dws = realization.wiener_increments(0, steps_per_tau * (n - 1))
        if realization.drift_mode == "frozen":
            xi_hat = stepper.fft(
                xi_field(realization.profile, realization.phase_at(0), grid).values
            )

    out = np.empty((len(fields), n, len(windows), sizes.pop()), dtype=complex)

    def capture(k):
        u = stepper.ifft(u_hat)
        if not np.isfinite(u).all():
            raise BlowUpError(k * tau)
        for j, m in enumerate(masks):
            out[:, k, j, :] = u[:, m]

    capture(0)
    for k in range(1, n):
        for s in range(steps_per_tau):
            step_idx = (k - 1) * steps_per_tau + s
            noise_hat = None
            if realization is not None:
                if xi_hat is None:
                    xi_hat_s = stepper.fft(
                        xi_field(
                            realization.profile, realization.phase_at(step_idx), grid
                        ).values
                    )
                else:
                    xi_hat_s = xi_hat
                noise_hat = xi_hat_s[None, ...] * dws[step_idx]
            u_hat = stepper.step_hat(u_hat, noise_hat)
        capture(k)
    return out


def bowen_matrix(states: np.ndarray) -> np.ndarray:
    """Pairwise max-over-time sup distances from captured window states."""
    n_samples = states.shape[0]
    flat = states.reshape(n_samples, -1)
    dist = np.zeros((n_samples, n_samples))
    for i in range(n_samples):
        dist[i] = np.abs(flat - flat[i]).max(axis=1)
    return dist


def bowen_distance(
    u: Field,
    v: Field,
    spec: BowenSpec,
    realization: NoiseRealization | None,
    params: ModelParams,
    config: SolverConfig,
) -> float:
    """max_{k < n} of the sup-distance on the window at times k*tau."""
    if u.grid != v.grid:
        raise ValueError("fields must share the grid")
    states = evolve_snapshot_states(
        [u, v], realization, params, config, spec.n, spec.tau, [spec.window]
    )
    return float(bowen_matrix(states)[0, 1])


MAX_EXACT_POINTS = 12


def _distance_matrix(snapshot_or_matrix, metric) -> np.ndarray:
    if isinstance(metric, np.ndarray):
        return metric
    fields = snapshot_or_matrix.fields
    n = len(fields)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = metric(fields[i], fields[j])
    return dist


def _min_diameter_cover(dist: np.ndarray, eps: float) -> int:
    """Minimal number of groups of pairwise distance <= eps (exact).

    Equivalent to covering by sets of diameter <= eps, the semantics the
    subadditivity inequalities hold for exactly.  Backtracking over
    group assignments; intended for small instances only.
    """
    n = dist.shape[0]
    compatible = dist <= eps + 1e-12

    def fits(k: int) -> bool:
        groups = [[] for _ in range(k)]

        def place(i: int) -> bool:
            if i == n:
                return True
            opened = 0
            for g in groups:
                if not g:
                    opened += 1
                    if opened > 1:
                        break       # empty groups are interchangeable
                if all(compatible[i, j] for j in g):
                    g.append(i)
                    if place(i + 1):
                        return True
                    g.pop()
            return False

        return place(0)

    for k in range(1, n + 1):
        if fits(k):
            return k
    return n


def cover_count(
    points,
    metric,
    eps: float,
    method: str = "greedy",
    spec=None,
) -> CoverReport:
    """Minimal count of eps-diameter sets needed to cover the samples.

    The greedy method covers with balls of radius eps/2 around
    farthest-point-seeded sample centres (each ball has diameter <=
    eps), an upper bound on the minimum.  The exact method finds the
    true minimal diameter-eps cover by exhaustive search and is
    restricted to small instances; exact <= greedy always.
    """
    t0 = _time.perf_counter()
    dist = _distance_matrix(points, metric)
    n = dist.shape[0]
    radius = eps / 2.0

    if method == "greedy":
        min_dist = np.full(n, np.inf)
        centers = []
        # deterministic: start from index 0, then farthest-point seeding
        nxt = 0
        while np.any(min_dist > radius + 1e-12):
            centers.append(nxt)
            min_dist = np.minimum(min_dist, dist[nxt])
            nxt = int(min_dist.argmax())
        count = len(centers)
    elif method == "exact":
        if n > MAX_EXACT_POINTS:
            raise ValueError(
                f"exact cover limited to {MAX_EXACT_POINTS} points, got {n}"
            )
        count = _min_diameter_cover(dist, eps)
    else:
        raise ValueError(f"unknown cover method {method!r}")

    return CoverReport(
        spec=spec if spec is not None else eps,
        count=count,
        method=method,
        elapsed=_time.perf_counter() - t0,
    )


def _slope(x, y):
    """Least-squares slope with RMS residual."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    coeffs = np.polyfit(x, y, 1)
    resid = y - np.polyval(coeffs, x)
    return float(coeffs[0]), float(np.sqrt(np.mean(resid ** 2)))


def estimate_h_top(counts: dict, tau: float, d: int = 1) -> EntropyEstimate:
    """Topological-entropy density from a table of cover counts.

    `counts[(eps, L, n)]` lists N over realizations.  Per (eps, L) the
    rate is the slope of the realization-averaged log N against n*tau;
    per eps the density is the slope of that rate against L^d.  The
    headline value is the density at the smallest eps.
    """
    eps_vals = sorted({k[0] for k in counts}, reverse=True)
    l_vals = sorted({k[1] for k in counts})
    n_vals = sorted({k[2] for k in counts})
    if len(n_vals) < 2 or len(l_vals) < 2:
        raise ValueError("need at least 2 values of n and of L")

    table = {}
    diagnostics = {"rate_residual": {}, "density_residual": {}, "degenerate": []}
    densities = {}
    for eps in eps_vals:
        rates = []
        for L in l_vals:
            log_n = [
                np.mean(np.log(np.asarray(counts[(eps, L, n)], dtype=float)))
                for n in n_vals
            ]
            rate, resid = _slope([n * tau for n in n_vals], log_n)
            if not np.isfinite(rate):
                diagnostics["degenerate"].append((eps, L))
                rate = 0.0
            rate = max(rate, 0.0)
            table[(eps, L)] = rate
            diagnostics["rate_residual"][(eps, L)] = resid
            rates.append(rate)
        dens, resid = _slope([L ** d for L in l_vals], rates)
        densities[eps] = max(dens, 0.0)
        diagnostics["density_residual"][eps] = resid

    return EntropyEstimate(
        table=table,
        h_top_hat=densities[eps_vals[-1]],
        diagnostics={**diagnostics, "density_by_eps": densities},
    )


def partition_entropy(probabilities) -> float:
    """Shannon entropy with the 0*log(0) = 0 convention (natural log)."""
    p = np.asarray(probabilities, dtype=float).ravel()
    if (p < 0).any():
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must sum to 1")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def conditional_entropy(joint) -> float:
    """H(U | V) = H(U, V) - H(V) for a joint table with V along axis 1."""
    joint = np.asarray(joint, dtype=float)
    return partition_entropy(joint) - partition_entropy(joint.sum(axis=0))


def label_states(states: np.ndarray, eps: float) -> PartitionLabeling:
    """Quantize window samples into eps-diameter cells and label them.

    `states` has shape (n_samples, n_times, n_shifts, n_points); real and
    imaginary parts are boxed independently with side eps/2, so cells
    have L-infinity diameter at most eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    box = eps / 2.0
    keys = np.concatenate(
        [np.floor(states.real / box), np.floor(states.imag / box)], axis=-1
    ).astype(np.int64)
    lookup = {}
    labels = np.empty(states.shape[:3], dtype=np.int64)
    for idx in np.ndindex(states.shape[:3]):
        key = keys[idx].tobytes()
        labels[idx] = lookup.setdefault(key, len(lookup))
    return PartitionLabeling(eps=eps, labels=labels)


def _block_entropy(labels: np.ndarray, n: int) -> tuple:
    """Empirical entropy of the joint label block up to depth n."""
    blocks = labels[:, :n, :].reshape(labels.shape[0], -1)
    _, counts = np.unique(blocks, axis=0, return_counts=True)
    p = counts / counts.sum()
    return partition_entropy(p), int((counts == 1).sum())


def estimate_h_mu(labels_by_l: dict, tau: float, d: int = 1) -> EntropyEstimate:
    """Measure-theoretic entropy density from symbolic label streams.

    `labels_by_l[L]` is an integer array (n_samples, n_max, n_shifts) of
    partition labels of the translated states on unit windows in Q_L.
    The rate per L is the slope of the block entropy against n*tau; the
    density is the slope of the rates against L^d (or rate/L^d when only
    one L is given).  Blocks observed once inflate the bias and are
    flagged.
    """
    table = {}
    diagnostics = {"rate_residual": {}, "singleton_blocks": {}}
    rates = []
    l_vals = sorted(labels_by_l)
    for L in l_vals:
        labels = np.asarray(labels_by_l[L])
        n_max = labels.shape[1]
        if n_max < 2:
            raise ValueError("need label blocks of depth at least 2")
        hs, singles = [], 0
        for n in range(1, n_max + 1):
            h, s = _block_entropy(labels, n)
            hs.append(h)
            singles = s
        rate, resid = _slope([n * tau for n in range(1, n_max + 1)], hs)
        rate = max(rate, 0.0)
        if singles:
            warnings.warn(
                f"h_mu at L={L}: {singles} blocks seen once, entropy biased low",
                RuntimeWarning,
            )
        table[L] = rate
        diagnostics["rate_residual"][L] = resid
        diagnostics["singleton_blocks"][L] = singles
        rates.append(rate)
    if len(l_vals) >= 2:
        h_mu, resid = _slope([L ** d for L in l_vals], rates)
        diagnostics["density_residual"] = resid
        h_mu = max(h_mu, 0.0)
    else:
        h_mu = rates[0] / l_vals[0] ** d
    return EntropyEstimate(table=table, h_mu_hat=h_mu, diagnostics=diagnostics)


def estimate_eps_entropy(counts: dict, d: int = 1) -> EntropyEstimate:
    """Kolmogorov eps-entropy density and upper dimension from cover counts.

    `counts[(eps, L)]` lists M over realizations.  Per eps the density
    H_eps is the slope of the realization-averaged log M against L^d;
    d_up is the slope of H_eps against log(1/eps) over the smallest
    decade of eps.
    """
    eps_vals = sorted({k[0] for k in counts}, reverse=True)
    l_vals = sorted({k[1] for k in counts})
    if len(l_vals) < 2:
        raise ValueError("need at least 2 window sizes")
    h_eps = {}
    diagnostics = {"h_eps_residual": {}}
    for eps in eps_vals:
        log_m = [
            np.mean(np.log(np.asarray(counts[(eps, L)], dtype=float)))
            for L in l_vals
        ]
        dens, resid = _slope([L ** d for L in l_vals], log_m)
        h_eps[eps] = max(dens, 0.0)
        diagnostics["h_eps_residual"][eps] = resid

    smallest = min(eps_vals)
    decade = [e for e in eps_vals if e <= 10.0 * smallest]
    if len(decade) >= 2:
        d_up, resid = _slope(
            [np.log(1.0 / e) for e in decade], [h_eps[e] for e in decade]
        )
        d_up = max(d_up, 0.0)
        diagnostics["d_up_residual"] = resid
    else:
        d_up = 0.0 if h_eps[smallest] == 0.0 else np.nan
    return EntropyEstimate(h_eps_hat=h_eps, d_up_hat=d_up, diagnostics=diagnostics)


def fit_divergence(
    series_list: list,
    eps: float,
    saturation: float = 0.5,
) -> DivergenceFit:
    """Fit log(sup-difference) = log(C*eps) + gamma*t over pair series.

    Points past the saturation level and exactly-zero differences are
    excluded; series with no usable points are dropped with a warning.
    """
    ts, logs = [], []
    dropped = 0
    for s in series_list:
        keep = (s.sup_diff > 0.0) & (s.sup_diff < saturation)
        if not keep.any():
            dropped += 1
            continue
        ts.append(s.times[keep])
        logs.append(np.log(s.sup_diff[keep]))
    if dropped:
        warnings.warn(
            f"fit_divergence: {dropped} degenerate or saturated series excluded",
            RuntimeWarning,
        )
    if not ts:
        raise ValueError("no usable divergence series")
    t = np.concatenate(ts)
    y = np.concatenate(logs)
    coeffs = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - np.polyval(coeffs, t)) ** 2)))
    return DivergenceFit(
        gamma_hat=max(float(coeffs[0]), 0.0),
        c_hat=float(np.exp(coeffs[1]) / eps),
        residual=resid,
    )
