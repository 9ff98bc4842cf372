"""Command-line orchestration: runs, ensembles, persistence, manifests.

Every command reads one TOML config, writes CSV data plus JSON
summaries into the output directory, and finishes with a manifest
listing every produced file with the config hash and timings.  All
files are written atomically (temp file, then rename).  Numbers in CSV
and JSON are formatted with a fixed precision so a rerun with the same
config and seed is byte-identical at any thread count: realizations
are computed independently (one stream per realization seed) and
reduced in index order.

Exit codes: 0 success, 1 validation, 2 runtime (blow-up), 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .entropy import (
    cover_count,
    estimate_eps_entropy,
    estimate_h_mu,
    estimate_h_top,
    evolve_snapshot_states,
    fit_divergence,
    label_states,
    partition_entropy,
)
from .fields import Field, Grid, Window, save_checkpoint
from .forcing import sample_realization
from .kernels import (
    CartwrightGrid,
    KernelConfig,
    cartwright_interpolate,
    kernel_minus,
    kernel_plus,
    verify_kernel_decay,
)
from .measures import (
    Observable,
    cesaro_mean,
    homogeneity_test,
    stationarity_test,
    tightness,
)
from .model import (
    ValidationError,
    check_hypothesis,
    feasible_epsilon_max,
    margin,
)
from .solver import BlowUpError, SolverConfig, evolve, evolve_batch, pair_evolve

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


def _fmt(x) -> str:
    """Fixed float formatting so reruns are byte-identical."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.12e}"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _round_floats(obj):
    """Round floats to the fixed CSV precision before JSON dumping."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(_fmt(float(obj)))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return obj


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_round_floats(payload), indent=2, sort_keys=True,
                      default=_json_default)
    _write_atomic(path, text + "\n")


@dataclass
class Manifest:
    config_hash: str
    code_version: str
    seeds: list
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add(self, path: Path, out_dir: Path) -> None:
        self.artifacts.append(str(path.relative_to(out_dir)))

    def write(self, out_dir: Path) -> None:
        _write_json(
            out_dir / "manifest.json",
            {
                "config_hash": self.config_hash,
                "code_version": self.code_version,
                "seeds": self.seeds,
                "artifacts": sorted(self.artifacts),
                "timings": self.timings,
            },
        )


def _manifest(config: RunConfig) -> Manifest:
    return Manifest(
        config_hash=config.config_hash(),
        code_version=__version__,
        seeds=config.seeds(),
    )


def _map_indexed(fn, items, threads: int) -> list:
    """Apply fn over items, in parallel, preserving index order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _band_limited(grid: Grid, rng: np.random.Generator, max_mode: int = 10) -> Field:
    """Random band-limited field normalized to unit sup-norm."""
    n = grid.points_per_dim
    spec = np.zeros(grid.shape, dtype=complex)
    idx = np.r_[0: max_mode + 1, n - max_mode: n]
    if grid.d == 1:
        spec[idx] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
    else:
        sub = rng.normal(size=(idx.size, idx.size)) + 1j * rng.normal(
            size=(idx.size, idx.size)
        )
        spec[np.ix_(idx, idx)] = sub
    vals = np.fft.ifftn(spec)
    return Field(grid, vals / np.abs(vals).max())


def _zero_field(grid: Grid, amplitude: float = 0.0) -> Field:
    return Field(grid, np.full(grid.shape, amplitude, dtype=complex))


def cmd_check(config: RunConfig, out_dir: Path) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    report = check_hypothesis(config.model)
    eps_max = feasible_epsilon_max(config.model)
    summary = {
        "condition1_lhs": report.condition1_lhs,
        "condition1_rhs": report.condition1_rhs,
        "condition2_ok": report.condition2_ok,
        "theta": report.theta,
        "satisfied": report.satisfied,
        "boundary": report.boundary,
        "feasible_epsilon_max": eps_max,
    }
    if eps_max > 0:
        best = margin(config.model, eps_max / 2.0)
        summary["margin_at_half_eps_max"] = {
            "lam": best.lam,
            "epsilon": best.epsilon,
            "margin_value": best.margin_value,
        }
    path = out_dir / "check.json"
    _write_json(path, summary)
    manifest.add(path, out_dir)
    manifest.timings["check"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK if report.satisfied else EXIT_VALIDATION


def _run_member(config: RunConfig, index: int, solver: SolverConfig):
    seed = config.seeds()[index]
    realization = sample_realization(
        config.profile,
        seed=seed,
        dt=solver.dt,
        drift_mode=config.drift_mode,
        diffusion=config.diffusion,
    )
    u0 = _zero_field(config.grid, config.initial_amplitude)
    return evolve(u0, realization, config.model, solver)


def cmd_simulate(config: RunConfig, out_dir: Path, threads: int) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    solver = config.solver
    records = _map_indexed(
        lambda i: _run_member(config, i, solver), range(config.ensemble), threads
    )
    header = ["realization", "t", "sup_norm", "l2loc_0"] + [
        f"hm_ul_{m}" for m in range(solver.max_record_m + 1)
    ]
    rows = []
    for i, rec in enumerate(records):
        for k, t in enumerate(rec.times):
            row = [i, t, rec.sup_norm[k], rec.l2loc_0[k]]
            row += [rec.hm_ul[m][k] for m in range(solver.max_record_m + 1)]
            rows.append(row)
    path = out_dir / "trajectories.csv"
    _write_csv(path, header, rows)
    manifest.add(path, out_dir)
    for i, rec in enumerate(records):
        for t, f in sorted(rec.checkpoints.items()):
            cp = out_dir / f"checkpoint_r{i}_t{_fmt(t)}.sgl"
            tmp = cp.with_name(cp.name + ".tmp")
            save_checkpoint(f, tmp)
            os.replace(tmp, cp)
            manifest.add(cp, out_dir)
    stopping_rows = []
    for i, rec in enumerate(records):
        for ev in rec.stopping:
            stopping_rows.append(
                [i, ev.radius, ev.time if ev.time is not None else "never"]
            )
    if stopping_rows:
        path = out_dir / "stopping.csv"
        _write_csv(path, ["realization", "radius", "time"], stopping_rows)
        manifest.add(path, out_dir)
    manifest.timings["simulate"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK


def _run_pair(config: RunConfig, index: int):
    spec = config.pair
    seed = config.seeds()[index % config.ensemble]
    solver = config.solver
    realization = sample_realization(
        config.profile,
        seed=seed,
        dt=solver.dt,
        drift_mode=config.drift_mode,
        diffusion=config.diffusion,
    )
    u0 = _zero_field(config.grid, config.initial_amplitude)
    if spec.burn_time > 0:
        burn_cfg = replace(solver, t_end=spec.burn_time,
                           checkpoint_times=(spec.burn_time,))
        u0 = evolve(u0, realization, config.model, burn_cfg).checkpoints[
            spec.burn_time
        ]
        realization = realization.shifted(spec.burn_time)
    rng = np.random.default_rng(seed ^ 0xD1F)
    pert = _band_limited(config.grid, rng)
    v0 = Field(config.grid, u0.values + spec.eps * pert.values)
    window = Window(side=spec.window_side)
    _, _, series = pair_evolve(
        u0, v0, realization, config.model, solver,
        window=window, eps=spec.eps, shrink_c=spec.shrink_c,
    )
    return series


def cmd_pair(config: RunConfig, out_dir: Path, threads: int) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    spec = config.pair
    series_list = _map_indexed(
        lambda j: _run_pair(config, j), range(spec.n_pairs), threads
    )
    rows = []
    for j, s in enumerate(series_list):
        for k in range(s.times.size):
            rows.append([j, s.times[k], s.sup_diff[k], s.window_side[k]])
    path = out_dir / "divergence.csv"
    _write_csv(path, ["pair", "t", "sup_diff", "window_side"], rows)
    manifest.add(path, out_dir)
    fit = fit_divergence(series_list, spec.eps)
    path = out_dir / "divergence_fit.json"
    _write_json(
        path,
        {
            "gamma_hat": fit.gamma_hat,
            "c_hat": fit.c_hat,
            "residual": fit.residual,
            "eps": spec.eps,
            "n_pairs": spec.n_pairs,
        },
    )
    manifest.add(path, out_dir)
    manifest.timings["pair"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK


def _default_observables(config: RunConfig) -> list:
    if config.observables:
        return config.observables
    delta = config.solver.delta
    return [
        Observable(name="sup_q8", kind="sup_norm_window", window=Window(side=8.0)),
        Observable(name="l2loc", kind="l2loc", delta=delta),
        Observable(name="h1_ul", kind="hm_ul", delta=delta, m=1),
    ]


def cmd_measure(config: RunConfig, out_dir: Path, threads: int) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    spec = config.measure
    snapshot_times = spec.snapshot_times
    if not snapshot_times:
        t_end = config.solver.t_end
        snapshot_times = tuple(
            round(t_end / 2.0 + i * t_end / 16.0, 9) for i in range(8)
        )
    solver = replace(
        config.solver,
        checkpoint_times=tuple(
            sorted(set(config.solver.checkpoint_times) | set(snapshot_times))
        ),
    )
    half_box = config.grid.box_length / 2.0
    for shift in spec.shifts:
        center = spec.observable.shifted(float(shift))
        probe = center.window.center[0] if center.window else center.center[0]
        if abs(probe) > half_box - 5.0:
            raise ValidationError(
                f"shift {shift} puts the observable too close to the boundary"
            )
    records = _map_indexed(
        lambda i: _run_member(config, i, solver), range(config.ensemble), threads
    )

    observables = _default_observables(config)
    rows = []
    scores = {}
    for ob in observables:
        series = cesaro_mean(records, ob, burn_in=config.burn_in)
        for k in range(series.times.size):
            rows.append(
                [ob.name, series.times[k], series.running_mean[k],
                 series.standard_error[k]]
            )
        scores[ob.name] = stationarity_test(records, ob, burn_in=config.burn_in)
    path = out_dir / "cesaro.csv"
    _write_csv(path, ["observable", "t", "running_mean", "stderr"], rows)
    manifest.add(path, out_dir)
    path = out_dir / "stationarity.json"
    _write_json(path, {"scores": scores, "threshold": 3.0})
    manifest.add(path, out_dir)

    snapshots = [
        [rec.checkpoints[t] for t in snapshot_times] for rec in records
    ]
    shift_rows = []
    for shift in spec.shifts:
        ob = spec.observable.shifted(float(shift))
        means = [np.mean([ob.evaluate(f) for f in real]) for real in snapshots]
        mu = float(np.mean(means))
        se = (
            float(np.std(means, ddof=1) / np.sqrt(len(means)))
            if len(means) > 1
            else 0.0
        )
        shift_rows.append([shift, mu, se])
    score = homogeneity_test(snapshots, spec.observable, spec.shifts)
    path = out_dir / "homogeneity.csv"
    _write_csv(path, ["shift", "mean", "stderr"], shift_rows)
    manifest.add(path, out_dir)
    path = out_dir / "homogeneity.json"
    _write_json(path, {"score": score, "shifts": list(spec.shifts),
                       "threshold": 3.0})
    manifest.add(path, out_dir)

    report = tightness(records, spec.m, spec.radius_grid, burn_in=config.burn_in)
    path = out_dir / "tightness.csv"
    _write_csv(
        path,
        ["radius", "occupancy"],
        [[r, o] for r, o in zip(report.radius_grid, report.occupancy)],
    )
    manifest.add(path, out_dir)
    manifest.timings["measure"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK


def _entropy_realization(config: RunConfig, r_index: int):
    """Counts and labels for one realization of the entropy scan."""
    scan = config.entropy
    solver = config.solver
    grid = config.grid
    n_max = max(scan.n_list)
    l_max = max(scan.l_list)
    seed = config.seeds()[r_index % config.ensemble]
    realization = sample_realization(
        config.profile, seed=seed, dt=solver.dt,
        drift_mode=config.drift_mode, diffusion=config.diffusion,
    )
    rng = np.random.default_rng(seed ^ 0xA77)
    samples = [
        Field(grid, scan.sample_radius * _band_limited(grid, rng).values)
        for _ in range(scan.n_samples)
    ]
    # pullback surrogate: evolve the ball ensemble to the sampling time
    burn_cfg = replace(solver, t_end=scan.burn_time,
                       checkpoint_times=(scan.burn_time,))
    burn_recs = evolve_batch(samples, [realization] * len(samples),
                             config.model, burn_cfg)
    snapshot = [rec.checkpoints[scan.burn_time] for rec in burn_recs]
    shifted = realization.shifted(scan.burn_time)

    capture = Window(side=l_max)
    states = evolve_snapshot_states(
        snapshot, shifted, config.model, solver, n_max, scan.tau, [capture]
    )[:, :, 0, :]                      # (samples, n_max, points)
    coords = grid.axis()[capture.mask(grid)]

    abs_diff = np.abs(states[:, None, :, :] - states[None, :, :, :])

    counts_n = {}
    counts_m = {}
    h_blocks = {}
    for L in scan.l_list:
        mask_l = np.abs(coords) <= L / 2.0 + 1e-12
        sub = abs_diff[:, :, :, mask_l]
        for n in scan.n_list:
            dist = sub[:, :, :n, :].max(axis=(2, 3))
            for eps in scan.eps_list:
                counts_n[(eps, L, n)] = cover_count(dist, dist, eps).count
        dist0 = sub[:, :, 0, :].max(axis=2)
        for eps in scan.eps_list:
            counts_m[(eps, L)] = cover_count(dist0, dist0, eps).count
        # unit windows at integer centres for the symbolic coding
        centers = [
            x for x in range(-int(L // 2), int(L // 2) + 1)
            if abs(x) + 0.5 <= L / 2.0 + 1e-12
        ]
        sizes = []
        unit_masks = []
        for x in centers:
            m = np.abs(coords - x) <= 0.5 + 1e-12
            unit_masks.append(m)
            sizes.append(int(m.sum()))
        width = min(sizes)
        unit_states = np.stack(
            [states[:, :, np.nonzero(m)[0][:width]] for m in unit_masks], axis=2
        )                              # (samples, n_max, shifts, width)
        for eps in scan.eps_list:
            labels = label_states(unit_states, eps).labels
            h_blocks[(eps, L)] = labels
    return counts_n, counts_m, h_blocks


def cmd_entropy(config: RunConfig, out_dir: Path, threads: int) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    scan = config.entropy
    results = _map_indexed(
        lambda r: _entropy_realization(config, r),
        range(scan.n_realizations),
        threads,
    )

    counts_n = {}
    counts_m = {}
    for r, (cn, cm, _) in enumerate(results):
        for key, val in cn.items():
            counts_n.setdefault(key, []).append(val)
        for key, val in cm.items():
            counts_m.setdefault(key, []).append(val)

    rows = []
    for (eps, L, n), vals in sorted(counts_n.items()):
        for r, v in enumerate(vals):
            rows.append(
                [eps, L, n, scan.tau, r, np.log(float(v)),
                 np.log(float(counts_m[(eps, L)][r])),
                 _block_entropy_of(results[r][2][(eps, L)], n)]
            )
    path = out_dir / "entropy.csv"
    _write_csv(
        path,
        ["eps", "L", "n", "tau", "realization", "logN", "logM", "h_block"],
        rows,
    )
    manifest.add(path, out_dir)

    top = estimate_h_top(counts_n, scan.tau, d=config.grid.d)
    eps_est = estimate_eps_entropy(counts_m, d=config.grid.d)
    smallest = min(scan.eps_list)
    labels_by_l = {
        L: np.concatenate(
            [res[2][(smallest, L)] for res in results], axis=0
        )
        for L in scan.l_list
    }
    mu = estimate_h_mu(labels_by_l, scan.tau, d=config.grid.d)

    pair_series = _map_indexed(
        lambda j: _run_pair(config, j), range(min(config.pair.n_pairs, 4)), threads
    )
    gamma = fit_divergence(pair_series, config.pair.eps)

    summary = {
        "h_top_hat": top.h_top_hat,
        "h_mu_hat": mu.h_mu_hat,
        "d_up_hat": eps_est.d_up_hat,
        "gamma_hat": gamma.gamma_hat,
        "h_eps_hat": {str(k): v for k, v in eps_est.h_eps_hat.items()},
        "fit_errors": {
            "h_top_density_residual": {
                str(k): v
                for k, v in top.diagnostics["density_residual"].items()
            },
            "h_mu_rate_residual": {
                str(k): v for k, v in mu.diagnostics["rate_residual"].items()
            },
            "d_up_residual": eps_est.diagnostics.get("d_up_residual", 0.0),
            "gamma_residual": gamma.residual,
        },
        "tau": scan.tau,
        "eps_list": list(scan.eps_list),
        "l_list": list(scan.l_list),
        "n_list": list(scan.n_list),
    }
    path = out_dir / "entropy_summary.json"
    _write_json(path, summary)
    manifest.add(path, out_dir)
    manifest.timings["entropy"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK


def _block_entropy_of(labels: np.ndarray, n: int) -> float:
    blocks = labels[:, :n, :].reshape(labels.shape[0], -1)
    _, counts = np.unique(blocks, axis=0, return_counts=True)
    return partition_entropy(counts / counts.sum())


def cmd_kernels(config: RunConfig, out_dir: Path) -> int:
    manifest = _manifest(config)
    t0 = time.perf_counter()
    scan = config.kernels
    kc = KernelConfig(p_star=scan.p_star, alpha=scan.alpha)
    x = np.linspace(-scan.x_max, scan.x_max, scan.x_points)
    rows = []
    for t in scan.t_list:
        km = kernel_minus(float(t), x, kc)
        kp = kernel_plus(float(t), x, kc)
        for k in range(x.size):
            rows.append(
                [t, x[k], km[k].real, km[k].imag, kp[k].real, kp[k].imag]
            )
    path = out_dir / "kernels.csv"
    _write_csv(
        path,
        ["t", "x", "minus_re", "minus_im", "plus_re", "plus_im"],
        rows,
    )
    manifest.add(path, out_dir)

    fits = {}
    for n in scan.orders:
        fit = verify_kernel_decay(kc, int(n), scan.t_list)
        fits[str(n)] = {"c_n": fit.c_n, "max_violation": fit.max_violation}
    plus_fit = verify_kernel_decay(kc, 1, scan.t_list, kernel="plus")
    path = out_dir / "kernel_decay.json"
    _write_json(
        path,
        {
            "minus": fits,
            "plus": {"c_n": plus_fit.c_n, "max_violation": plus_fit.max_violation},
            "p_star": scan.p_star,
        },
    )
    manifest.add(path, out_dir)

    errors = {}
    k_test = scan.test_wavenumber
    for n_max in scan.n_max_list:
        cg = CartwrightGrid(p_star=scan.p_star, n_max=int(n_max))
        samples = np.cos(k_test * cg.nodes)
        xs = np.linspace(
            -0.9 * cg.safe_half_width, 0.9 * cg.safe_half_width, 400
        )
        got = cartwright_interpolate(samples, cg, xs)
        errors[str(int(n_max))] = float(np.abs(got - np.cos(k_test * xs)).max())
    path = out_dir / "cartwright.json"
    _write_json(
        path,
        {"max_error_by_n_max": errors, "test_wavenumber": k_test,
         "p_star": scan.p_star},
    )
    manifest.add(path, out_dir)
    manifest.timings["kernels"] = round(time.perf_counter() - t0, 3)
    manifest.write(out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgl",
        description="Stochastic Ginzburg-Landau simulation laboratory",
    )
    parser.add_argument(
        "command",
        choices=["check", "simulate", "pair", "measure", "entropy", "kernels"],
    )
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the base seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: SGL_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SGL_THREADS", "1"))
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.base_seed = args.seed
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "check":
            return cmd_check(config, out_dir)
        if args.command == "simulate":
            return cmd_simulate(config, out_dir, threads)
        if args.command == "pair":
            return cmd_pair(config, out_dir, threads)
        if args.command == "measure":
            return cmd_measure(config, out_dir, threads)
        if args.command == "entropy":
            return cmd_entropy(config, out_dir, threads)
        return cmd_kernels(config, out_dir)
    except (ValidationError, ValueError) as exc:
        _report_error(args.out, "validation", exc)
        return EXIT_VALIDATION
    except BlowUpError as exc:
        _report_error(args.out, "runtime", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_IO


def _report_error(out, kind, exc) -> None:
    payload = {"error": kind, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    try:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "error.json", payload)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
