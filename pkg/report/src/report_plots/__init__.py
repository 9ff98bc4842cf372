"""Figure renderer for run directories produced by the sgl CLI.

Read-only consumer of the CSV/JSON artifacts: every number printed on a
figure is passed through verbatim from a CSV or JSON field, never
recomputed.  Figures use deterministic filenames and a fixed style so
rerenders diff cleanly at the SVG text level.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__version__ = "0.1.0"

FIGURES = (
    "trajectories",
    "divergence",
    "eps_entropy",
    "homogeneity",
    "kernel_decay",
)

# text stays text (not paths) so annotations are greppable, and the
# hash salt pins the glyph ids for reproducible SVG output
matplotlib.rcParams["svg.fonttype"] = "none"
matplotlib.rcParams["svg.hashsalt"] = "report_plots"


def fmt_value(x: float) -> str:
    """The fixed precision used for every printed number."""
    return f"{float(x):.12e}"


@dataclass(frozen=True)
class ReportSpec:
    input_dir: Path
    figures: tuple = FIGURES
    fmt: str = "svg"

    def __post_init__(self):
        object.__setattr__(self, "input_dir", Path(self.input_dir))
        if self.fmt not in ("svg", "png"):
            raise ValueError(f"unsupported format {self.fmt!r}")
        unknown = [f for f in self.figures if f not in FIGURES]
        if unknown:
            raise ValueError(f"unknown figures: {unknown}")


@dataclass
class RenderReport:
    rendered: dict = field(default_factory=dict)   # figure -> filename
    skipped: dict = field(default_factory=dict)    # figure -> reason
    index: Path | None = None


class MissingInput(Exception):
    """An input file or column a figure needs is not in the run directory."""


def _read_csv(run_dir: Path, name: str, columns) -> dict:
    path = run_dir / name
    if not path.exists():
        raise MissingInput(f"{name} not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise MissingInput(f"{name} lacks columns {missing}")
        rows = list(reader)
    if not rows:
        raise MissingInput(f"{name} has no data rows")
    return {c: [float(r[c]) for r in rows] for c in columns}


def _read_json(run_dir: Path, name: str, keys) -> dict:
    path = run_dir / name
    if not path.exists():
        raise MissingInput(f"{name} not found")
    payload = json.loads(path.read_text())
    missing = [k for k in keys if k not in payload]
    if missing:
        raise MissingInput(f"{name} lacks fields {missing}")
    return payload


def _annotate(ax, lines) -> None:
    ax.text(
        0.02, 0.98, "\n".join(lines), transform=ax.transAxes,
        va="top", ha="left", fontsize=8, family="monospace",
        bbox={"boxstyle": "round", "facecolor": "white", "alpha": 0.8},
    )


def _fig_trajectories(run_dir: Path, ax) -> None:
    data = _read_csv(run_dir, "trajectories.csv",
                     ("realization", "t", "l2loc_0"))
    by_member = {}
    for r, t, v in zip(data["realization"], data["t"], data["l2loc_0"]):
        by_member.setdefault(int(r), []).append((t, v))
    for member, pts in sorted(by_member.items()):
        ts, vs = zip(*pts)
        ax.plot(ts, vs, lw=0.6, alpha=0.5, color="tab:blue")
    # plateau band: range of the pooled values over the second half
    t_max = max(data["t"])
    late = [v for t, v in zip(data["t"], data["l2loc_0"]) if t >= t_max / 2.0]
    ax.axhspan(min(late), max(late), color="tab:orange", alpha=0.15,
               label="second-half range")
    lines = []
    try:
        stat = _read_json(run_dir, "stationarity.json", ("scores",))
        for name, score in sorted(stat["scores"].items()):
            lines.append(f"stationarity[{name}] = {fmt_value(score)}")
    except MissingInput:
        pass
    if lines:
        _annotate(ax, lines)
    ax.set_xlabel("t")
    ax.set_ylabel("local L2 norm")
    ax.set_title("norm trajectories")
    ax.legend(loc="lower right", fontsize=7)


def _fig_divergence(run_dir: Path, ax) -> None:
    data = _read_csv(run_dir, "divergence.csv", ("pair", "t", "sup_diff"))
    fit = _read_json(run_dir, "divergence_fit.json",
                     ("gamma_hat", "c_hat", "eps"))
    by_pair = {}
    for p, t, v in zip(data["pair"], data["t"], data["sup_diff"]):
        by_pair.setdefault(int(p), []).append((t, v))
    for pair, pts in sorted(by_pair.items()):
        ts, vs = zip(*pts)
        ax.plot(ts, vs, lw=0.6, alpha=0.5, color="tab:blue")
    ts = sorted(set(data["t"]))
    envelope = [
        fit["c_hat"] * fit["eps"] * math.exp(fit["gamma_hat"] * t) for t in ts
    ]
    ax.plot(ts, envelope, "k--", lw=1.2, label="C e^{gamma t} eps")
    ax.set_yscale("log")
    _annotate(ax, [
        f"gamma_hat = {fmt_value(fit['gamma_hat'])}",
        f"c_hat = {fmt_value(fit['c_hat'])}",
    ])
    ax.set_xlabel("t")
    ax.set_ylabel("windowed sup difference")
    ax.set_title("pair divergence")
    ax.legend(loc="lower right", fontsize=7)


def _fig_eps_entropy(run_dir: Path, ax) -> None:
    summary = _read_json(run_dir, "entropy_summary.json",
                         ("h_eps_hat", "d_up_hat"))
    pairs = sorted(
        (float(eps), float(h)) for eps, h in summary["h_eps_hat"].items()
    )
    xs = [math.log(1.0 / eps) for eps, _ in pairs]
    ys = [h for _, h in pairs]
    ax.plot(xs, ys, "o", color="tab:blue", label="H_eps")
    d_up = float(summary["d_up_hat"])
    # slope line anchored at the finest scale (largest log(1/eps))
    x0, y0 = xs[-1], ys[-1]
    ax.plot(xs, [y0 + d_up * (x - x0) for x in xs], "k--", lw=1.2,
            label="d_up slope")
    _annotate(ax, [f"d_up_hat = {fmt_value(d_up)}"])
    ax.set_xlabel("log(1/eps)")
    ax.set_ylabel("H_eps")
    ax.set_title("eps-entropy scaling")
    ax.legend(loc="lower right", fontsize=7)


def _fig_homogeneity(run_dir: Path, ax) -> None:
    data = _read_csv(run_dir, "homogeneity.csv", ("shift", "mean", "stderr"))
    score = _read_json(run_dir, "homogeneity.json", ("score",))
    ax.bar(
        range(len(data["shift"])), data["mean"], yerr=data["stderr"],
        color="tab:blue", alpha=0.7, capsize=4,
    )
    ax.set_xticks(range(len(data["shift"])))
    ax.set_xticklabels([f"{s:g}" for s in data["shift"]])
    _annotate(ax, [f"score = {fmt_value(score['score'])}"])
    ax.set_xlabel("shift")
    ax.set_ylabel("observable mean")
    ax.set_title("homogeneity across shifts")


def _fig_kernel_decay(run_dir: Path, ax) -> None:
    data = _read_csv(run_dir, "kernels.csv",
                     ("t", "x", "minus_re", "minus_im"))
    decay = _read_json(run_dir, "kernel_decay.json", ("minus",))
    c_1 = float(decay["minus"]["1"]["c_n"])
    by_t = {}
    for t, x, re, im in zip(data["t"], data["x"], data["minus_re"],
                            data["minus_im"]):
        by_t.setdefault(t, []).append((x, math.hypot(re, im)))
    for t, pts in sorted(by_t.items()):
        xs, vs = zip(*sorted(pts))
        ax.plot(xs, vs, lw=0.8, label=f"|K-| t={t:g}")
        env = [c_1 / math.sqrt(t) / (1.0 + x * x / t) for x in xs]
        ax.plot(xs, env, "--", lw=0.8, color="gray")
    ax.set_yscale("log")
    _annotate(ax, [f"c_1 = {fmt_value(c_1)}"])
    ax.set_xlabel("x")
    ax.set_ylabel("|kernel|")
    ax.set_title("low-band kernel decay")
    ax.legend(loc="lower center", fontsize=7)


_RENDERERS = {
    "trajectories": _fig_trajectories,
    "divergence": _fig_divergence,
    "eps_entropy": _fig_eps_entropy,
    "homogeneity": _fig_homogeneity,
    "kernel_decay": _fig_kernel_decay,
}


def _write_index(out_dir: Path, report: RenderReport) -> Path:
    lines = ["<html><head><title>sgl report</title></head><body>",
             "<h1>sgl report</h1>"]
    if report.rendered:
        lines.append("<h2>Figures</h2><ul>")
        for name in sorted(report.rendered):
            fn = report.rendered[name]
            lines.append(f'<li><a href="{fn}">{name}</a></li>')
        lines.append("</ul>")
    if report.skipped:
        lines.append("<h2>Skipped</h2><ul>")
        for name in sorted(report.skipped):
            lines.append(f"<li>{name}: {report.skipped[name]}</li>")
        lines.append("</ul>")
    lines.append("</body></html>")
    path = out_dir / "index.html"
    path.write_text("\n".join(lines) + "\n")
    return path


def render(spec: ReportSpec, out_dir) -> RenderReport:
    """Render the requested figures plus an index page."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RenderReport()
    for name in spec.figures:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            _RENDERERS[name](spec.input_dir, ax)
        except MissingInput as exc:
            report.skipped[name] = str(exc)
            plt.close(fig)
            continue
        filename = f"{name}.{spec.fmt}"
        fig.savefig(out_dir / filename, format=spec.fmt,
                    metadata={"Date": None} if spec.fmt == "svg" else None)
        plt.close(fig)
        report.rendered[name] = filename
    report.index = _write_index(out_dir, report)
    return report
