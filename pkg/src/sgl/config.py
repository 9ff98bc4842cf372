"""TOML run configuration: parsing, validation, and derived seeds.

A run is fully described by one TOML file; every command of the CLI
reads the same schema and uses the sections it needs.  Validation
happens eagerly at load time by constructing the actual domain objects,
so a config that loads is a config every module accepts.

Per-realization seeds derive from the base seed with a splitmix64-style
hash of (base_seed, index); the construction is fixed here so any other
implementation can reproduce the streams.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fields import Grid, Window
from .forcing import ForcingProfile, Mode
from .measures import Observable
from .model import ModelParams, ValidationError
from .solver import SolverConfig

_MASK = (1 << 64) - 1


def realization_seed(base_seed: int, index: int) -> int:
    """splitmix64 output for the (base_seed, index) pair."""
    x = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


@dataclass(frozen=True)
class PairSpec:
    eps: float = 1e-6
    n_pairs: int = 8
    window_side: float = 32.0
    shrink_c: float = 2.0
    burn_time: float = 0.0


@dataclass(frozen=True)
class MeasureSpec:
    shifts: tuple = (0.0, 10.0, 20.0)
    radius_grid: tuple = tuple(float(r) for r in range(0, 21))
    m: int = 1
    snapshot_times: tuple = ()
    observable: Observable = Observable(name="l2loc", kind="l2loc", delta=0.2)


@dataclass(frozen=True)
class EntropyScan:
    eps_list: tuple = (0.1, 0.05, 0.025)
    l_list: tuple = (8.0, 16.0, 32.0)
    n_list: tuple = (2, 4, 8)
    tau: float = 1.0
    n_samples: int = 16
    n_realizations: int = 2
    burn_time: float = 20.0
    sample_radius: float = 1.0


@dataclass(frozen=True)
class KernelScan:
    p_star: float = 5.0
    alpha: float = 0.0
    t_list: tuple = (0.5, 1.0, 2.0)
    x_max: float = 20.0
    x_points: int = 401
    orders: tuple = (1, 2)
    n_max_list: tuple = (512, 1024, 2048, 4096)
    test_wavenumber: float = 6.0


@dataclass
class RunConfig:
    model: ModelParams
    grid: Grid
    profile: ForcingProfile
    solver: SolverConfig
    ensemble: int
    base_seed: int
    drift_mode: str = "frozen"
    diffusion: float = 0.0
    burn_in: float = 0.25
    initial_amplitude: float = 0.0
    observables: list = field(default_factory=list)
    pair: PairSpec = field(default_factory=PairSpec)
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    entropy: EntropyScan = field(default_factory=EntropyScan)
    kernels: KernelScan = field(default_factory=KernelScan)
    source_bytes: bytes = b""

    def seeds(self) -> list:
        return [realization_seed(self.base_seed, i) for i in range(self.ensemble)]

    def config_hash(self) -> str:
        return hashlib.sha256(self.source_bytes).hexdigest()


def _observable_from_table(tab: dict) -> Observable:
    kwargs = dict(tab)
    if "window_side" in kwargs:
        side = kwargs.pop("window_side")
        center = tuple(kwargs.pop("window_center", (0.0,)))
        kwargs["window"] = Window(side=side, center=center)
    if "center" in kwargs:
        kwargs["center"] = tuple(kwargs["center"])
    return Observable(**kwargs)


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    with open(path, "rb") as fh:
        source = fh.read()
    try:
        raw = tomllib.loads(source.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"invalid TOML: {exc}") from exc

    try:
        model = ModelParams(**raw.get("model", {}))
        grid = Grid(**raw.get("grid", {"d": model.d, "box_length": 100.0,
                                       "points_per_dim": 512}))
        forcing = raw.get("forcing", {})
        waves = forcing.get("wave_vectors", [[1.0]])
        amps = forcing.get("amplitudes", [0.1] * len(waves))
        phases = forcing.get("base_phases", [0.0] * len(waves))
        if not (len(waves) == len(amps) == len(phases)):
            raise ValidationError("forcing lists must have equal lengths")
        profile = ForcingProfile(
            modes=tuple(
                Mode(wave_vector=tuple(w), amplitude=a, base_phase=p)
                for w, a, p in zip(waves, amps, phases)
            ),
            torus_dim=forcing.get("torus_dim", 0),
        )
        solver_tab = dict(raw.get("solver", {}))
        for key in ("stopping_radii", "checkpoint_times"):
            if key in solver_tab:
                solver_tab[key] = tuple(solver_tab[key])
        solver = SolverConfig(**solver_tab)
        run = raw.get("run", {})
        observables = [
            _observable_from_table(t) for t in raw.get("observables", [])
        ]
        measure_tab = dict(raw.get("measure", {}))
        if "observable" in measure_tab:
            measure_tab["observable"] = _observable_from_table(
                measure_tab["observable"]
            )
        for key in ("shifts", "radius_grid", "snapshot_times"):
            if key in measure_tab:
                measure_tab[key] = tuple(measure_tab[key])
        entropy_tab = dict(raw.get("entropy", {}))
        for key in ("eps_list", "l_list", "n_list"):
            if key in entropy_tab:
                entropy_tab[key] = tuple(entropy_tab[key])
        kernel_tab = dict(raw.get("kernels", {}))
        for key in ("t_list", "orders", "n_max_list"):
            if key in kernel_tab:
                kernel_tab[key] = tuple(kernel_tab[key])

        config = RunConfig(
            model=model,
            grid=grid,
            profile=profile,
            solver=solver,
            ensemble=int(run.get("ensemble", 8)),
            base_seed=int(run.get("base_seed", 0)),
            drift_mode=run.get("drift_mode", "frozen"),
            diffusion=float(run.get("diffusion", 0.0)),
            burn_in=float(run.get("burn_in", 0.25)),
            initial_amplitude=float(run.get("initial_amplitude", 0.0)),
            observables=observables,
            pair=PairSpec(**raw.get("pair", {})),
            measure=MeasureSpec(**measure_tab),
            entropy=EntropyScan(**entropy_tab),
            kernels=KernelScan(**kernel_tab),
            source_bytes=source,
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc

    if config.ensemble < 1:
        raise ValidationError("ensemble size must be at least 1")
    if config.drift_mode not in ("frozen", "torus_brownian"):
        raise ValidationError(f"unknown drift mode {config.drift_mode!r}")
    if config.model.d != config.grid.d:
        raise ValidationError("model dimension and grid dimension differ")
    for mode in config.profile.modes:
        if len(mode.wave_vector) != config.grid.d:
            raise ValidationError("forcing wave vectors must match the dimension")
    return config
