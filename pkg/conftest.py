"""Shared fixtures for the acceptance suites.

The desk-scale run directory is produced once per session by driving the
CLI end to end; the entropy-ordering acceptance test reads its summary
and the report acceptance test renders figures from the same artifacts.
"""

import warnings

import pytest

from sgl.cli import main

ACCEPTANCE_CONFIG = """
[model]
alpha = 0.5
beta = 0.5
q = 1
d = 1

[grid]
d = 1
box_length = 100.0
points_per_dim = 512

[forcing]
wave_vectors = [[0.3141592653589793], [0.5654866776461628], [1.0053096491487339]]
amplitudes = [0.1, 0.08, 0.05]

[solver]
dt = 1e-3
t_end = 30.0
record_stride = 200
delta = 0.2
max_record_m = 1

[run]
ensemble = 8
base_seed = 2026

[pair]
eps = 1e-6
n_pairs = 4
window_side = 32.0
burn_time = 10.0

[measure]
shifts = [0.0, 10.0, 20.0]
m = 1

[entropy]
eps_list = [0.1, 0.05, 0.025]
l_list = [8.0, 16.0, 32.0]
n_list = [2, 4, 8]
tau = 1.0
n_samples = 16
n_realizations = 2
burn_time = 20.0
sample_radius = 1.0

[kernels]
p_star = 5.0
t_list = [0.5, 1.0, 2.0]
n_max_list = [512, 1024, 2048, 4096]
"""


@pytest.fixture(scope="session")
def acceptance_run_dir(tmp_path_factory):
    """Desk-scale run directory with artifacts from every CLI command.

    Entropy runs last so the final manifest carries its timing.
    """
    root = tmp_path_factory.mktemp("acceptance_run")
    cfg = root / "run.toml"
    cfg.write_text(ACCEPTANCE_CONFIG)
    out = root / "out"
    with warnings.catch_warnings():
        # desk-scale symbol streams are short; singleton-block bias
        # warnings are expected and carried through the fit errors
        warnings.simplefilter("ignore", RuntimeWarning)
        for command in ("simulate", "pair", "measure", "kernels", "entropy"):
            rc = main([command, "--config", str(cfg), "--out", str(out),
                       "--threads", "4"])
            assert rc == 0, f"{command} failed on the shared acceptance run"
    return out
