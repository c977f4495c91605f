"""Smoke test for the fspde extension module.

Build and install it first, e.g. `maturin develop -m crates/py/Cargo.toml`
or `pip install --no-build-isolation ./crates/py`, then run this file.
"""

import math
import pathlib
import tempfile

import fspde

ROOT = pathlib.Path(__file__).resolve().parent.parent

SCALAR = """
[model]
kind = "degenerate"
r0 = 0.5
delta_reg = 0.5
delta_drift = 0.0
a1 = [[-1.0]]
a0 = [[0.0]]
b = [[1.0]]
sigma_inv = [1.0]

[model.spectrum]
eigenvalues = [1.0]
noise = [1.0]

[model.drift]
k1 = 0.0
k2 = 0.0
form = { kind = "joint_sup", direction = [1.0] }

[run]
t_end = 1.0
m = 10
paths = 200
seed = 5
"""


def main():
    # closed forms: with L = 0 the sup sits at s = lambda1
    rate, s, positive = fspde.rate_lambda(2.0, 0.0, 0.5)
    assert positive and abs(rate - 2.0) < 1e-12 and abs(s - 2.0) < 1e-12
    assert abs(fspde.normal_tail(0.0) - 0.5) < 1e-15
    assert fspde.one_dim_fernique_bound(1.0, 0.5, 1.0)[2]

    exp = fspde.Experiment.load(ROOT / "configs" / "checks_only.toml")
    checks = exp.check()
    assert all(c["passed"] for c in checks), checks
    assert exp.with_seed(exp.seed + 1).config_hash() != exp.config_hash()

    sim = exp.simulate()
    assert len(sim["times"]) == len(sim["supnorm"]) > 1
    assert all(math.isfinite(v) for v in sim["supnorm"])
    gap = exp.couple()["gap"]
    assert gap[-1] <= gap[0]

    deg = fspde.Experiment.from_toml(SCALAR)
    h = deg.harnack(t0=1.5)
    # paths meet up to the O(dt^2) interpolation residual of the X step
    assert h["holds"] and h["max_terminal_gap"] < 1e-3, h

    try:
        exp.harnack()
    except fspde.InputError:
        pass
    else:
        raise AssertionError("harnack on a nondegenerate model must raise")
    try:
        fspde.Experiment.from_toml(SCALAR.replace("seed = 5\n", ""))
    except fspde.InputError as e:
        assert "run.seed" in str(e)
    else:
        raise AssertionError("missing seed must raise")
    try:
        fspde.Experiment.from_toml(SCALAR.replace("b = [[1.0]]", "b = [[0.0]]")).harnack(t0=1.5)
    except fspde.NumericalError:
        pass
    else:
        raise AssertionError("B = 0 must be singular")

    with tempfile.TemporaryDirectory() as d:
        man = deg.run(["check", "simulate"], d)
        assert man["conditions_passed"]
        assert "simulate.csv" in man["files"]
        assert (pathlib.Path(d) / "manifest.toml").exists()

    print("fspde", fspde.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
