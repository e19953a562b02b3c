"""Smoke test for the gaplm_py extension.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/gaplm_py-*.whl
    python python/smoke_test.py
"""

import math
import pathlib
import random

import gaplm_py

ROOT = pathlib.Path(__file__).resolve().parents[1]
PIMA = ROOT / "data" / "pima.csv"


def check_gaussian_recovers_linear_part():
    rng = random.Random(3)
    n = 300
    x = [rng.random() for _ in range(n)]
    z = [rng.gauss(0, 1) for _ in range(n)]
    y = [math.sin(2 * math.pi * a) + 1.5 * b + 0.5 + rng.gauss(0, 0.1) for a, b in zip(x, z)]
    model = gaplm_py.Model(y, [x], [z], family="gaussian-identity", knots=[4], z_names=["slope"])
    fit = model.fit()
    assert fit.converged
    assert fit.names == ["slope"]
    assert abs(fit.beta[0] - 1.5) < 0.03, fit.beta
    value, extrapolated = fit.predict([0.25], [0.0], scale="linear")
    # centered component plus intercept: sin(pi / 2) + 0.5
    assert abs(value - 1.5) < 0.1, value
    assert not extrapolated
    print("gaussian fit:", fit)


def check_pima():
    model = gaplm_py.Model.from_csv(
        str(PIMA),
        "Diabetes",
        ["NumPreg", "DBP", "DPF", "PGC"],
        ["BMI", "AGE"],
        knots=[0, 0],
    )
    assert model.n == 724, model.n
    fit = model.fit()
    assert fit.converged
    for penalty in ("scad", "bic"):
        sel = model.select(penalty=penalty)
        assert sel.selected == ["DPF", "PGC"], (penalty, sel.selected)
        assert sel.se[0] is None
        print(penalty, sel, [round(b, 4) for b in sel.beta])
    lasso = model.select(penalty="lasso")
    assert len(lasso.selected) == 4
    assert len(lasso.path()) == 50


def check_simulation():
    data = gaplm_py.generate("s1", 50, seed=11)
    assert len(data["y"]) == 50 and len(data["z"]) == 8 and len(data["x"]) == 2
    assert data == gaplm_py.generate("s1", 50, seed=11)
    summary = gaplm_py.simulate("s1", 60, 2, seed=5, knots=[1, 1], methods=["oracle", "scad"],
                                lambdas=[0.01, 0.1, 1.0])
    oracle = next(m for m in summary["methods"] if m["method"] == "oracle")
    assert oracle["c"] == 5.0 and oracle["i"] == 0.0
    print("simulation methods:", [m["method"] for m in summary["methods"]])


def check_errors():
    try:
        gaplm_py.Model.from_csv(str(PIMA), "Diabetes", ["Nope"], [])
    except ValueError as e:
        assert "Nope" in str(e)
    else:
        raise AssertionError("unknown column accepted")


if __name__ == "__main__":
    check_gaussian_recovers_linear_part()
    check_pima()
    check_simulation()
    check_errors()
    print("ok")
