"""Smoke test for the astra_lab extension.

Build and run:
    cargo build --release -p astra-py --features extension-module
    cp target/release/libastra_lab.so python/astra_lab.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import tempfile

import astra_lab as al


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    w = al.hyperharmonic_weights(0.75, 100)
    h_n, sq, r_n, _ = al.sequence_stats(0.75, 100)
    close(sum(w), h_n, 1e-12)
    close(sq, sum(x * x for x in w), 1e-12)

    nu = al.pareto_target(0.75, 50)
    close(sum(nu), 1.0, 1e-12)
    assert all(a >= b for a, b in zip(nu, nu[1:]))

    xs = al.dirichlet_sample([1.0, 2.0, 3.0], 10, 7)
    assert len(xs) == 10 and all(abs(sum(x) - 1.0) < 1e-12 for x in xs)
    assert xs == al.dirichlet_sample([1.0, 2.0, 3.0], 10, 7)

    c = al.calibrate(0.5, 1.4)
    gen = al.CosineGenerator(nu, c)
    assert gen.in_domain(nu)
    close(gen.value(nu), 0.0, 1e-15)
    pi = gen.portfolio(nu)
    close(sum(pi), 1.0, 1e-12)
    for a, b in zip(pi, nu):
        close(a, b, 1e-15)
    lam, bound = gen.kn_certificate(nu, 1e-4)
    assert lam <= bound + 1e-6, (lam, bound)

    times, points, qv = al.simulate(nu, 0.05, seed=3)
    assert len(times) == len(points) == len(qv)
    again = al.simulate(nu, 0.05, seed=3)
    assert again[1][-1] == points[-1]
    market, equal, cosine = al.value_path(points, nu, c, 1.4)
    assert max(abs(v) for v in market) < 1e-12

    report = json.loads(al.astra_sweep(json.dumps({"n_grid": [20], "paths_per_n": 4, "seed": 1})))
    assert report["schema_version"] == "astra-report/1"
    assert report["records"][0]["paths"] == 4

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "caps.csv")
        al.synth_caps(path, n=30, days=25, seed=2)
        csv, summary = al.run_backtest(path)
        assert csv.startswith("date,")
        assert json.loads(summary)["schema_version"] == "backtest-summary/1"

    print("astra_lab smoke test passed")


if __name__ == "__main__":
    main()
