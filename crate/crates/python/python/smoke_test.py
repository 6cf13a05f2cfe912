"""Smoke test for the compiled extension.

Build and run from the workspace root:
    cargo build --release -p alpha-drs-python --features extension-module
    python3 crates/python/python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def load_module():
    for name in ("libalpha_drs_py.so", "libalpha_drs_py.dylib", "alpha_drs_py.dll"):
        path = ROOT / "target" / "release" / name
        if path.exists():
            spec = importlib.util.spec_from_file_location("alpha_drs_py", path)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("extension not built; run cargo build --release -p alpha-drs-python --features extension-module")


def main():
    m = load_module()

    target = m.Target.gaussian([0.0], [1.0])
    q = m.VariationalDist.gaussian([0.5], [math.log(2.0)])
    d, se = m.renyi_divergence(target, q, 2.0, samples=20000, seed=1)
    exact = math.log(2.0 / math.sqrt(3.0)) + 0.25 / 3.0
    assert abs(d - exact) < 4 * se + 1e-3, (d, se, exact)

    fitted = m.fit(target, q, 2.0, iterations=1500, samples=100, seed=0)
    assert abs(fitted.mu[0]) < 0.2 and abs(fitted.log_var[0]) < 0.3, fitted

    gmm = m.Target.four_modes()
    t10 = m.VariationalDist.student_t(10.0, [0.0], [math.log(25.0)])
    qt = m.fit(gmm, t10, 2.0, iterations=2000, seed=0)
    r = m.refine(gmm, qt, 2.0, n_accept=500, seed=0)
    assert len(r.samples) == 500 and 0.0 < r.acceptance_rate <= 1.0
    assert r.d_pr is not None
    d_pq, _ = m.renyi_divergence(gmm, qt, 2.0, seed=0)
    assert r.d_pr[0] < d_pq, (r.d_pr, d_pq)
    assert 0.0 < gmm.cdf(0.0) < 1.0

    cases = m.divergence_check(seed=0, samples=5000)
    assert cases and all(passed for _, passed, _ in cases), cases

    with tempfile.TemporaryDirectory() as out:
        a = m.gmm_demo(out, alpha=[2.0], iters=300, samples=500, accept=200)
        b = m.gmm_demo(out, alpha=[2.0], iters=300, samples=500, accept=200)
        assert a == b and a.count("\n") == 2

    try:
        m.VariationalDist.gaussian([0.0], [0.0, 1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("mismatched lengths must raise ValueError")

    print("python smoke test: OK")


if __name__ == "__main__":
    main()
