"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) or through pytest; the
PASS/FAIL lines are printed in both cases.
"""

import json
import tempfile
import time
from pathlib import Path

import numpy as np

from gmol_shape.cli import emit_outputs, run
from gmol_shape.config import config_from_dict, parse_config, serialize_config
from gmol_shape.geometry import AngularGrid, BoundaryData, ShapeCurve, metric_coefficients, uniform_lines
from gmol_shape.gmol import gmol_sweep
from gmol_shape.optimizer import InverseOptions, solve_inverse
from gmol_shape.residuals import cost, laplacian_residual, neumann_flux
from gmol_shape.validation import (
    annulus_flux_check,
    convergence_trend_check,
    cross_oracle_check,
    dense_order_check,
)


def report(label, passed, detail, capsys=None):
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return passed


# -- criteria ------------------------------------------------------------------------


def criterion_1():
    started = time.perf_counter()
    check, *_ = annulus_flux_check(N=40, M=64, limit=0.01)
    elapsed = time.perf_counter() - started
    ok = check["passed"] and elapsed <= 10.0
    return ok, f"max relative flux error {check['value']:.4g} (<= 0.01), {elapsed:.2f} s (<= 10 s)"


def criterion_2():
    check = convergence_trend_check(Ns=(10, 20, 40), M=64, limit=0.6)
    errs = check["errors"]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    ok = check["passed"] and monotone
    ratios = ", ".join(f"{r:.3f}" for r in check["ratios"])
    return ok, f"sup errors {', '.join(f'{e:.3e}' for e in errs)}; ratios {ratios} (<= 0.6)"


def criterion_3():
    cross = cross_oracle_check(N=40, M=64, refine=2, limit=0.03)
    orders = [dense_order_check(k, sizes=(64, 128), limit=3.0) for k in (0, 1, 2)]
    ok = cross["passed"] and all(c["passed"] for c in orders)
    ratios = ", ".join(f"k={k}: {c['value']:.3f}" for k, c in zip((0, 1, 2), orders))
    return ok, f"sweep vs dense sup diff {cross['value']:.3e} (<= 0.03); dense error ratios {ratios} (>= 3)"


def criterion_4():
    config = config_from_dict({"preset": "synthetic-recovery"})
    started = time.perf_counter()
    art = run(config)
    elapsed = time.perf_counter() - started
    s = art.summary
    ok = s["shape_rel_error"] <= 0.05 and s["J_reduction"] >= 100 and elapsed <= 300
    return ok, (
        f"shape error {s['shape_rel_error']:.4f} (<= 0.05), J reduced x{s['J_reduction']:.1f} (>= 100), "
        f"{s['iterations']} iterations, {elapsed:.0f} s (<= 300 s)"
    )


def criterion_5():
    art = run(config_from_dict({"preset": "paper-3.1"}))
    s = art.summary
    ok = s["neumann_inf"] <= 0.05 and s["lap_inf"] <= 0.05
    return ok, f"neumann_inf {s['neumann_inf']:.4g} (<= 0.05), lap_inf {s['lap_inf']:.4g} (<= 0.05)"


def _wavy(M=16, R=3.0):
    g = AngularGrid(M)
    x = g.x
    shape = ShapeCurve(g, 1 + 0.1 * np.sin(2 * np.pi * x) + 0.05 * np.cos(6 * np.pi * x), R)
    b = BoundaryData(g, 0.5 * np.cos(2 * np.pi * x) + 0.8, 0.5 * np.sin(2 * np.pi * x) + 1.0)
    return shape, b


def _identities():
    rng = np.random.default_rng(0)
    for _ in range(20):
        shape = ShapeCurve(AngularGrid(16), rng.uniform(0.2, 1.8, 16), 2.0)
        m = metric_coefficients(shape, uniform_lines(7))
        if np.any(m.f1 + m.f2 != 0) or not np.allclose(m.f6**2, 4 * m.f4, rtol=1e-14, atol=0):
            return False
    return True


def _pinning():
    shape, b = _wavy()
    f, _ = gmol_sweep(b, shape, 10)
    return bool(np.array_equal(f.u[0], b.u_o) and np.array_equal(f.u[-1], b.u_f))


def _constant_data():
    shape, _ = _wavy()
    b = BoundaryData(shape.grid, 0.7, 0.7)
    f, _ = gmol_sweep(b, shape, 10)
    c = cost(f, shape, np.zeros(16), 250.0)
    return bool(np.allclose(f.u, 0.7, atol=1e-9) and c.lap_inf <= 1e-7 and c.neumann_inf <= 1e-7)


def _equivariance():
    shape, b = _wavy()
    b = b.with_flux(0.3 * np.cos(2 * np.pi * shape.grid.x))
    s = 5
    f, _ = gmol_sweep(b, shape, 8)
    g, _ = gmol_sweep(b.shifted(s), shape.shifted(s), 8)
    ok = np.allclose(g.u, np.roll(f.u, s, axis=1), atol=1e-12)
    ok &= np.allclose(laplacian_residual(g, shape.shifted(s)), np.roll(laplacian_residual(f, shape), s, axis=1), atol=1e-9)
    ok &= np.allclose(neumann_flux(g, shape.shifted(s)), np.roll(neumann_flux(f, shape), s), atol=1e-10)
    for mode in ("joint", "alternating"):
        opts = InverseOptions(mode=mode, max_iters=5)
        base = solve_inverse(b, 3.0, 250.0, 8, shape, opts)
        moved = solve_inverse(b.shifted(s), 3.0, 250.0, 8, shape.shifted(s), opts)
        ok &= np.allclose(moved.shape.r, np.roll(base.shape.r, s), atol=1e-8)
    return bool(ok)


def _monotone_history():
    shape, b = _wavy()
    b = b.with_flux(0.3 * np.ones(16))
    start = ShapeCurve.circle(shape.grid, 1.0, 3.0)
    ok = True
    for mode in ("joint", "alternating"):
        res = solve_inverse(b, 3.0, 250.0, 8, start, InverseOptions(mode=mode, max_iters=40))
        ok &= bool(np.all(np.diff(res.history) <= 0))
    return ok


def _round_trip():
    docs = [
        {"preset": "paper-3.1"},
        {"preset": "synthetic-recovery", "N": 12},
        {"R": 2, "mode": "forward", "boundary": {"preset": "annulus-log"}, "plain_norms": True},
        {"R": 5, "M": 8, "boundary": {"u_o": [0, 1, 2, 3, 4, 5, 6, 7], "u_f": "cos(2*pi*x)"}, "shape0": 1.5},
    ]
    return all(parse_config(serialize_config(config_from_dict(d))) == config_from_dict(d) for d in docs)


def _determinism():
    doc = {"preset": "synthetic-recovery", "M": 16, "optimizer": {"mode": "alternating", "max_iters": 5}}
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            emit_outputs(run(config_from_dict(doc)), Path(tmp) / name)
            outs.append({p.name: p.read_bytes() for p in (Path(tmp) / name).iterdir()})
    return outs[0] == outs[1] and len(outs[0]) == 4


PROPERTIES = {
    "f1+f2=0 and f6^2=4f4": _identities,
    "Dirichlet pinning": _pinning,
    "constant data": _constant_data,
    "shift equivariance": _equivariance,
    "J-history monotone": _monotone_history,
    "config round-trip": _round_trip,
    "output determinism": _determinism,
}


def criterion_6():
    results = {name: fn() for name, fn in PROPERTIES.items()}
    failed = [n for n, ok in results.items() if not ok]
    detail = f"{len(results) - len(failed)}/{len(results)} properties hold"
    if failed:
        detail += f"; failing: {', '.join(failed)}"
    return not failed, detail


CRITERIA = [
    ("1 analytic flux oracle", criterion_1),
    ("2 sweep convergence trend", criterion_2),
    ("3 cross-oracle equivalence", criterion_3),
    ("4 inverse recovery", criterion_4),
    ("5 R=30 K=250 preset scenario", criterion_5),
    ("6 property suites", criterion_6),
]


# -- pytest entry points ---------------------------------------------------------------


def _run(index, capsys):
    label, fn = CRITERIA[index]
    ok, detail = fn()
    assert report(f"criterion {label}", ok, detail, capsys), detail


def test_criterion_1_analytic_flux(capsys):
    _run(0, capsys)


def test_criterion_2_convergence_trend(capsys):
    _run(1, capsys)


def test_criterion_3_cross_oracle(capsys):
    _run(2, capsys)


def test_criterion_4_inverse_recovery(capsys):
    _run(3, capsys)


def test_criterion_5_preset_scenario(capsys):
    _run(4, capsys)


def test_criterion_6_properties(capsys):
    _run(5, capsys)


if __name__ == "__main__":
    results = []
    for label, fn in CRITERIA:
        ok, detail = fn()
        results.append(report(f"criterion {label}", ok, detail))
    print(json.dumps({"passed": sum(results), "total": len(results)}))
