"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary section lists
every criterion with its measured numbers.
"""

import math
import subprocess
import time
from pathlib import Path

import numpy as np

from killpar.classify import (
    CONVERGENT, DIVERGENT, Base, SurfaceSpec, classify_end, classify_extrinsic, classify_intrinsic, tail_integral,
)
from killpar.expr import parse
from killpar.geom import Curve2D, tangent_norm
from killpar.models import (
    PenafielParams, ekt_model, penafiel_conformal_speed, sol3_cmc_profile, sol3_leaf_q, sol3_leaf_r,
    sol3_minimal_profile, sol3_model, umbrella_curve,
)
from killpar.profile import MuProfile
from killpar.verify import (
    annulus_harmonic_measure, basic_conformal_comparison, curvature_flatness_check, laplacian_residual,
    simulate_radial_diffusion,
)

from conftest import EXTRINSIC
from test_cli import ALL, GOLDEN

THETAS = (math.pi / 6, math.pi / 4, math.pi / 3)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_classification_suite(criterion):
    sol3 = sol3_model()
    cases = [
        ("Q_0", lambda: classify_extrinsic(sol3, sol3_leaf_q(0.0)), "hyperbolic"),
        ("Q_2", lambda: classify_extrinsic(sol3, sol3_leaf_q(2.0)), "hyperbolic"),
        ("R_0", lambda: classify_extrinsic(sol3, sol3_leaf_r(0.0)), "parabolic"),
        ("R_-1", lambda: classify_extrinsic(sol3, sol3_leaf_r(-1.0)), "parabolic"),
        ("cmc", lambda: classify_extrinsic(sol3, sol3_cmc_profile()), "parabolic"),
    ]
    for th in THETAS:
        for a in (0.0, 1.0):
            cases.append((f"S(th={th:.4f},a={a:g})",
                          lambda th=th, a=a: classify_extrinsic(sol3, sol3_minimal_profile(th, a)), "hyperbolic"))
    for tau in (1.0, 3.0):
        cases.append((f"umbrella tau={tau:g}", lambda tau=tau: classify_extrinsic(ekt_model(0.0, tau), umbrella_curve()),
                      "hyperbolic"))
    for tau in (0.0, 1.0):
        for curve in (umbrella_curve(), Curve2D("t", "t^2", (0, math.inf)), Curve2D("1", "t")):
            cases.append((f"E(1,{tau:g}) {curve.u},{curve.v}",
                          lambda tau=tau, curve=curve: classify_extrinsic(ekt_model(1.0, tau), curve), "parabolic"))
    for H, expected in ((0.0, "hyperbolic"), (0.5, "parabolic")):
        speed = penafiel_conformal_speed(PenafielParams(H, 0.0, 1.0)).function(["t"])
        cases.append((f"penafiel H={H:g}", lambda speed=speed: classify_end(speed), expected))

    bad, slowest = [], 0.0
    for name, run, expected in cases:
        rep, dt = _timed(run)
        slowest = max(slowest, dt)
        if rep.verdict != expected or dt >= 5.0:
            bad.append(f"{name}: {rep.verdict} in {dt:.2f}s")
    ok = criterion("classification suite", not bad,
                   f"{len(cases)} cases, slowest {slowest:.2f}s" + (f"; wrong: {bad}" if bad else ""))
    assert ok, bad


def test_divergence_calibration(criterion):
    allowed = {0.5: {DIVERGENT}, 0.8: {DIVERGENT}, 1.2: {CONVERGENT}, 1.5: {CONVERGENT}, 2.0: {CONVERGENT},
               0.95: {DIVERGENT, "inconclusive"}, 1.05: {CONVERGENT, "inconclusive"}}
    results, bad, slowest = {}, [], 0.0
    for p, ok_set in allowed.items():
        v, dt = _timed(lambda p=p: tail_integral(lambda s: s**-p, 1.0, 1))
        results[p] = v.verdict
        slowest = max(slowest, dt)
        if v.verdict not in ok_set or dt >= 2.0:
            bad.append(f"p={p}: {v.verdict} in {dt:.2f}s")
    v, dt = _timed(lambda: tail_integral(lambda s: 1 / (s * math.log(s)), 2.0, 1))
    slowest = max(slowest, dt)
    if v.verdict == CONVERGENT or dt >= 2.0:
        bad.append(f"1/(s log s): {v.verdict} in {dt:.2f}s")
    detail = ", ".join(f"p={p}:{r[:4]}" for p, r in results.items()) + f", s log s:{v.verdict[:4]}"
    ok = criterion("divergence-engine calibration", not bad, f"{detail}; slowest {slowest:.2f}s")
    assert ok, bad


def test_laplacian_identity(criterion):
    # residual at h = 1e-3, and the decay factor from h = 2e-3 to h = 1e-3
    cases = [("1", "x^2", 0.7), ("x", "log(x)", 2.0), ("exp(x)", "exp(-x)", 0.0)]
    bad, parts = [], []
    for mu, f, x in cases:
        m, fe = MuProfile.from_expression(mu, var="x"), parse(f, ["x"])
        r_coarse, r_fine = laplacian_residual(m, fe, x, 2e-3), laplacian_residual(m, fe, x, 1e-3)
        factor = r_coarse / r_fine if r_fine > 0 else math.inf
        parts.append(f"mu={mu}: r={r_fine:.2e} factor={factor:.3f}")
        if not r_fine <= 1e-6:
            bad.append(f"mu={mu} residual {r_fine:.3e}")
        if not 3.2 <= factor <= 4.8:
            bad.append(f"mu={mu} decay factor {factor:.3f}")
    ok = criterion("Laplacian of basic functions: residual and O(h^2) decay", not bad, "; ".join(parts))
    assert ok, bad


def test_flatness_after_normalization(criterion):
    worst = {}
    for mu in ("1", "exp(x)", "1+x^2"):
        worst[mu] = curvature_flatness_check(MuProfile.from_expression(mu, var="x"), (-5, 5)).max_abs_k
    ok = criterion("flatness after normalization", all(k <= 1e-8 for k in worst.values()),
                   ", ".join(f"mu={m}: {k:.1e}" for m, k in worst.items()))
    assert ok, worst


def test_diffusion_agreement(criterion):
    cases = [("1", 0.0, 1.0, 0.5), ("x", 1.0, math.e**2, math.e), ("exp(x)", 0.0, 1.0, 0.5)]
    n = 100_000
    t0 = time.perf_counter()
    first, bad, parts = [], [], []
    for mu, a, b, x0 in cases:
        m = MuProfile.from_expression(mu, var="x")
        exact = annulus_harmonic_measure(m, a, b, x0)
        res = simulate_radial_diffusion(m, x0, a, b, n=n, seed=42)
        first.append(res)
        tol = 3 * math.sqrt(exact * (1 - exact) / n)
        parts.append(f"mu={mu}: |{res.p:.5f}-{exact:.5f}|={abs(res.p - exact):.5f}<={tol:.5f}")
        if abs(res.p - exact) > tol:
            bad.append(parts[-1])
    total = time.perf_counter() - t0
    if total >= 60:
        bad.append(f"runtime {total:.1f}s")
    for (mu, a, b, x0), res in zip(cases, first):
        again = simulate_radial_diffusion(MuProfile.from_expression(mu, var="x"), x0, a, b, n=n, seed=42)
        if again != res:
            bad.append(f"mu={mu} rerun differs")
    ok = criterion("harmonic measure vs diffusion", not bad, "; ".join(parts) + f"; {total:.1f}s")
    assert ok, bad


def test_invariance_suite(criterion):
    bad = []
    for mu in ("1", "exp(s)", "1+s^2", "cosh(s)", "2+sin(s)", "exp(-s)"):
        prof = MuProfile.from_expression(mu)
        ref = classify_intrinsic(SurfaceSpec(Base("line"), prof, "noncompact"))
        for c in (1e-3, 1e3):
            rep = classify_intrinsic(SurfaceSpec(Base("line"), prof.scaled(c), "noncompact"))
            if (rep.verdict, rep.rule) != (ref.verdict, ref.rule):
                bad.append(f"scaling {mu} by {c:g}")
    polar = MuProfile.from_expression("abs(s)", zeros=(0.0,))
    for c in (1e-3, 1e3):
        if classify_intrinsic(SurfaceSpec(Base("line"), polar.scaled(c), "compact")).verdict != "parabolic":
            bad.append(f"scaling |s| by {c:g}")
    for label, model, curve, expected in EXTRINSIC:
        rep = classify_extrinsic(model, curve.reparameterize("x^3+x", curve.t_range))
        if rep.verdict != expected:
            bad.append(f"reparameterized {label}: {rep.verdict}")
    worst = 0.0
    for mu in ("1", "exp(s)", "1+s^2", "cosh(s)"):
        out = basic_conformal_comparison(MuProfile.from_expression(mu), "1+s^2")
        worst = max(worst, out["max_abs_difference"])
        for key, entry in out["tails"].items():
            if entry["direct"] != entry["rescaled"]:
                bad.append(f"conformal {mu} {key}: {entry}")
    if worst > 1e-6:
        bad.append(f"conformal tail difference {worst:.2e}")
    ok = criterion("invariance suite", not bad,
                   f"{len(EXTRINSIC)} reparameterized curves, conformal max diff {worst:.1e}")
    assert ok, bad


def test_sol3_unit_speed(criterion):
    g = sol3_model().metric
    dev = 0.0
    for th in THETAS:
        for a in (0.0, 1.0):
            c = sol3_minimal_profile(th, a)
            dev = max(dev, max(abs(tangent_norm(g, c, float(s)) - 1.0) for s in np.linspace(-10, 10, 2001)))
    ok = criterion("Sol3 profile unit speed", dev <= 1e-10, f"max deviation {dev:.1e}")
    assert ok


def test_golden_cli(criterion):
    # every golden case in a fresh process through the console script
    mismatched = []
    for stem, argv, code, ext in ALL:
        r = subprocess.run(["killpar", *argv], capture_output=True)
        if r.returncode != code or r.stdout != (GOLDEN / f"{stem}.{ext}").read_bytes():
            mismatched.append(stem)
    ok = criterion("golden CLI outputs", not mismatched,
                   f"{len(ALL) - len(mismatched)}/{len(ALL)} byte-identical" + (f"; {mismatched}" if mismatched else ""))
    assert ok, mismatched
