"""Acceptance criteria, one test each.

Every test appends a single PASS/FAIL line with the measured quantities;
the lines are echoed in the terminal summary.
"""

from __future__ import annotations

import math
import time

import numpy as np

from raindrop.cli import main
from raindrop.flow import (
    circle_state,
    ellipse_state,
    line_state,
    run_flow,
    run_translation_test,
    stable_dt,
)
from raindrop.lemmas import (
    TAIL_THRESHOLD,
    check_amplitude_decay,
    check_nonproper_criterion,
    check_order_preservation,
    check_trifecta,
    delta,
    extrema_sequence,
    noise_envelope,
    random_order_pairs,
    random_trifecta_states,
)
from raindrop.ode import find_events, value_cross
from raindrop.profile import build_profile, properness_witness, translator_residual
from raindrop.shooting import refine_interval

from conftest import ACCEPTANCE_LINES


def record(n: int, ok: bool, text: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_1_shooting():
    t0 = time.perf_counter()
    rep = refine_interval()
    elapsed = time.perf_counter() - t0
    S = rep.bounded_horizon
    traj = rep.trajectory
    grid = np.arange(traj.settings.scan_step, S + 1e-12, traj.settings.scan_step)
    u = traj.evaluate(grid)[0]
    touches = find_events(traj, [value_cross(0.0), value_cross(math.pi)])
    inside = bool(np.all((u > 0) & (u < math.pi))) and not touches and S >= 25.0
    hist = rep.bracket.history
    nested = all(a.contains(b) for a, b in zip(hist, hist[1:]))
    ok = rep.bracket_width <= 1e-13 and inside and nested and elapsed < 10
    record(1, ok, f"a*={rep.a_star!r} width={rep.bracket_width:.2e} (<=1e-13) "
                  f"certified (0,{S:g}]={inside} nested={nested} time={elapsed:.2f}s (<10s)")
    assert ok


def test_2_convergence(report):
    t0 = time.perf_counter()
    ext = extrema_sequence(report.trajectory)
    rep = check_amplitude_decay(ext, noise_envelope(report))
    kept = rep.witnesses["extrema"]
    amps = np.abs([e[1] for e in kept])
    decreasing = bool(np.all(np.diff(amps) < 0))
    bounce = all(m < delta(k) * k for k, m in zip(amps, amps[1:]) if k <= math.pi)
    tail = abs(float(report.trajectory.evaluate(report.bounded_horizon)[0]) - math.pi / 2)
    elapsed = time.perf_counter() - t0
    cut = rep.witnesses["truncation"]
    ok = rep.passed and decreasing and bounce and tail < TAIL_THRESHOLD and elapsed < 5 \
        and len(kept) >= 3
    record(2, ok, f"{len(kept)} extrema strictly decaying={decreasing} bounce={bounce} "
                  f"(noise cut at s={cut['s'] if cut else None}) tail={tail:.2e} "
                  f"(<{TAIL_THRESHOLD:g}) time={elapsed:.2f}s (<5s)")
    assert ok


def test_3_translator_residual(profile):
    t0 = time.perf_counter()
    r1 = translator_residual(build_profile(profile, 1e-3))
    r2 = translator_residual(build_profile(profile, 5e-4))
    elapsed = time.perf_counter() - t0
    ratio = r1 / r2
    ok = r1 < 1e-4 and ratio >= 4.0 and elapsed < 5
    record(3, ok, f"residual(1e-3)={r1:.3e} (<1e-4) residual(5e-4)={r2:.3e} "
                  f"ratio={ratio:.4f} (>=4) order={math.log2(ratio):.4f} time={elapsed:.2f}s")
    assert ok


def test_4_properness(profile):
    ds = 1e-3
    curve = build_profile(profile, ds)
    w = properness_witness(curve, profile.theta(curve.s))
    ok = w.holds and w.mirror_error <= 10 * ds**3
    record(4, ok, f"sigma0={w.sigma0:.4f} margin right={w.margin_right:.2e} "
                  f"left={w.margin_left:.2e} (>=0) mirror error={w.mirror_error:.1e} "
                  f"(<={10 * ds**3:.0e})")
    assert ok


def test_5_nonproper():
    t0 = time.perf_counter()
    rep = check_nonproper_criterion(1.0, 3.0, horizon=15.0)
    elapsed = time.perf_counter() - t0
    m = rep.margins
    ok = rep.passed and elapsed < 2
    record(5, ok, f"min margins: theta_ss-1={m['theta_ss']:.3f} (kappa-kappa0)-s="
                  f"{m['lower']:.3f} 5s-(kappa-kappa0)={m['upper']:.3f} time={elapsed:.2f}s (<2s)")
    assert ok


def test_6_order_and_trifecta():
    rng = np.random.default_rng(2024)
    order = [check_order_preservation(a, b, horizon=10.0) for a, b in random_order_pairs(rng, 50)]
    tri = [check_trifecta(s, horizon=20.0) for s in random_trifecta_states(rng, 50)]
    n_o = sum(r.passed for r in order)
    n_t = sum(r.passed for r in tri)
    ok = n_o == 50 and n_t == 50
    record(6, ok, f"order {n_o}/50 (min gap {min(r.margins['min_gap'] for r in order):.2e}), "
                  f"trifecta {n_t}/50 with no critical point on (0,20]")
    assert ok


def test_7_flow(profile):
    t0 = time.perf_counter()
    ell = ellipse_state(256)
    _, d, _ = run_flow(ell, stable_dt(ell), 100)
    drift = abs(d.areas[-1] - d.areas[0]) / abs(d.areas[0])
    shrinking = bool(np.all(np.diff(d.lengths) < 0))
    circ = circle_state(256)
    c_dev = run_flow(circ, stable_dt(circ), 100)[1].max_displacement_from_reference
    line = line_state(256)
    l_dev = run_flow(line, stable_dt(line), 100)[1].max_displacement_from_reference
    dev1 = run_translation_test(build_profile(profile, 1e-2), 0.01).max_displacement_from_reference
    dev2 = run_translation_test(build_profile(profile, 5e-3), 0.01).max_displacement_from_reference
    elapsed = time.perf_counter() - t0
    ok = (drift < 1e-3 and shrinking and c_dev < 1e-10 and l_dev < 1e-12 and dev1 < 1e-3
          and dev1 / dev2 >= 2 and elapsed < 60)
    record(7, ok, f"ellipse area drift={drift:.1e} length decreasing={shrinking}; circle "
                  f"{c_dev:.1e} line {l_dev:.1e}; raindrop deviation {dev1:.2e} -> {dev2:.2e} "
                  f"(x{dev1 / dev2:.2f}) time={elapsed:.1f}s (<60s)")
    assert ok


def test_8_determinism(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    runs = {
        "shoot": (["shoot", "--out", "s.json"], ["s.json"]),
        "trace": (["trace", "--report", "s.json", "--out", "t.csv"], ["t.csv", "t.csv.meta.json"]),
        "trace-json": (["trace", "--report", "s.json", "--format", "json", "--out", "t.json"],
                       ["t.json"]),
        "verify": (["verify", "--n-random", "10", "--out", "v.json"], ["v.json"]),
        "flow": (["flow", "--generator", "ellipse", "--n-vertices", "128", "--out", "f.json"],
                 ["f.json"]),
        "flow-raindrop": (["flow", "--generator", "raindrop", "--report", "s.json",
                           "--out", "r.json"], ["r.json"]),
        "plot": (["plot", "--input", "t.csv", "--out", "p.svg"], ["p.svg"]),
    }
    same = {}
    for name, (argv, outputs) in runs.items():
        assert main(argv) == 0
        first = [(tmp_path / o).read_bytes() for o in outputs]
        assert main(argv) == 0
        second = [(tmp_path / o).read_bytes() for o in outputs]
        same[name] = first == second
    ok = all(same.values())
    record(8, ok, "byte-identical reruns: " + " ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
