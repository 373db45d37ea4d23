"""Acceptance criteria, one verdict line per criterion.

The heavy Monte Carlo campaigns are module-scoped and shared: the isotropic
campaign runs the least-squares and likelihood estimators on the same draws
and feeds criteria 1 to 4. Setting ``BOTLAB_QUICK=1`` shrinks every campaign
to check the plumbing; verdicts from such a run carry no statistical weight.
"""
import math
import os
from collections import defaultdict

import numpy as np
import pytest

from botlab.config import preset
from botlab.dependence import ar1_gamma2, clt_experiment, first_coordinate
from botlab.estimate import lse, mle
from botlab.geometry import (bearing, eval_trajectory, grad_theta_bearing, grad_x_bearing, hess_theta_bearing,
                             build_observer_path)
from botlab.harness import reference_matrices, run_montecarlo
from botlab.inference import (PI_CONSTANT, check_mean_preservation, conservative_A2, delta_psi_moments,
                              final_position_map, info_matrices)
from botlab.noise import IsotropicGaussian, NoTrajectoryNoise, second_moment
from botlab.sim import simulate

QUICK = os.environ.get("BOTLAB_QUICK") == "1"
REPS_ISO = 20 if QUICK else 1000
REPS_MLE = 10 if QUICK else 200
REPS_ANISO = 10 if QUICK else 200
REPS_AR1 = 20 if QUICK else 1000
REPS_CLT = 200 if QUICK else 2000
SEED = 20240101

# criterion -> list of (label, ok, detail); printed by the terminal summary hook
VERDICTS = defaultdict(list)
TITLES = {
    1: "least-squares limit law",
    2: "likelihood limit law",
    3: "interval coverage",
    4: "conservative bound",
    5: "mean preservation",
    6: "degenerations",
    7: "observability dichotomy",
    8: "derivatives",
    9: "dependent noise",
    10: "determinism",
}


def verdict(criterion, label, ok, detail=""):
    VERDICTS[criterion].append((label, bool(ok), detail))
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'} {label}: {detail}")
    return bool(ok)


def verdict_lines():
    lines = []
    for c in sorted(VERDICTS):
        parts = VERDICTS[c]
        ok = all(p[1] for p in parts)
        body = "; ".join(f"{lab} {'ok' if good else 'FAILED'} ({det})" for lab, good, det in parts)
        lines.append(f"criterion {c:2d} {'PASS' if ok else 'FAIL'} {TITLES[c]}: {body}")
    if QUICK:
        lines.append("quick run: campaign sizes reduced, verdicts are not meaningful")
    return lines


def _fmt(a):
    return "[" + ", ".join(f"{v:.3g}" for v in np.atleast_1d(a)) + "]"


def _samples(summary, scenario, est, reps=None):
    recs = summary.records[:reps] if reps else summary.records
    ok = [r for r in recs if r.converged[est]]
    return math.sqrt(scenario.n) * (np.array([r.theta[est] for r in ok]) - scenario.theta_star)


# shared campaigns

@pytest.fixture(scope="module")
def iso():
    scenario, _ = preset("isotropic")
    ref = reference_matrices(scenario, "both", grid=2000)
    summary = run_montecarlo(scenario, "both", REPS_ISO, SEED, ref, level=0.95)
    return scenario, ref, summary


@pytest.fixture(scope="module")
def aniso():
    scenario, _ = preset("anisotropic")
    ref = reference_matrices(scenario, "both", grid=2000)
    return scenario, ref, run_montecarlo(scenario, "both", REPS_ANISO, SEED + 1, ref, level=None)


# 1

def test_lse_limit_law(iso):
    scenario, ref, s = iso
    e = s.estimators["lse"]
    verdict(1, "converged", e.converged >= 0.95 * e.reps, f"{e.converged}/{e.reps}")
    ok_f = verdict(1, "frobenius", e.frobenius_rel_error < 0.20, f"{e.frobenius_rel_error:.3f} < 0.20")
    ok_k = verdict(1, "ks", np.all(e.ks < 0.05), f"{_fmt(e.ks)} < 0.05")
    assert ok_f and ok_k


# 2

def test_mle_limit_law(iso):
    scenario, ref, s = iso
    x_mle = _samples(s, scenario, "mle", REPS_MLE)
    x_lse = _samples(s, scenario, "lse", REPS_MLE)
    cov = np.cov(x_mle, rowvar=False)
    frob = np.linalg.norm(cov - ref.I_inv) / np.linalg.norm(ref.I_inv)
    ok_f = verdict(2, "frobenius", frob < 0.25, f"{frob:.3f} < 0.25 over {len(x_mle)} reps")
    ratio = x_mle.var(axis=0, ddof=1) / x_lse.var(axis=0, ddof=1)
    ok_r = verdict(2, "var ratio mle/lse", np.all(ratio <= 1.15), f"{_fmt(ratio)} <= 1.15")
    assert ok_f and ok_r


def test_anisotropic_gap_widens(iso, aniso):
    scenario, _, s = iso
    x_mle = _samples(s, scenario, "mle", REPS_MLE)
    x_lse = _samples(s, scenario, "lse", REPS_MLE)
    iso_ratio = np.mean(x_mle.var(axis=0) / x_lse.var(axis=0))
    sa, ref_a, a = aniso
    aniso_ratio = np.mean(a.estimators["mle"].cov.diagonal() / a.estimators["lse"].cov.diagonal())
    theory = np.mean(ref_a.I_inv.diagonal() / ref_a.I_M_inv.diagonal())
    ok = verdict(2, "anisotropic gap", aniso_ratio < iso_ratio,
                 f"mean var ratio {aniso_ratio:.3f} vs isotropic {iso_ratio:.3f}; asymptotic {theory:.3f}")
    assert ok


# 3

def test_coverage(iso):
    _, _, s = iso
    c1, c2, c3 = s.coverage["IC1"], s.coverage["IC2"], s.coverage["IC3"]
    ok1 = verdict(3, "IC1", np.all((c1 >= 0.93) & (c1 <= 0.97)), f"{_fmt(c1)} in [0.93, 0.97]")
    ok3 = verdict(3, "IC3", np.all((c3 >= 0.93) & (c3 <= 0.97)), f"{_fmt(c3)} in [0.93, 0.97]")
    ok2 = verdict(3, "IC2", np.all(c2 >= 0.94), f"{_fmt(c2)} >= 0.94")
    assert ok1 and ok2 and ok3


# 4

def test_bound_holds_on_valid_scenarios():
    worst = 0.0
    checked = 0
    for name in ("isotropic", "anisotropic", "ar1"):
        sc, _ = preset(name)
        assert sc.validate().passed
        _, m2 = delta_psi_moments(sc.model, sc.theta_star, sc.path, sc.traj_noise)
        a2 = conservative_A2(sc.r_min, second_moment(sc.traj_noise))
        worst = max(worst, m2.max() / a2)
        checked += 1
    ok = verdict(4, "bound", worst <= 1.0, f"max E dPsi^2 / A^2 = {worst:.3f} over {checked} scenarios")
    assert ok


@pytest.mark.xfail(strict=True, reason="the constant evaluates to 31.108; see the decisions ledger")
def test_bound_constant():
    ok = verdict(4, "constant", abs(PI_CONSTANT - 31.12) <= 0.01, f"{PI_CONSTANT:.4f} vs 31.12 +- 0.01")
    assert ok


def test_width_ratio(iso):
    sc, ref, _ = iso
    amap, _ = final_position_map(sc.model)
    a2 = conservative_A2(sc.r_min, second_moment(sc.traj_noise))
    c1 = amap @ ref.I_M_inv @ amap.T
    c2 = amap @ ((a2 + sc.sigma**2) * np.linalg.inv(ref.I_R)) @ amap.T
    ratio = np.sqrt(c2.diagonal() / c1.diagonal())
    ok = verdict(4, "IC2/IC1 width ratio", np.all(np.abs(ratio / 10.5 - 1) <= 0.35),
                 f"{_fmt(ratio)} within 35% of 10.5")
    assert ok


# 5

def test_mean_preservation():
    rng = np.random.default_rng(5)
    base, _ = preset("isotropic")
    worst = 0.0
    for _ in range(20):
        obs = {"initial_position": list(rng.uniform(-6, -2, 2)), "initial_heading": rng.uniform(0.5, 1.2),
               "speed": rng.uniform(0.15, 0.3), "duration": 20.0,
               "segments": [[0.0, 6.0, rng.uniform(0.1, 0.25)], [7.0, 13.0, 0.0],
                            [14.0, 20.0, -rng.uniform(0.1, 0.25)]]}
        th = base.theta_star + rng.uniform(-1, 1, 4) * [1.0, 0.05, 1.0, 0.05]
        noise = IsotropicGaussian(rng.uniform(0.005, 0.03))
        worst = max(worst, check_mean_preservation(base.model, th, build_observer_path(obs), noise))
    ok = verdict(5, "max |E dPsi|", worst < 1e-8, f"{worst:.2e} rad < 1e-8 over 20 pairs")
    assert ok


# 6

def test_degenerations():
    sc = preset("isotropic")[0].replace(traj_noise=NoTrajectoryNoise())
    im = info_matrices(sc.model, sc.theta_star, sc.path, None, sc.obs_noise, grid=500)
    s2 = sc.sigma**2
    target = s2 * np.linalg.inv(im.I_R)
    e1 = np.linalg.norm(im.I_M_inv - target) / np.linalg.norm(target)
    e2 = np.linalg.norm(im.I - im.I_R / s2) / np.linalg.norm(im.I_R / s2)
    diff = 0.0
    for seed in range(5):
        d = simulate(sc, seed)
        a = lse(d, sc.model, sc.path)
        b = mle(d, sc.model, sc.path, None, sc.obs_noise, theta_init=a.theta)
        diff = max(diff, np.max(np.abs(a.theta - b.theta)))
    ok1 = verdict(6, "I_M^-1 = s^2 I_R^-1", e1 < 1e-8, f"{e1:.1e}")
    ok2 = verdict(6, "I = I_R / s^2", e2 < 1e-8, f"{e2:.1e}")
    ok3 = verdict(6, "MLE = LSE", diff < 1e-6, f"max diff {diff:.1e} over 5 datasets")
    assert ok1 and ok2 and ok3


# 7

def test_observability():
    straight = preset("straight")[0].validate().information_condition
    turning = preset("isotropic")[0].validate().information_condition
    ok1 = verdict(7, "straight", straight > 1e8, f"cond {straight:.2e} > 1e8")
    ok2 = verdict(7, "maneuvering", turning < 1e8, f"cond {turning:.2e} < 1e8")
    assert ok1 and ok2


# 8

def test_derivatives():
    sc, _ = preset("isotropic")
    model, path = sc.model, sc.path
    rng = np.random.default_rng(8)
    h = 1e-5
    scale = np.array([1.0, 1 / 20, 1.0, 1 / 20])
    worst_g = worst_h = worst_n = 0.0
    for _ in range(100):
        th = sc.theta_star + rng.uniform(-1, 1, 4) * [1.0, 0.05, 1.0, 0.05]
        t = np.array([rng.uniform(0, 1)])
        g = grad_theta_bearing(model, th, t, path)[0]
        hs = hess_theta_bearing(model, th, t, path)[0]
        num_g, num_h = np.empty(4), np.empty((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = h * scale[i]
            num_g[i] = (bearing(eval_trajectory(model, th + e, t), t, path)[0]
                        - bearing(eval_trajectory(model, th - e, t), t, path)[0]) / (2 * e[i])
            num_h[i] = (grad_theta_bearing(model, th + e, t, path)[0]
                        - grad_theta_bearing(model, th - e, t, path)[0]) / (2 * e[i])
        worst_g = max(worst_g, np.max(np.abs(num_g - g)) / np.max(np.abs(g)))
        worst_h = max(worst_h, np.max(np.abs(num_h - hs)) / np.max(np.abs(hs)))
        x = eval_trajectory(model, th, t)
        r = np.hypot(*(x - path.position(t)).T)
        worst_n = max(worst_n, abs(np.linalg.norm(grad_x_bearing(x, t, path)[0]) * r[0] - 1.0))
    ok1 = verdict(8, "gradient", worst_g < 1e-6, f"rel err {worst_g:.1e}")
    ok2 = verdict(8, "hessian", worst_h < 1e-6, f"rel err {worst_h:.1e}")
    ok3 = verdict(8, "|grad| r = 1", worst_n < 1e-12, f"{worst_n:.1e}")
    assert ok1 and ok2 and ok3


# 9

def test_clt_ar1():
    noise = preset("ar1")[0].traj_noise
    g2 = ar1_gamma2(noise.phi, noise.sigma_eta)
    res = clt_experiment(first_coordinate(), noise, 10_000, REPS_CLT, SEED, g2)
    rel = abs(res.emp_var / g2 - 1)
    ok1 = verdict(9, "gamma2", abs(g2 - 4e-4) < 1e-12, f"{g2:.4g} km^2")
    ok2 = verdict(9, "variance", rel < 0.10, f"{res.emp_var:.3e} within {rel:.1%} < 10%")
    ok3 = verdict(9, "ks", res.ks < 0.04, f"{res.ks:.3f} < 0.04")
    assert ok1 and ok2 and ok3


def test_lse_gaussian_under_ar1():
    sc, _ = preset("ar1")
    s = run_montecarlo(sc, "lse", REPS_AR1, SEED + 2, level=None)
    ks = s.estimators["lse"].ks_empirical
    ok = verdict(9, "lse ks", np.all(ks < 0.05), f"{_fmt(ks)} < 0.05 over {REPS_AR1} reps")
    assert ok


# 10

def test_determinism(tmp_path):
    sc = preset("isotropic")[0].replace(n=400)
    paths = []
    for w in (1, 2):
        s = run_montecarlo(sc, "both", 4, SEED, workers=w)
        paths.append(s.write(tmp_path / f"w{w}"))
    same = all(paths[0][k].read_bytes() == paths[1][k].read_bytes() for k in paths[0])
    ok = verdict(10, "workers 1 vs 2", same, f"{len(paths[0])} CSVs byte-identical")
    assert ok
