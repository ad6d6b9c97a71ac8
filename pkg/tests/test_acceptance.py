"""Acceptance suite.

Each test prints one [criterion N] PASS/FAIL line.  Heavy simulations sit in
module-scoped fixtures so related criteria share them.  Everything is seeded;
reruns are bit-identical.
"""

import time

import numpy as np
import pytest

from orbitlangevin import (energy_distance, integrate_batch,
                           integrate_refined_pair, make_action,
                           make_auxiliary_system, make_coupled_system,
                           make_isotropic_curvature_system, make_potential_spec,
                           make_projected_system, permutation_test,
                           sample_invariant_initial)
from orbitlangevin.config import ExperimentConfig
from orbitlangevin.experiments import (run_counterexample, run_equivalence,
                                       run_geometry_check, run_orbit_bm,
                                       run_stationary)

SEED = 20250809


def announce(criterion: int, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def checks_by_prefix(report, prefix):
    return [c for c in report.checks if c["name"].startswith(prefix)]


@pytest.fixture(scope="module")
def rotation_equivalence():
    cfg = ExperimentConfig(experiment="equivalence", action_kind="so_d_rotation",
                           action_dim=3, alpha_const=1.0, beta_c=0.5,
                           beta_bump_lo=0.8, beta_bump_hi=2.5, dt=1e-3,
                           horizon=1.0, checkpoints=(0.25, 0.5, 1.0),
                           n_trajectories=4000, n_permutations=500,
                           level=0.01, seed=SEED)
    start = time.perf_counter()
    report = run_equivalence(cfg)
    return cfg, report, time.perf_counter() - start


@pytest.fixture(scope="module")
def conjugation_equivalence():
    cfg = ExperimentConfig(experiment="equivalence", action_kind="conjugation_sym",
                           action_dim=2, alpha_const=1.0, beta_c=0.6,
                           beta_bump_lo=0.3, beta_bump_hi=3.0, phi_pad=0.15,
                           dt=1e-3, horizon=1.0, checkpoints=(0.25, 0.5, 1.0),
                           n_trajectories=4000, n_permutations=500,
                           level=0.01, seed=SEED)
    start = time.perf_counter()
    report = run_equivalence(cfg)
    return cfg, report, time.perf_counter() - start


def test_criterion_1_geometry_identity_suite():
    start = time.perf_counter()
    cfg = ExperimentConfig(experiment="geometry_check", n_draws=100, seed=SEED)
    report = run_geometry_check(cfg)
    elapsed = time.perf_counter() - start
    failures = [c["name"] for c in report.checks if not c["verdict"]]
    ok = report.overall_pass and elapsed < 60.0
    announce(1, ok, f"{len(report.checks)} identities, worst residual "
                    f"{report.diagnostics['worst_residual']:.2e}, {elapsed:.1f}s")
    assert not failures, f"identity failures: {failures}"
    assert elapsed < 60.0


def test_criterion_2_equivalence_rotation(rotation_equivalence):
    cfg, report, elapsed = rotation_equivalence
    equiv = checks_by_prefix(report, "equivalence_t")
    neg = checks_by_prefix(report, "negative_control_t")
    oracle = checks_by_prefix(report, "radial_oracle")
    assert len(equiv) == 3 and len(neg) == 3 and len(oracle) == 6
    ok = (all(c["p_value"] > 0.01 for c in equiv)
          and all(c["p_value"] < 0.01 for c in neg)
          and all(c["p_value"] > 0.01 for c in oracle)
          and elapsed < 600.0)
    ps = ", ".join(f"t={c['time_point']}: p={c['p_value']:.3f}" for c in equiv)
    announce(2, ok, f"{ps}; control max p={max(c['p_value'] for c in neg):.4f}; "
                    f"oracle min p={min(c['p_value'] for c in oracle):.3f}; {elapsed:.0f}s")
    assert ok


def test_criterion_3_equivalence_conjugation(conjugation_equivalence):
    cfg, report, elapsed = conjugation_equivalence
    equiv = checks_by_prefix(report, "equivalence_t")
    neg = checks_by_prefix(report, "negative_control_t")
    ok = (all(c["p_value"] > 0.01 for c in equiv)
          and all(c["p_value"] < 0.01 for c in neg)
          and elapsed < 900.0)
    ps = ", ".join(f"t={c['time_point']}: p={c['p_value']:.3f}" for c in equiv)
    announce(3, ok, f"{ps}; control max p={max(c['p_value'] for c in neg):.4f}; "
                    f"{elapsed:.0f}s")
    assert ok


def test_criterion_4_coupled_image_matches_auxiliary():
    action = make_action("so_d_rotation", 3)
    spec = make_potential_spec(action, alpha_const=1.0, beta_c=0.5,
                               bump_lo=0.8, bump_hi=2.5)
    aux = make_auxiliary_system(action, spec)
    B, group_dt, t_end = 2000, 1e-4, 1.0
    x_aux = sample_invariant_initial(action, "isotropic_gaussian",
                                     np.random.default_rng(SEED + 40), B)
    batch_aux = integrate_batch(aux, x_aux, 1e-3, t_end, SEED + 41,
                                record_times=[t_end])
    results = {}
    defects = {}
    for i, base in enumerate(("projected", "isotropic")):
        coupled = make_coupled_system(action, spec, base=base)
        x0 = sample_invariant_initial(action, "isotropic_gaussian",
                                      np.random.default_rng(SEED + 42 + i), B)
        batch = integrate_batch(coupled.system, coupled.initial_state(x0),
                                group_dt, t_end, SEED + 44 + i,
                                record_times=[t_end])
        image = coupled.image(batch.at_time(t_end))
        rep = permutation_test(image, batch_aux.at_time(t_end), n_perm=500,
                               seed=SEED + 46 + i, level=0.01)
        _, g = coupled.split(batch.at_time(t_end))
        gram = np.einsum("bji,bjk->bik", g, g) - np.eye(3)
        defects[base] = float(np.max(np.sqrt(np.sum(gram**2, axis=(1, 2)))))
        results[base] = rep
    ok = all(r.p_value > 0.01 for r in results.values()) \
        and all(d <= 1e-6 for d in defects.values())
    announce(4, ok, "; ".join(f"{b}: p={r.p_value:.3f}" for b, r in results.items())
             + f"; max orthogonality defect {max(defects.values()):.2e}")
    assert ok


def test_criterion_5_stationary_law():
    start = time.perf_counter()
    cfg = ExperimentConfig(experiment="stationary", action_kind="so_d_rotation",
                           action_dim=3, epsilon=0.5, dt=1e-3, burn_in=20.0,
                           horizon=40.0, n_samples=10_000, level=0.01, seed=SEED)
    report = run_stationary(cfg)
    elapsed = time.perf_counter() - start
    by_name = {c["name"]: c for c in report.checks}
    plateau = by_name["stationary_plateau_ks"]
    mismatch = by_name["stationary_mismatch_control"]
    ok = report.overall_pass and elapsed < 600.0
    announce(5, ok, f"plateau KS {plateau['distance']:.4f} <= {plateau['tolerance']:.4f}; "
                    f"mismatch KS {mismatch['distance']:.4f} rejects; {elapsed:.0f}s")
    assert ok


def test_criterion_6_orbit_brownian_motion():
    cfg = ExperimentConfig(experiment="orbit_bm", action_kind="so_d_rotation",
                           action_dim=2, anchor_radius=2.0, group_dt=1e-4,
                           horizon=0.5, n_trajectories=10_000, level=0.01,
                           seed=SEED)
    report = run_orbit_bm(cfg)
    by_name = {c["name"]: c for c in report.checks}
    angle = by_name["angle_wrapped_gaussian_ks"]
    radius = by_name["radius_conserved"]
    ok = report.overall_pass
    announce(6, ok, f"angle KS p={angle['p_value']:.3f}; "
                    f"radius deviation {radius['max_deviation']:.2e}")
    assert ok


def test_criterion_7_group_bm_counterexample():
    cfg = ExperimentConfig(experiment="counterexample", action_kind="so_d_rotation",
                           action_dim=2, anchor_radius=2.0, group_dt=1e-4,
                           horizon=0.5, n_trajectories=3000, seed=SEED)
    report = run_counterexample(cfg)
    by_name = {c["name"]: c for c in report.checks}
    r2 = by_name["qv_ratio_radius_2"]
    r1 = by_name["qv_ratio_radius_1"]
    ok = report.overall_pass
    announce(7, ok, f"ratio@2 = {r2['ratio']:.3f} (expect 4); "
                    f"ratio@1 = {r1['ratio']:.3f} (expect 1)")
    assert ok


def test_criterion_8a_seeded_determinism():
    cfg = ExperimentConfig(experiment="geometry_check", n_draws=20, seed=SEED)
    r1 = run_geometry_check(cfg).to_dict()
    r2 = run_geometry_check(cfg).to_dict()
    r1.pop("wall_time_s")
    r2.pop("wall_time_s")
    ok = r1 == r2
    # and bit-identical trajectories
    action = make_action("so_d_rotation", 3)
    spec = make_potential_spec(action)
    system = make_projected_system(action, spec)
    x0 = sample_invariant_initial(action, "isotropic_gaussian",
                                  np.random.default_rng(SEED), 200)
    b1 = integrate_batch(system, x0, 1e-3, 0.2, SEED, record_times=[0.2])
    b2 = integrate_batch(system, x0, 1e-3, 0.2, SEED, record_times=[0.2])
    ok = ok and np.array_equal(b1.states, b2.states)
    announce(8, ok, "determinism: identical reports and bit-identical trajectories")
    assert ok


def test_criterion_8b_permutation_calibration():
    rng = np.random.default_rng(SEED)
    rejections = 0
    n_rep = 50
    for i in range(n_rep):
        pool = rng.standard_normal((600, 3))
        rep = permutation_test(pool[:300], pool[300:], n_perm=200,
                               seed=2000 + i, level=0.05)
        rejections += rep.p_value < 0.05
    rate = rejections / n_rep
    ok = 0.02 <= rate <= 0.10
    announce(8, ok, f"calibration: null rejection rate {rate:.3f} at level 0.05")
    assert ok


def test_criterion_8c_dt_halving_stability(rotation_equivalence):
    cfg, report, _ = rotation_equivalence
    action = make_action(cfg.action_kind, cfg.action_dim)
    spec = make_potential_spec(action, alpha_const=cfg.alpha_const, beta_c=cfg.beta_c,
                               bump_lo=cfg.beta_bump_lo, bump_hi=cfg.beta_bump_hi)
    projected = make_projected_system(action, spec)
    volume_drift = make_isotropic_curvature_system(action, spec)
    B = cfg.n_trajectories
    xa = sample_invariant_initial(action, "isotropic_gaussian",
                                  np.random.default_rng(SEED + 80), B)
    xb = sample_invariant_initial(action, "isotropic_gaussian",
                                  np.random.default_rng(SEED + 81), B)
    ca, fa = integrate_refined_pair(projected, xa, cfg.dt, cfg.horizon, SEED + 82,
                                    record_times=cfg.checkpoints)
    cb, fb = integrate_refined_pair(volume_drift, xb, cfg.dt, cfg.horizon, SEED + 83,
                                    record_times=cfg.checkpoints)
    null_stds = {c["time_point"]: c["null_std"]
                 for c in checks_by_prefix(report, "equivalence_t")}
    moves = {}
    for t in cfg.checkpoints:
        coarse_stat = energy_distance(ca.at_time(t), cb.at_time(t))
        fine_stat = energy_distance(fa.at_time(t), fb.at_time(t))
        moves[t] = abs(coarse_stat - fine_stat)
    ok = all(moves[t] < null_stds[t] for t in cfg.checkpoints)
    detail = ", ".join(f"t={t}: |move|={moves[t]:.2e} < sd={null_stds[t]:.2e}"
                       for t in cfg.checkpoints)
    announce(8, ok, f"dt-halving: {detail}")
    assert ok
