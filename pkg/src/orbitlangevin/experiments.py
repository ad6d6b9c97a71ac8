"""Experiment runners: simulate, test, and report.

Each runner consumes an ExperimentConfig, produces a RunReport whose checks
carry their own pass/fail verdicts (negative controls pass when they reject),
and is reproducible from (config, seed) alone: every random stream derives
from the master seed through fixed role keys.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .actions import (GroupAction, haar_matrices, make_action, orbit_tangent_frame)
from .config import ExperimentConfig, stationary_taus
from .errors import ConfigError
from .geometry import (coupling_operators, fd_gradient, grad_log_orbit_volume,
                       hessian_identity_residual, log_orbit_volume, mean_curvature,
                       second_fundamental_form_group, second_fundamental_form_orbit)
from .sde import (StationaryProfile, bump_profile, integrate_batch,
                  make_fully_projected_system, make_isotropic_curvature_system,
                  make_orbit_bm_system, make_potential_spec, make_projected_system,
                  radial_oracle_system, sample_invariant_initial,
                  stationary_potential_spec)
from .stats import (ks_against_cdf, ks_two_sample, permutation_test,
                    plateau_reference, stationary_check, stationary_reference,
                    wrapped_normal_cdf)

# role keys for deriving independent random streams from the master seed
ROLE_SIM_A = 0
ROLE_SIM_B = 1
ROLE_SIM_CONTROL = 2
ROLE_SIM_ORACLE = 3
ROLE_INIT = 10
ROLE_TEST = 20
ROLE_GEOMETRY = 30
ROLE_GROUP = 40


def derive_seed(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(key))


def derive_rng(master: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(master, *key)))


@dataclass
class RunReport:
    """Config echo, per-check results, diagnostics, and the overall verdict."""

    experiment: str
    config: dict
    checks: list
    diagnostics: dict
    overall_pass: bool
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "overall_pass": bool(self.overall_pass),
            "wall_time_s": float(self.wall_time_s),
        }


def _check_entry(name: str, report, gating: bool = True, **extra) -> dict:
    entry = {"name": name, "gating": gating}
    entry.update(report.to_dict() if hasattr(report, "to_dict") else report)
    entry.update(extra)
    return entry


def _overall(checks: list) -> bool:
    return all(bool(c["verdict"]) for c in checks if c.get("gating", True))


def write_report(report: RunReport, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def dump_trajectories(batch, out_dir: str, tag: str, mode: str = "per_trajectory") -> None:
    """CSV dumps: header t,x_0,...,x_{dim-1}; long mode prefixes a traj column."""
    traj_dir = os.path.join(out_dir, "trajectories")
    os.makedirs(traj_dir, exist_ok=True)
    times = batch.times
    states = batch.states
    dim = states.shape[2]
    header = "t," + ",".join(f"x_{i}" for i in range(dim))
    if mode == "per_trajectory":
        for i in range(states.shape[0]):
            path = os.path.join(traj_dir, f"{tag}_{i:05d}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(header + "\n")
                for j, t in enumerate(times):
                    fh.write(f"{t:.10g}," + ",".join(f"{v:.17g}" for v in states[i, j]) + "\n")
    elif mode == "long":
        path = os.path.join(traj_dir, f"{tag}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("traj," + header + "\n")
            for i in range(states.shape[0]):
                for j, t in enumerate(times):
                    fh.write(f"{i},{t:.10g}," +
                             ",".join(f"{v:.17g}" for v in states[i, j]) + "\n")
    else:
        raise ConfigError(f"unknown csv mode {mode!r}")


def _spec_from_config(action: GroupAction, cfg: ExperimentConfig):
    return make_potential_spec(action, potential_kind=cfg.potential_kind,
                               coeff=cfg.potential_coeff, quartic=cfg.potential_quartic,
                               alpha_const=cfg.alpha_const, beta_c=cfg.beta_c,
                               bump_lo=cfg.beta_bump_lo, bump_hi=cfg.beta_bump_hi,
                               ramp_frac=cfg.beta_ramp, phi_pad=cfg.phi_pad)


def _batch_diag(diag: dict, prefix: str) -> dict:
    return {f"{prefix}_{k}": (float(v) if np.isfinite(v) else None) if isinstance(v, float) else v
            for k, v in diag.items()}


# -- equivalence ------------------------------------------------------------------

def run_equivalence(cfg: ExperimentConfig) -> RunReport:
    """Projected-noise vs volume-drift dynamics, with a no-drift negative control."""
    t_start = time.perf_counter()
    action = make_action(cfg.action_kind, cfg.action_dim)
    spec = _spec_from_config(action, cfg)
    if cfg.beta_c == 0.0:
        raise ConfigError("equivalence experiment needs a nontrivial beta profile")
    projected = make_projected_system(action, spec)
    volume_drift = make_isotropic_curvature_system(action, spec, source=cfg.curvature_source)
    control = make_isotropic_curvature_system(action, spec, curvature=False)
    B = cfg.n_trajectories
    rec_every = 1 if cfg.dump_trajectories else None
    init_a = sample_invariant_initial(action, "isotropic_gaussian",
                                      derive_rng(cfg.seed, ROLE_INIT, 0), B)
    init_b = sample_invariant_initial(action, "isotropic_gaussian",
                                      derive_rng(cfg.seed, ROLE_INIT, 1), B)
    init_c = sample_invariant_initial(action, "isotropic_gaussian",
                                      derive_rng(cfg.seed, ROLE_INIT, 2), B)
    batch_a = integrate_batch(projected, init_a, cfg.dt, cfg.horizon,
                              derive_seed(cfg.seed, ROLE_SIM_A),
                              record_times=cfg.checkpoints, record_every=rec_every)
    batch_b = integrate_batch(volume_drift, init_b, cfg.dt, cfg.horizon,
                              derive_seed(cfg.seed, ROLE_SIM_B),
                              record_times=cfg.checkpoints, record_every=rec_every)
    batch_c = integrate_batch(control, init_c, cfg.dt, cfg.horizon,
                              derive_seed(cfg.seed, ROLE_SIM_CONTROL),
                              record_times=cfg.checkpoints)
    checks = []
    for i, t in enumerate(cfg.checkpoints):
        rep = permutation_test(batch_a.at_time(t), batch_b.at_time(t),
                               n_perm=cfg.n_permutations,
                               seed=derive_seed(cfg.seed, ROLE_TEST, i),
                               level=cfg.level)
        checks.append(_check_entry(f"equivalence_t{t:g}", rep, time_point=t))
        neg = permutation_test(batch_a.at_time(t), batch_c.at_time(t),
                               n_perm=cfg.n_permutations,
                               seed=derive_seed(cfg.seed, ROLE_TEST, 100 + i),
                               level=cfg.level, role="negative_control")
        checks.append(_check_entry(f"negative_control_t{t:g}", neg, time_point=t))
    if cfg.action_kind == "so_d_rotation":
        dip = bump_profile(cfg.beta_bump_lo, cfg.beta_bump_hi, cfg.beta_ramp)
        oracle = radial_oracle_system(
            spec.f_radial_prime,
            alpha_r=lambda r: np.full_like(np.asarray(r, dtype=float), cfg.alpha_const),
            beta_r=lambda r: cfg.alpha_const - cfg.beta_c * dip(r),
            d=cfg.action_dim)
        r0 = np.linalg.norm(sample_invariant_initial(
            action, "isotropic_gaussian", derive_rng(cfg.seed, ROLE_INIT, 3), B), axis=1)
        batch_r = integrate_batch(oracle, r0[:, None], cfg.dt, cfg.horizon,
                                  derive_seed(cfg.seed, ROLE_SIM_ORACLE),
                                  record_times=cfg.checkpoints)
        for t in cfg.checkpoints:
            ra = np.linalg.norm(batch_a.at_time(t), axis=1)
            rb = np.linalg.norm(batch_b.at_time(t), axis=1)
            ro = batch_r.at_time(t)[:, 0]
            checks.append(_check_entry(f"radial_oracle_projected_t{t:g}",
                                       ks_two_sample(ra, ro, level=cfg.level), time_point=t))
            checks.append(_check_entry(f"radial_oracle_volume_drift_t{t:g}",
                                       ks_two_sample(rb, ro, level=cfg.level), time_point=t))
    diagnostics = {}
    diagnostics.update(_batch_diag(batch_a.diagnostics, "projected"))
    diagnostics.update(_batch_diag(batch_b.diagnostics, "volume_drift"))
    report = RunReport(experiment="equivalence", config=cfg.to_dict(), checks=checks,
                       diagnostics=diagnostics, overall_pass=_overall(checks),
                       wall_time_s=time.perf_counter() - t_start)
    if cfg.dump_trajectories:
        dump_trajectories(batch_a, cfg.out_dir, "projected", cfg.csv_mode)
        dump_trajectories(batch_b, cfg.out_dir, "volume_drift", cfg.csv_mode)
    return report


# -- stationary law ------------------------------------------------------------------

def run_stationary(cfg: ExperimentConfig) -> RunReport:
    """Identity-P diffusion with beta = phi(log orbit volume) against its stationary law."""
    t_start = time.perf_counter()
    if cfg.action_kind != "so_d_rotation":
        raise ConfigError("the stationary experiment needs the rotation action (1D reference)")
    action = make_action(cfg.action_kind, cfg.action_dim)
    tau0, tau1 = stationary_taus(cfg)
    profile = StationaryProfile(epsilon=cfg.epsilon, tau0=tau0, tau1=tau1)
    spec = stationary_potential_spec(action, profile, coeff=cfg.potential_coeff)
    system = make_projected_system(action, spec)
    B = cfg.n_samples
    init = sample_invariant_initial(action, "isotropic_gaussian",
                                    derive_rng(cfg.seed, ROLE_INIT, 0), B)
    horizon = 2.0 * cfg.burn_in
    batch = integrate_batch(system, init, cfg.dt, horizon,
                            derive_seed(cfg.seed, ROLE_SIM_A),
                            record_times=[cfg.burn_in, horizon])
    d = cfg.action_dim
    radii = np.linalg.norm(batch.at_time(cfg.burn_in), axis=1)
    radii2 = np.linalg.norm(batch.at_time(horizon), axis=1)
    r_plateau = float(np.exp(tau1 / (d - 1)))
    r_max = max(6.0, float(radii.max()) + 0.5, float(radii2.max()) + 0.5)
    ref = plateau_reference(cfg.epsilon, spec.f_radial, d, r_plateau, r_max)
    eps_mis = cfg.epsilon + 0.5 if cfg.epsilon + 0.5 <= 1.0 else cfg.epsilon - 0.5
    ref_mis = plateau_reference(eps_mis, spec.f_radial, d, r_plateau, r_max)
    grid_full = np.linspace(min(0.05, r_plateau / 4.0), r_max, 4001)
    ref_full = stationary_reference(profile, spec.f_radial, d, grid_full)

    main = stationary_check(radii[radii >= r_plateau], ref, level=cfg.level)
    checks = [_check_entry("stationary_plateau_ks", main)]
    mis = stationary_check(radii[radii >= r_plateau], ref_mis, level=cfg.level)
    checks.append(_check_entry("stationary_mismatch_control",
                               {**mis.to_dict(), "verdict": not mis.verdict,
                                "role": "negative_control"}))
    full = stationary_check(radii, ref_full, level=cfg.level)
    checks.append(_check_entry("stationary_fullrange_ks", full))
    doubled = stationary_check(radii2[radii2 >= r_plateau], ref, level=cfg.level)
    checks.append(_check_entry("stationary_doubled_burnin",
                               {**doubled.to_dict(),
                                "verdict": doubled.verdict == main.verdict}))
    diagnostics = _batch_diag(batch.diagnostics, "stationary")
    diagnostics["burn_in"] = cfg.burn_in
    diagnostics["plateau_radius"] = r_plateau
    diagnostics["n_plateau_samples"] = int(np.sum(radii >= r_plateau))
    return RunReport(experiment="stationary", config=cfg.to_dict(), checks=checks,
                     diagnostics=diagnostics, overall_pass=_overall(checks),
                     wall_time_s=time.perf_counter() - t_start)


# -- orbit Brownian motion -------------------------------------------------------------

def run_orbit_bm(cfg: ExperimentConfig) -> RunReport:
    """Group process whose image is Brownian motion on the anchor's orbit."""
    t_start = time.perf_counter()
    if cfg.action_kind != "so_d_rotation":
        raise ConfigError("orbit_bm expects the rotation action")
    action = make_action(cfg.action_kind, cfg.action_dim)
    d = cfg.action_dim
    radius = cfg.anchor_radius
    anchor = np.zeros(d)
    anchor[0] = radius
    gbm = make_orbit_bm_system(action, anchor, diffusion_const=1.0)
    B = cfg.n_trajectories
    g0 = np.broadcast_to(np.eye(d).reshape(-1), (B, d * d)).copy()
    t_short = 0.01
    batch = integrate_batch(gbm.system, g0, cfg.group_dt, cfg.horizon,
                            derive_seed(cfg.seed, ROLE_GROUP),
                            record_times=[t_short, cfg.horizon])
    imgs_short = gbm.image(batch.at_time(t_short))
    imgs_final = gbm.image(batch.at_time(cfg.horizon))
    checks = []
    radius_dev = max(abs(batch.diagnostics["min_guard_stat"] - radius),
                     abs(batch.diagnostics["max_guard_stat"] - radius))
    checks.append(_check_entry("radius_conserved",
                               {"verdict": radius_dev <= 1e-6, "max_deviation": radius_dev,
                                "tolerance": 1e-6}))
    final_g = batch.at_time(cfg.horizon).reshape(B, d, d)
    gram = np.einsum("bji,bjk->bik", final_g, final_g) - np.eye(d)
    ortho = float(np.max(np.sqrt(np.sum(gram * gram, axis=(1, 2)))))
    checks.append(_check_entry("orthogonality_defect",
                               {"verdict": ortho <= 1e-6, "max_defect": ortho,
                                "tolerance": 1e-6}))
    if d == 2:
        angles = np.arctan2(imgs_final[:, 1], imgs_final[:, 0])
        sigma = np.sqrt(2.0 * cfg.horizon) / radius
        rep = ks_against_cdf(angles, lambda x: wrapped_normal_cdf(x, sigma), level=cfg.level)
        checks.append(_check_entry("angle_wrapped_gaussian_ks", rep,
                                   sigma=float(sigma), time_point=cfg.horizon))
    else:
        sub = make_action("so_d_rotation", d - 1)
        rng = derive_rng(cfg.seed, ROLE_TEST, 0)
        blocks = haar_matrices(sub, rng, 3)
        half = B // 2
        worst = None
        for i in range(3):
            h = np.eye(d)
            h[1:, 1:] = blocks[i]
            # disjoint halves: moving the same points would compare a cloud
            # with its exact isometric image, breaking the permutation null
            rep = permutation_test(imgs_final[:half], imgs_final[half:] @ h.T,
                                   n_perm=cfg.n_permutations,
                                   seed=derive_seed(cfg.seed, ROLE_TEST, 1 + i),
                                   level=cfg.level / 3)
            if worst is None or rep.p_value < worst.p_value:
                worst = rep
        checks.append(_check_entry("stabilizer_invariance", worst))
    disp = np.sum((imgs_short - anchor) ** 2, axis=1)
    qv_ratio = float(np.mean(disp) / (2.0 * t_short * action.max_orbit_dim))
    checks.append(_check_entry("short_time_quadratic_variation",
                               {"verdict": abs(qv_ratio - 1.0) <= 0.1, "ratio": qv_ratio,
                                "tolerance": 0.1, "time_point": t_short}))
    diagnostics = _batch_diag(batch.diagnostics, "group")
    return RunReport(experiment="orbit_bm", config=cfg.to_dict(), checks=checks,
                     diagnostics=diagnostics, overall_pass=_overall(checks),
                     wall_time_s=time.perf_counter() - t_start)


# -- group-BM image counterexample -------------------------------------------------------

def run_counterexample(cfg: ExperimentConfig) -> RunReport:
    """Image of plain group Brownian motion is not orbit Brownian motion.

    Its quadratic-variation rate scales with the squared anchor radius, while
    the intrinsic orbit rate is anchor-independent; the drift is still the
    inward mean-curvature pull -y.
    """
    t_start = time.perf_counter()
    if cfg.action_kind != "so_d_rotation" or cfg.action_dim != 2:
        raise ConfigError("the counterexample runs on the planar rotation action")
    dt = cfg.group_dt
    n_steps = int(round(cfg.horizon / dt))
    B = cfg.n_trajectories
    rng = derive_rng(cfg.seed, ROLE_GROUP)

    def qv_rate_group(radius: float) -> float:
        inc = np.sqrt(2.0 * dt) * rng.standard_normal((B, n_steps))
        return float(radius**2 * np.mean(2.0 * (1.0 - np.cos(inc))) / dt)

    def qv_rate_intrinsic(radius: float) -> float:
        inc = (np.sqrt(2.0 * dt) / radius) * rng.standard_normal((B, n_steps))
        return float(radius**2 * np.mean(2.0 * (1.0 - np.cos(inc))) / dt)

    radii = [1.0, cfg.anchor_radius]
    checks = []
    rates = {}
    for r in radii:
        rates[r] = (qv_rate_group(r), qv_rate_intrinsic(r))
    for r in radii:
        grp, intr = rates[r]
        ratio = grp / intr
        expected = r**2
        checks.append(_check_entry(
            f"qv_ratio_radius_{r:g}",
            {"verdict": abs(ratio / expected - 1.0) <= 0.10, "ratio": float(ratio),
             "expected": float(expected), "tolerance_rel": 0.10,
             "group_rate": float(grp), "intrinsic_rate": float(intr)}))
    inc = np.sqrt(2.0 * dt) * rng.standard_normal((B, n_steps))
    drift_coef = float(np.mean(np.cos(inc) - 1.0) / dt)
    checks.append(_check_entry("image_drift_is_mean_curvature",
                               {"verdict": abs(drift_coef + 1.0) <= 0.1,
                                "coefficient": drift_coef, "expected": -1.0,
                                "tolerance": 0.1}))
    return RunReport(experiment="counterexample", config=cfg.to_dict(), checks=checks,
                     diagnostics={"dt": dt, "n_steps": n_steps, "n_paths": B},
                     overall_pass=_overall(checks),
                     wall_time_s=time.perf_counter() - t_start)


# -- geometric identity suite ----------------------------------------------------------

GEOMETRY_ACTIONS = (("so_d_rotation", 3), ("conjugation_sym", 2), ("conjugation_sym", 3),
                    ("right_mult", 2), ("right_mult", 3))

_REGULAR_FLOOR = {"so_d_rotation": 0.3, "conjugation_sym": 0.25, "right_mult": 0.25}


def _draw_regular(action: GroupAction, rng: np.random.Generator, floor: float) -> np.ndarray:
    for _ in range(1000):
        x = rng.standard_normal(action.ambient_dim)
        if float(action.regularity_stat(x[None])[0]) >= floor:
            return x
    raise RuntimeError("could not draw a well-separated regular point")


def _spectral_test_potential(action: GroupAction):
    """Invariant non-radial test function with analytic gradient, per action kind."""
    kind = action.action_kind
    d = action.matrix_dim
    if kind == "so_d_rotation":
        def grad(x):
            return float(np.sum(x * x)) * x  # grad of ||x||^4 / 4
        return grad
    if kind == "conjugation_sym":
        from .actions import coords_to_sym, sym_to_coords

        def grad(x):
            m = coords_to_sym(x, d)
            return sym_to_coords(m @ m)  # grad of tr(M^3) / 3
        return grad

    def grad(x):
        m = x.reshape(d, d)
        return (m @ (m.T @ m)).reshape(-1)  # grad of tr((M^T M)^2) / 4
    return grad


def geometry_identity_suite(seed: int, n_draws: int = 100) -> list:
    """Max residuals of the curvature/volume/coupling identities over random draws."""
    checks = []
    for kind, d in GEOMETRY_ACTIONS:
        action = make_action(kind, d)
        rng = derive_rng(seed, ROLE_GEOMETRY, GEOMETRY_ACTIONS.index((kind, d)))
        floor = _REGULAR_FLOOR[kind]
        grad_spectral = _spectral_test_potential(action)
        res = {key: 0.0 for key in
               ("duality_rel", "duality_fd", "sff_translation", "hessian_radial",
                "hessian_spectral", "grad_equivariance", "proj_equivariance",
                "proj_idempotence", "diffusion_reconstruction", "v1_identity",
                "v0_symmetry", "frame_orthonormal", "j0_rowspace")}
        frame_stable = True
        for _ in range(n_draws):
            x = _draw_regular(action, rng, floor)
            g = haar_matrices(action, rng, 1)[0]
            omega = np.einsum("k,kij->ij", rng.standard_normal(action.n_generators),
                              action.lie_basis)
            y = action.apply_batch(g, x[None])[0]

            glv = grad_log_orbit_volume(action, x)
            curv = mean_curvature(action, x)
            denom = max(float(np.linalg.norm(glv)), 1e-30)
            res["duality_rel"] = max(res["duality_rel"],
                                     float(np.linalg.norm(glv - curv.grad_log_volume)) / denom)
            fd = fd_gradient(lambda z: log_orbit_volume(action, z), x)
            res["duality_fd"] = max(res["duality_fd"], float(np.linalg.norm(glv - fd)))

            # translated second fundamental form: evaluate the tensor at the
            # image point through the minimal-norm algebra preimage of L A
            w = action.infinitesimal_action(omega, y)
            xi = action.xi_all(y[None])[0]
            u, s, vt = np.linalg.svd(xi, full_matrices=False)
            m = action.max_orbit_dim
            coeff = vt[:m].T @ ((u[:, :m].T @ w) / s[:m])
            omega_min = np.einsum("k,kij->ij", coeff, action.lie_basis)
            lhs = second_fundamental_form_orbit(action, y, omega_min)
            rhs = second_fundamental_form_orbit(action, y, omega)
            if kind == "so_d_rotation":
                h_group = second_fundamental_form_group(g, omega @ g)
                pp_y = orbit_tangent_frame(action, y)
                rhs_group = pp_y.P_apply(h_group @ x)
                res["sff_translation"] = max(res["sff_translation"],
                                             float(np.linalg.norm(lhs - rhs_group)))
            res["sff_translation"] = max(res["sff_translation"],
                                         float(np.linalg.norm(lhs - rhs)))

            res["hessian_radial"] = max(res["hessian_radial"],
                                        hessian_identity_residual(action, lambda z: 2.0 * z,
                                                                  x, omega))
            res["hessian_spectral"] = max(res["hessian_spectral"],
                                          hessian_identity_residual(action, grad_spectral,
                                                                    x, omega))

            moved_grad = action.apply_batch(g, glv[None])[0]
            res["grad_equivariance"] = max(res["grad_equivariance"],
                                           float(np.linalg.norm(moved_grad -
                                                                grad_log_orbit_volume(action, y))))

            pp_x = orbit_tangent_frame(action, x)
            pp_y = orbit_tangent_frame(action, y)
            frame_stable = frame_stable and (pp_x.orbit_dim == pp_y.orbit_dim)
            v = rng.standard_normal(action.ambient_dim)
            moved_pv = action.apply_batch(g, pp_x.P_apply(v)[None])[0]
            pv_moved = pp_y.P_apply(action.apply_batch(g, v[None])[0])
            res["proj_equivariance"] = max(res["proj_equivariance"],
                                           float(np.linalg.norm(moved_pv - pv_moved)))
            pv = pp_x.P_apply(v)
            qv = pp_x.Q_apply(v)
            res["proj_idempotence"] = max(
                res["proj_idempotence"],
                float(np.linalg.norm(pp_x.P_apply(pv) - pv)),
                float(np.linalg.norm(pp_x.Q_apply(qv) - qv)),
                float(np.linalg.norm(pp_x.Q_apply(pv))))

            ops = coupling_operators(action, g, x, noise_scale=0.7)
            recon = ops.L_matrix @ ops.J0 @ ops.J0.T @ ops.L_matrix.T
            q_y = pp_y.tangent_frame.T @ pp_y.tangent_frame
            res["diffusion_reconstruction"] = max(res["diffusion_reconstruction"],
                                                  float(np.linalg.norm(recon - 0.7 * q_y)))
            res["v1_identity"] = max(res["v1_identity"],
                                     float(np.linalg.norm(ops.L_matrix @ ops.V1 +
                                                          pp_y.Q_apply(ops.v0_image))))
            ops_id = coupling_operators(action, np.eye(d), x, noise_scale=1.0)
            res["v0_symmetry"] = max(res["v0_symmetry"],
                                     float(np.linalg.norm(ops_id.V0 - ops_id.V0.T)))
            untwist = ops.V0 @ g.T if action.comp_side == "left" else g.T @ ops.V0
            res["v0_symmetry"] = max(res["v0_symmetry"],
                                     float(np.linalg.norm(untwist - untwist.T)))
            frame_mats = np.stack([g @ b for b in action.lie_basis])
            gram = np.einsum("aij,bij->ab", frame_mats, frame_mats)
            res["frame_orthonormal"] = max(res["frame_orthonormal"],
                                           float(np.linalg.norm(gram - np.eye(action.n_generators))))
            xi_y = action.xi_all(y[None])[0]
            _, _, vt_y = np.linalg.svd(xi_y, full_matrices=False)
            vr = vt_y[:m].T
            res["j0_rowspace"] = max(res["j0_rowspace"],
                                     float(np.linalg.norm(ops.J0 - vr @ (vr.T @ ops.J0))))

        tols = {"duality_rel": 1e-7, "duality_fd": 1e-5, "sff_translation": 1e-8,
                "hessian_radial": 1e-6, "hessian_spectral": 1e-5,
                "grad_equivariance": 1e-9, "proj_equivariance": 1e-9,
                "proj_idempotence": 1e-10, "diffusion_reconstruction": 1e-8,
                "v1_identity": 1e-8, "v0_symmetry": 1e-10,
                "frame_orthonormal": 1e-10, "j0_rowspace": 1e-9}
        label = f"{kind}_d{d}"
        for key, tol in tols.items():
            checks.append({"name": f"{label}:{key}", "gating": True,
                           "max_residual": res[key], "tolerance": tol,
                           "n_draws": n_draws, "verdict": res[key] <= tol})
        checks.append({"name": f"{label}:frame_dim_stability", "gating": True,
                       "n_draws": n_draws, "verdict": frame_stable})

        # Haar-shift invariance of Monte Carlo means of a bounded statistic
        rng_h = derive_rng(seed, ROLE_GEOMETRY, 100 + GEOMETRY_ACTIONS.index((kind, d)))
        x0 = _draw_regular(action, rng_h, floor)
        gs = haar_matrices(action, rng_h, 4000)
        g0 = haar_matrices(action, rng_h, 1)[0]
        pts = action.apply_batch(gs, np.broadcast_to(x0, (4000, action.ambient_dim)))
        h_vals = np.tanh(pts[:, 0])
        h_shift = np.tanh(action.apply_batch(g0, pts)[:, 0])
        se = float(np.sqrt(np.var(h_vals) / h_vals.size + np.var(h_shift) / h_shift.size))
        gap = abs(float(np.mean(h_vals) - np.mean(h_shift)))
        checks.append({"name": f"{label}:haar_shift_invariance", "gating": True,
                       "gap": gap, "three_se": 3.0 * se, "verdict": gap <= 3.0 * se})
    return checks


def run_geometry_check(cfg: ExperimentConfig) -> RunReport:
    t_start = time.perf_counter()
    checks = geometry_identity_suite(cfg.seed, cfg.n_draws)
    worst = max(c.get("max_residual", 0.0) for c in checks)
    return RunReport(experiment="geometry_check", config=cfg.to_dict(), checks=checks,
                     diagnostics={"worst_residual": float(worst)},
                     overall_pass=_overall(checks),
                     wall_time_s=time.perf_counter() - t_start)


# -- fully projected (exploratory) --------------------------------------------------------

def run_fully_projected(cfg: ExperimentConfig) -> RunReport:
    """Noise confined to normal directions; radial oracle asserted, long run reported."""
    t_start = time.perf_counter()
    if cfg.action_kind != "so_d_rotation":
        raise ConfigError("the fully projected experiment runs on the rotation action")
    action = make_action(cfg.action_kind, cfg.action_dim)
    spec = _spec_from_config(action, cfg)
    system = make_fully_projected_system(action, spec)
    B = cfg.n_trajectories
    init = sample_invariant_initial(action, "isotropic_gaussian",
                                    derive_rng(cfg.seed, ROLE_INIT, 0), B)
    batch = integrate_batch(system, init, cfg.dt, cfg.horizon,
                            derive_seed(cfg.seed, ROLE_SIM_A),
                            record_times=[cfg.horizon])
    oracle = radial_oracle_system(
        spec.f_radial_prime,
        alpha_r=lambda r: np.full_like(np.asarray(r, dtype=float), cfg.alpha_const),
        beta_r=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        d=cfg.action_dim)
    r0 = np.linalg.norm(sample_invariant_initial(
        action, "isotropic_gaussian", derive_rng(cfg.seed, ROLE_INIT, 1), B), axis=1)
    batch_r = integrate_batch(oracle, r0[:, None], cfg.dt, cfg.horizon,
                              derive_seed(cfg.seed, ROLE_SIM_ORACLE),
                              record_times=[cfg.horizon])
    radius = np.linalg.norm(batch.at_time(cfg.horizon), axis=1)
    checks = [_check_entry("radial_oracle_ks",
                           ks_two_sample(radius, batch_r.at_time(cfg.horizon)[:, 0],
                                         level=cfg.level))]
    # conjectured long-run radial law (inverse orbit-volume factor): reported only
    long_batch = integrate_batch(system, init, cfg.dt, cfg.burn_in,
                                 derive_seed(cfg.seed, ROLE_SIM_B),
                                 record_times=[cfg.burn_in])
    long_radius = np.linalg.norm(long_batch.at_time(cfg.burn_in), axis=1)
    r_max = max(6.0, float(long_radius.max()) + 0.5)
    ref = plateau_reference(0.0, spec.f_radial, cfg.action_dim, 1e-3, r_max)
    hist = stationary_check(long_radius, ref, level=cfg.level)
    checks.append(_check_entry("conjectured_stationary_histogram", hist, gating=False))
    diagnostics = _batch_diag(batch.diagnostics, "fully_projected")
    diagnostics.update(_batch_diag(long_batch.diagnostics, "long_run"))
    return RunReport(experiment="fully_projected", config=cfg.to_dict(), checks=checks,
                     diagnostics=diagnostics, overall_pass=_overall(checks),
                     wall_time_s=time.perf_counter() - t_start)


RUNNERS = {
    "equivalence": run_equivalence,
    "stationary": run_stationary,
    "orbit_bm": run_orbit_bm,
    "counterexample": run_counterexample,
    "geometry_check": run_geometry_check,
    "fully_projected": run_fully_projected,
}
