"""SDE systems and a batched Euler-Maruyama integrator.

Systems are plain drift/diffusion pairs over flat state vectors, evaluated on
batches of trajectories at once.  diffusion_apply returns the sqrt(2)-scaled
diffusion operator applied to a standard normal increment; the integrator
supplies the sqrt(dt).

Every trajectory owns a Philox stream derived from (master seed, trajectory
index), so a trajectory is bit-identical whether integrated alone or inside a
batch, and batches are reproducible from the master seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import GroupAction, haar_matrices, polar_factor, tangent_project
from .errors import NonFinite, OrbitLangevinError, SingularOrbit, StepRejected
from .geometry import SINGULAR_GUARD, coupling_operators_batch, grad_log_volume_batch

SQRT2 = np.sqrt(2.0)

DEFAULT_DT = 1e-3
GROUP_DT = 1e-4


# -- system and trajectory containers ----------------------------------------

@dataclass(frozen=True)
class SdeSystem:
    """Drift + diffusion pair consumed by the generic integrator.

    drift(states, t) -> (B, dim); diffusion_apply(states, t, xi) -> (B, dim)
    with xi a (B, noise_dim) standard normal draw.  post_step optionally maps
    the proposed states (e.g. retraction); step_diagnostic sees the
    pre-post_step proposal and returns scalars that the integrator reduces
    by max; guard_stat tracks an invariant regularity statistic.
    """

    dim: int
    noise_dim: int
    drift: object
    diffusion_apply: object
    post_step: object = None
    guard_stat: object = None
    guard_threshold: float | None = None
    step_diagnostic: object = None
    tag: str = ""


@dataclass
class TrajectoryBatch:
    """Recorded states of a batch of trajectories on a common time grid."""

    times: np.ndarray          # (T,)
    states: np.ndarray         # (B, T, dim)
    seeds: list                # per-trajectory spawn keys
    meta: dict
    diagnostics: dict = field(default_factory=dict)

    def at_time(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded")
        return self.states[:, idx, :]


class _StepCache:
    """Memo for per-step operator assembly shared by drift and diffusion."""

    __slots__ = ("states", "t", "value")

    def __init__(self):
        self.states = None
        self.t = None
        self.value = None

    def get(self, states, t):
        if self.states is states and self.t == t:
            return self.value
        return None

    def put(self, states, t, value):
        self.states, self.t, self.value = states, t, value
        return value


# -- integrator ----------------------------------------------------------------

def _seed_sequences(seed, indices) -> list:
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    prefix = tuple(base.spawn_key)
    return [np.random.SeedSequence(entropy=base.entropy, spawn_key=prefix + (int(i),))
            for i in indices]


def _record_steps(n_steps: int, dt: float, record_times, record_every) -> dict:
    steps = set()
    if record_times is not None:
        for t in record_times:
            idx = int(round(t / dt))
            if abs(idx * dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= idx <= n_steps:
                raise ValueError(f"record time {t} is not on the dt={dt} grid")
            steps.add(idx)
    if record_every is not None:
        steps.update(range(0, n_steps + 1, int(record_every)))
        steps.add(n_steps)
    if not steps:
        steps.add(n_steps)
    return {s: i for i, s in enumerate(sorted(steps))}


def integrate_batch(system: SdeSystem, x0: np.ndarray, dt: float, horizon: float,
                    seed, record_times=None, record_every=None,
                    chunk_target: int = 4_000_000, traj_indices=None) -> TrajectoryBatch:
    """Euler-Maruyama integration of a batch of trajectories.

    x0 has shape (B, dim).  Trajectory i consumes the stream derived from
    (seed, traj_indices[i]); the default indices are 0..B-1, so a trajectory
    is bit-identical whether run alone (with its index) or inside the batch.
    Raises NonFinite if a state leaves the finite range and StepRejected if
    post_step fails.
    """
    if dt <= 0.0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a multiple of dt")
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 2 or x0.shape[1] != system.dim:
        raise ValueError(f"x0 must have shape (B, {system.dim})")
    B = x0.shape[0]
    rec = _record_steps(n_steps, dt, record_times, record_every)
    out = np.empty((B, len(rec), system.dim))
    seqs = _seed_sequences(seed, range(B) if traj_indices is None else traj_indices)
    if len(seqs) != B:
        raise ValueError("traj_indices must match the batch size")
    gens = [np.random.Generator(np.random.Philox(s)) for s in seqs]
    sqrt_dt = np.sqrt(dt)
    states = x0.copy()
    if 0 in rec:
        out[:, rec[0], :] = states
    diag = {"min_guard_stat": np.inf, "max_guard_stat": -np.inf, "guard_excursion_steps": 0}
    if system.guard_stat is not None:
        g0 = system.guard_stat(states)
        diag["min_guard_stat"] = float(np.min(g0))
        diag["max_guard_stat"] = float(np.max(g0))
    chunk = max(1, min(n_steps, chunk_target // max(B * system.noise_dim, 1)))
    noise = np.empty((B, chunk, system.noise_dim))
    step = 0
    while step < n_steps:
        this = min(chunk, n_steps - step)
        for i, gen in enumerate(gens):
            noise[i, :this] = gen.standard_normal((this, system.noise_dim))
        for j in range(this):
            t = step * dt
            prop = states + system.drift(states, t) * dt \
                + sqrt_dt * system.diffusion_apply(states, t, noise[:, j])
            if system.step_diagnostic is not None:
                for key, val in system.step_diagnostic(prop).items():
                    diag[key] = max(diag.get(key, -np.inf), float(val))
            if system.post_step is not None:
                try:
                    prop = system.post_step(prop)
                except OrbitLangevinError as exc:
                    raise StepRejected(f"post_step failed at step {step + 1}: {exc}") from exc
            if not np.all(np.isfinite(prop)):
                bad = int(np.argmax(~np.all(np.isfinite(prop), axis=1)))
                raise NonFinite(f"trajectory {bad} left the finite range at step {step + 1}")
            states = prop
            step += 1
            if system.guard_stat is not None:
                gs = system.guard_stat(states)
                diag["min_guard_stat"] = min(diag["min_guard_stat"], float(np.min(gs)))
                diag["max_guard_stat"] = max(diag["max_guard_stat"], float(np.max(gs)))
                if system.guard_threshold is not None:
                    diag["guard_excursion_steps"] += int(np.sum(gs < system.guard_threshold))
            if step in rec:
                out[:, rec[step], :] = states
    times = np.array(sorted(rec)) * dt
    meta = {"dt": dt, "horizon": horizon, "system": system.tag, "n_steps": n_steps}
    return TrajectoryBatch(times=times, states=out,
                           seeds=[tuple(s.spawn_key) for s in seqs],
                           meta=meta, diagnostics=diag)


def integrate(system: SdeSystem, x0: np.ndarray, dt: float, horizon: float, seed,
              record_every: int = 1) -> TrajectoryBatch:
    """Single-trajectory integration (batch of one), recording every step."""
    x0 = np.asarray(x0, dtype=float)
    return integrate_batch(system, x0[None, :], dt, horizon, seed, record_every=record_every)


def integrate_refined_pair(system: SdeSystem, x0: np.ndarray, dt: float, horizon: float,
                           seed, record_times) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """Integrate at dt and dt/2 driven by one shared Brownian path.

    The coarse step consumes the sum of two fine increments (scaled back to a
    unit normal), so the two resolutions differ only by discretization error.
    Used by the step-size robustness checks.
    """
    n_coarse = int(round(horizon / dt))
    if abs(n_coarse * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a multiple of dt")
    x0 = np.array(x0, dtype=float)
    B = x0.shape[0]
    fine_dt = dt / 2.0
    rec_c = _record_steps(n_coarse, dt, record_times, None)
    rec_f = _record_steps(2 * n_coarse, fine_dt, record_times, None)
    out_c = np.empty((B, len(rec_c), system.dim))
    out_f = np.empty((B, len(rec_f), system.dim))
    seqs = _seed_sequences(seed, range(B))
    gens = [np.random.Generator(np.random.Philox(s)) for s in seqs]
    coarse = x0.copy()
    fine = x0.copy()
    if 0 in rec_c:
        out_c[:, rec_c[0], :] = coarse
    if 0 in rec_f:
        out_f[:, rec_f[0], :] = fine
    noise = np.empty((B, 2, system.noise_dim))
    for step in range(n_coarse):
        for i, gen in enumerate(gens):
            noise[i] = gen.standard_normal((2, system.noise_dim))
        for sub in range(2):
            t_f = (2 * step + sub) * fine_dt
            fine = fine + system.drift(fine, t_f) * fine_dt \
                + np.sqrt(fine_dt) * system.diffusion_apply(fine, t_f, noise[:, sub])
            if system.post_step is not None:
                fine = system.post_step(fine)
            if (2 * step + sub + 1) in rec_f:
                out_f[:, rec_f[2 * step + sub + 1], :] = fine
        xi_c = (noise[:, 0] + noise[:, 1]) / SQRT2
        t_c = step * dt
        coarse = coarse + system.drift(coarse, t_c) * dt \
            + np.sqrt(dt) * system.diffusion_apply(coarse, t_c, xi_c)
        if system.post_step is not None:
            coarse = system.post_step(coarse)
        if (step + 1) in rec_c:
            out_c[:, rec_c[step + 1], :] = coarse
    keys = [tuple(s.spawn_key) for s in seqs]
    batch_c = TrajectoryBatch(np.array(sorted(rec_c)) * dt, out_c, keys,
                              {"dt": dt, "horizon": horizon, "system": system.tag})
    batch_f = TrajectoryBatch(np.array(sorted(rec_f)) * fine_dt, out_f, keys,
                              {"dt": fine_dt, "horizon": horizon, "system": system.tag})
    return batch_c, batch_f


# -- smooth profiles -----------------------------------------------------------

def smoothstep(u: np.ndarray) -> np.ndarray:
    """Quintic polynomial ramp, 0 -> 1 on [0, 1] with vanishing 1st/2nd derivatives."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def bump_profile(lo: float, hi: float, ramp_frac: float = 0.25):
    """Bump supported on [lo, hi], equal to 1 on the inner plateau."""
    if not 0.0 < ramp_frac <= 0.5:
        raise ValueError("ramp_frac must lie in (0, 0.5]")
    w = ramp_frac * (hi - lo)

    def bump(s):
        s = np.asarray(s, dtype=float)
        return smoothstep((s - lo) / w) * smoothstep((hi - s) / w)

    return bump


def outer_bump_profile(lo: float, hi: float, pad: float):
    """Bump equal to 1 on all of [lo, hi], supported on [lo - pad, hi + pad]."""
    if pad <= 0.0:
        raise ValueError("pad must be positive")

    def bump(s):
        s = np.asarray(s, dtype=float)
        return smoothstep((s - (lo - pad)) / pad) * smoothstep((hi + pad - s) / pad)

    return bump


@dataclass(frozen=True)
class StationaryProfile:
    """Plateau profile phi(v) of the log orbit volume: 1 below tau0, epsilon above tau1."""

    epsilon: float
    tau0: float
    tau1: float

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        ramp = smoothstep((v - self.tau0) / (self.tau1 - self.tau0))
        return 1.0 + (self.epsilon - 1.0) * ramp


# -- invariant potentials --------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Invariant potential with noise profiles.

    f, grad_f, alpha, beta and bump are batched maps of the state; all are
    functions of invariant statistics (coordinate norm for the potential,
    the action's regularity statistic for the noise profiles), hence
    invariant under the group by construction.  bump is 1 wherever
    alpha != beta and is compactly supported inside the regular set.
    """

    f: object
    grad_f: object
    alpha: object
    beta: object
    bump: object
    f_radial: object
    f_radial_prime: object
    meta: dict


def make_potential_spec(action: GroupAction, potential_kind: str = "quadratic",
                        coeff: float = 1.0, quartic: float = 0.0,
                        alpha_const: float = 1.0, beta_c: float = 0.5,
                        bump_lo: float = 0.8, bump_hi: float = 2.5,
                        ramp_frac: float = 0.25, phi_pad: float = 0.3) -> PotentialSpec:
    """Quadratic/quartic invariant potential with a bump-shaped dip in beta."""
    if potential_kind not in ("quadratic", "quartic"):
        raise ValueError(f"unknown potential kind {potential_kind!r}")
    if potential_kind == "quadratic":
        quartic = 0.0
    elif quartic == 0.0:
        quartic = 1.0
    if beta_c < 0.0 or beta_c > alpha_const:
        raise ValueError("need 0 <= beta_c <= alpha_const so beta stays nonnegative")
    dip = bump_profile(bump_lo, bump_hi, ramp_frac)
    phi = outer_bump_profile(bump_lo, bump_hi, phi_pad)
    stat = action.regularity_stat

    def f(X):
        n2 = np.sum(np.asarray(X, dtype=float) ** 2, axis=-1)
        return 0.5 * coeff * n2 + 0.25 * quartic * n2 * n2

    def grad_f(X):
        X = np.asarray(X, dtype=float)
        n2 = np.sum(X * X, axis=-1, keepdims=True)
        return (coeff + quartic * n2) * X

    def f_radial(r):
        r = np.asarray(r, dtype=float)
        return 0.5 * coeff * r**2 + 0.25 * quartic * r**4

    def f_radial_prime(r):
        r = np.asarray(r, dtype=float)
        return coeff * r + quartic * r**3

    def alpha(X):
        return np.full(np.atleast_2d(X).shape[0], float(alpha_const))

    def beta(X):
        return alpha_const - beta_c * dip(stat(X))

    def bump(X):
        return phi(stat(X))

    meta = {"potential_kind": potential_kind, "coeff": coeff, "quartic": quartic,
            "alpha_const": alpha_const, "beta_c": beta_c,
            "bump_lo": bump_lo, "bump_hi": bump_hi,
            "ramp_frac": ramp_frac, "phi_pad": phi_pad}
    return PotentialSpec(f=f, grad_f=grad_f, alpha=alpha, beta=beta, bump=bump,
                         f_radial=f_radial, f_radial_prime=f_radial_prime, meta=meta)


def stationary_potential_spec(action: GroupAction, profile: StationaryProfile,
                              coeff: float = 1.0) -> PotentialSpec:
    """alpha = 1 and beta = phi(log vol O_x), the identity-diffusion setup."""
    from .geometry import log_orbit_volume_batch
    base = make_potential_spec(action, coeff=coeff, beta_c=0.0)

    def beta(X):
        return profile(log_orbit_volume_batch(action, X))

    meta = dict(base.meta)
    meta.update({"epsilon": profile.epsilon, "tau0": profile.tau0, "tau1": profile.tau1,
                 "beta_c": None})
    return PotentialSpec(f=base.f, grad_f=base.grad_f, alpha=base.alpha, beta=beta,
                         bump=base.bump, f_radial=base.f_radial,
                         f_radial_prime=base.f_radial_prime, meta=meta)


# -- the state-space systems ------------------------------------------------------

def make_projected_system(action: GroupAction, spec: PotentialSpec) -> SdeSystem:
    """Langevin dynamics with noise split along orbit-normal/tangent directions."""
    def drift(X, t):
        return -spec.grad_f(X)

    def diffusion(X, t, xi):
        a = spec.alpha(X)
        out = a[:, None] * xi
        db = spec.beta(X) - a
        mask = db != 0.0
        if np.any(mask):
            out[mask] += db[mask][:, None] * tangent_project(action, X[mask], xi[mask])
        return SQRT2 * out

    return SdeSystem(dim=action.ambient_dim, noise_dim=action.ambient_dim,
                     drift=drift, diffusion_apply=diffusion,
                     guard_stat=action.regularity_stat, guard_threshold=SINGULAR_GUARD,
                     tag="projected")


def make_isotropic_curvature_system(action: GroupAction, spec: PotentialSpec,
                                    curvature: bool = True,
                                    source: str = "closed_form") -> SdeSystem:
    """Isotropic-noise dynamics with the orbit-volume drift correction.

    curvature=False deletes the correction (the negative-control dynamics).
    """
    def drift(X, t):
        g = spec.grad_f(X)
        if curvature:
            a = spec.alpha(X)
            b = spec.beta(X)
            coef = a * a - b * b
            mask = coef != 0.0
            if np.any(mask):
                stats = action.regularity_stat(X[mask])
                if np.any(stats < SINGULAR_GUARD):
                    raise SingularOrbit("volume drift requested inside the singular guard zone")
                g = g.copy()
                g[mask] += coef[mask][:, None] * grad_log_volume_batch(action, X[mask], source)
        return -g

    def diffusion(X, t, xi):
        return SQRT2 * spec.alpha(X)[:, None] * xi

    tag = "isotropic_curvature" if curvature else "isotropic_no_curvature"
    return SdeSystem(dim=action.ambient_dim, noise_dim=action.ambient_dim,
                     drift=drift, diffusion_apply=diffusion,
                     guard_stat=action.regularity_stat, guard_threshold=SINGULAR_GUARD,
                     tag=tag)


def make_auxiliary_system(action: GroupAction, spec: PotentialSpec,
                          source: str = "closed_form") -> SdeSystem:
    """The blended dynamics with extra tangential noise phi^2 (alpha^2 + beta^2)."""
    def scale_of(X):
        phi = spec.bump(X)
        a = spec.alpha(X)
        b = spec.beta(X)
        return phi * phi * (a * a + b * b), a, b

    def drift(X, t):
        g = spec.grad_f(X)
        sc, _, _ = scale_of(X)
        mask = sc > 0.0
        if np.any(mask):
            stats = action.regularity_stat(X[mask])
            if np.any(stats < SINGULAR_GUARD):
                raise SingularOrbit("volume drift requested inside the singular guard zone")
            g = g.copy()
            g[mask] += sc[mask][:, None] * grad_log_volume_batch(action, X[mask], source)
        return -g

    def diffusion(X, t, xi):
        sc, a, b = scale_of(X)
        out = a[:, None] * xi
        dq = np.sqrt(b * b + sc) - a
        mask = dq != 0.0
        if np.any(mask):
            out[mask] += dq[mask][:, None] * tangent_project(action, X[mask], xi[mask])
        return SQRT2 * out

    return SdeSystem(dim=action.ambient_dim, noise_dim=action.ambient_dim,
                     drift=drift, diffusion_apply=diffusion,
                     guard_stat=action.regularity_stat, guard_threshold=SINGULAR_GUARD,
                     tag="auxiliary")


def make_fully_projected_system(action: GroupAction, spec: PotentialSpec) -> SdeSystem:
    """Noise confined to orbit-normal directions only (exploratory dynamics)."""
    def drift(X, t):
        return -spec.grad_f(X)

    def diffusion(X, t, xi):
        p = xi - tangent_project(action, X, xi)
        return SQRT2 * spec.alpha(X)[:, None] * p

    return SdeSystem(dim=action.ambient_dim, noise_dim=action.ambient_dim,
                     drift=drift, diffusion_apply=diffusion,
                     guard_stat=action.regularity_stat, guard_threshold=SINGULAR_GUARD,
                     tag="fully_projected")


def radial_oracle_system(f_radial_prime, alpha_r, beta_r, d: int) -> SdeSystem:
    """1D radial reduction of the rotation-action dynamics, with reflecting guard."""
    if d < 2:
        raise ValueError("radial reduction needs d >= 2")
    guard = 1e-6

    def drift(R, t):
        r = np.maximum(R[:, 0], guard)
        return (-f_radial_prime(r) + beta_r(r) ** 2 * (d - 1) / r)[:, None]

    def diffusion(R, t, xi):
        return SQRT2 * alpha_r(R[:, 0])[:, None] * xi

    def post(R):
        return guard + np.abs(R - guard)

    return SdeSystem(dim=1, noise_dim=1, drift=drift, diffusion_apply=diffusion,
                     post_step=post, tag="radial_oracle")


# -- group-side systems ------------------------------------------------------------

def _group_noise_to_matrices(action: GroupAction, g: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Map algebra coordinates to tangent matrices at g (composition side aware)."""
    w = np.einsum("bk,kpq->bpq", coeffs, action.lie_basis)
    if action.comp_side == "left":
        return w @ g
    return g @ w


def _gram_defect(g: np.ndarray) -> float:
    d = g.shape[-1]
    gram = np.einsum("bji,bjk->bik", g, g) - np.eye(d)
    return float(np.max(np.sqrt(np.sum(gram * gram, axis=(1, 2)))))


@dataclass(frozen=True)
class GroupBmSystem:
    """Group-valued diffusion whose image through the anchor is orbit Brownian motion."""

    system: SdeSystem
    action: GroupAction
    anchor: np.ndarray

    def image(self, states: np.ndarray) -> np.ndarray:
        d = self.action.matrix_dim
        g = states.reshape(states.shape[0], d, d)
        pts = np.broadcast_to(self.anchor, (states.shape[0], self.action.ambient_dim))
        return self.action.apply_batch(g, pts)


def make_orbit_bm_system(action: GroupAction, x_anchor: np.ndarray,
                         diffusion_const: float = 1.0) -> GroupBmSystem:
    """Group process g_t with g_t . x_anchor a Brownian motion on the orbit."""
    anchor = np.asarray(x_anchor, dtype=float)
    if diffusion_const < 0.0:
        raise ValueError("diffusion_const must be nonnegative")
    d = action.matrix_dim
    k = action.n_generators
    cache = _StepCache()

    def ops(states, t):
        hit = cache.get(states, t)
        if hit is not None:
            return hit
        g = states.reshape(states.shape[0], d, d)
        pts = np.broadcast_to(anchor, (states.shape[0], action.ambient_dim))
        scale = np.full(states.shape[0], float(diffusion_const))
        return cache.put(states, t, (g, coupling_operators_batch(action, g, pts, scale)))

    def drift(states, t):
        _, (_, v0, v1) = ops(states, t)
        return (v0 + v1).reshape(states.shape[0], d * d)

    def diffusion(states, t, xi):
        g, (j0, _, _) = ops(states, t)
        z = np.einsum("bkl,bl->bk", j0, xi)
        return SQRT2 * _group_noise_to_matrices(action, g, z).reshape(states.shape[0], d * d)

    def step_diag(prop):
        g = prop.reshape(prop.shape[0], d, d)
        return {"max_pre_retraction_defect": _gram_defect(g)}

    def post(states):
        g = states.reshape(states.shape[0], d, d)
        return polar_factor(g).reshape(states.shape[0], d * d)

    def guard(states):
        g = states.reshape(states.shape[0], d, d)
        pts = np.broadcast_to(anchor, (states.shape[0], action.ambient_dim))
        return np.linalg.norm(action.apply_batch(g, pts), axis=-1)

    system = SdeSystem(dim=d * d, noise_dim=k, drift=drift, diffusion_apply=diffusion,
                       post_step=post, guard_stat=guard, step_diagnostic=step_diag,
                       tag="orbit_bm")
    return GroupBmSystem(system=system, action=action, anchor=anchor)


@dataclass(frozen=True)
class CoupledSystem:
    """Joint (state, group) diffusion whose image g_t . X_t blends tangential noise."""

    system: SdeSystem
    action: GroupAction
    base: str

    def split(self, states: np.ndarray):
        n = self.action.ambient_dim
        d = self.action.matrix_dim
        return states[:, :n], states[:, n:].reshape(states.shape[0], d, d)

    def image(self, states: np.ndarray) -> np.ndarray:
        x, g = self.split(states)
        return self.action.apply_batch(g, x)

    def initial_state(self, x0: np.ndarray) -> np.ndarray:
        d = self.action.matrix_dim
        eye = np.broadcast_to(np.eye(d).reshape(-1), (x0.shape[0], d * d))
        return np.concatenate([np.asarray(x0, dtype=float), eye], axis=1)


def make_coupled_system(action: GroupAction, spec: PotentialSpec, base: str = "projected",
                        source: str = "closed_form") -> CoupledSystem:
    """Couple a state system with the group process that adds tangential noise.

    base selects which dynamics the state component follows; the group noise
    scale is phi^2 (alpha^2 + beta^2) over the projected base and
    2 phi^2 beta^2 over the isotropic base, so the image matches the blended
    dynamics in law either way.
    """
    if base not in ("projected", "isotropic"):
        raise ValueError(f"unknown base {base!r}")
    if base == "projected":
        base_system = make_projected_system(action, spec)
    else:
        base_system = make_isotropic_curvature_system(action, spec, source=source)
    n = action.ambient_dim
    d = action.matrix_dim
    k = action.n_generators
    cache = _StepCache()

    def scale_of(x):
        phi = spec.bump(x)
        b = spec.beta(x)
        if base == "projected":
            a = spec.alpha(x)
            return phi * phi * (a * a + b * b)
        return 2.0 * phi * phi * b * b

    def ops(states, t):
        hit = cache.get(states, t)
        if hit is not None:
            return hit
        x = states[:, :n]
        g = states[:, n:].reshape(states.shape[0], d, d)
        ops_gxk = coupling_operators_batch(action, g, x, scale_of(x))
        return cache.put(states, t, (x, g, ops_gxk))

    def drift(states, t):
        x, _, (_, v0, v1) = ops(states, t)
        out = np.empty_like(states)
        out[:, :n] = base_system.drift(x, t)
        out[:, n:] = (v0 + v1).reshape(states.shape[0], d * d)
        return out

    def diffusion(states, t, xi):
        x, g, (j0, _, _) = ops(states, t)
        out = np.empty_like(states)
        out[:, :n] = base_system.diffusion_apply(x, t, xi[:, :n])
        z = np.einsum("bkl,bl->bk", j0, xi[:, n:])
        out[:, n:] = SQRT2 * _group_noise_to_matrices(action, g, z).reshape(states.shape[0], d * d)
        return out

    def step_diag(prop):
        g = prop[:, n:].reshape(prop.shape[0], d, d)
        return {"max_pre_retraction_defect": _gram_defect(g)}

    def post(states):
        out = states.copy()
        g = states[:, n:].reshape(states.shape[0], d, d)
        out[:, n:] = polar_factor(g).reshape(states.shape[0], d * d)
        return out

    def guard(states):
        return action.regularity_stat(states[:, :n])

    system = SdeSystem(dim=n + d * d, noise_dim=n + k, drift=drift,
                       diffusion_apply=diffusion, post_step=post,
                       guard_stat=guard, guard_threshold=SINGULAR_GUARD,
                       step_diagnostic=step_diag, tag=f"coupled_{base}")
    return CoupledSystem(system=system, action=action, base=base)


# -- invariant initial conditions -----------------------------------------------------

def sample_invariant_initial(action: GroupAction, kind: str, rng: np.random.Generator,
                             n_samples: int, shell_point: np.ndarray | None = None) -> np.ndarray:
    """Draws from a group-invariant initial law.

    isotropic_gaussian is the standard normal in the isometric coordinates
    (GOE-consistent scaling for the symmetric-matrix action); uniform_shell
    is the Haar orbit of a fixed point.
    """
    if kind == "isotropic_gaussian":
        return rng.standard_normal((n_samples, action.ambient_dim))
    if kind == "uniform_shell":
        if shell_point is None:
            raise ValueError("uniform_shell needs a shell_point")
        pts = np.broadcast_to(np.asarray(shell_point, dtype=float),
                              (n_samples, action.ambient_dim))
        gs = haar_matrices(action, rng, n_samples)
        return action.apply_batch(gs, pts)
    raise ValueError(f"unknown initial kind {kind!r}")
