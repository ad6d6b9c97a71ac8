"""Orbit curvature, log orbit volumes, and the group-coupling operators.

The central identity is that the mean curvature of a group orbit equals the
negative gradient of the log orbit volume; closed-form volumes exist for all
three supported actions and the curvature-trace route provides an independent
second implementation that the tests cross-validate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import GroupAction, GroupElement, normal_project
from .errors import NotTangent, RankDeficient, SingularOrbit

SINGULAR_GUARD = 1e-6
PINV_TOL = 1e-8
FD_STEP = 1e-4


@dataclass(frozen=True)
class CurvatureData:
    """Mean curvature and log-volume gradient of the orbit at one point."""

    base_point: np.ndarray
    mean_curvature: np.ndarray
    grad_log_volume: np.ndarray
    source: str


@dataclass(frozen=True)
class CouplingOperators:
    """Operators of the group-side diffusion at (g, x).

    L_matrix maps algebra coordinates (trace-orthonormal basis of T_g G,
    composed on the action side) to ambient tangent vectors at g.x; J0 is
    the square-root pseudo-inverse of L^T L scaled by sqrt(noise_scale);
    V0 is the group-space drift matrix, V1 the tangential correction in
    algebra coordinates.  v0_image is the second-order drift of the image
    map in point coordinates (equal to V0 @ x for the rotation action).
    """

    L_matrix: np.ndarray
    L_pinv: np.ndarray
    J0: np.ndarray
    V0: np.ndarray
    V1: np.ndarray
    v0_image: np.ndarray
    singular_values: np.ndarray
    pinv_tol: float


def second_fundamental_form_orbit(action: GroupAction, x: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Normal acceleration P_x xi(omega, xi(omega, x)) of the orbit through x."""
    x = np.asarray(x, dtype=float)
    first = action.infinitesimal_action(omega, x)
    second = action.infinitesimal_action(omega, first)
    return normal_project(action, x[None, :], second[None, :])[0]


def second_fundamental_form_group(g, B: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Second fundamental form B g^T B of the orthogonal group at g."""
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    B = np.asarray(B, dtype=float)
    skew = g_mat.T @ B
    defect = np.linalg.norm(skew + skew.T)
    if defect > tol:
        raise NotTangent(f"g^T B fails antisymmetry by {defect:.3e}")
    return B @ g_mat.T @ B


def _orbit_svd(action: GroupAction, x: np.ndarray):
    xi = action.xi_all(np.asarray(x, dtype=float)[None, :])[0]
    u, s, vt = np.linalg.svd(xi, full_matrices=False)
    return xi, u, s, vt


def mean_curvature(action: GroupAction, x: np.ndarray) -> CurvatureData:
    """Mean curvature via the trace over an orthonormalized orbit frame."""
    x = np.asarray(x, dtype=float)
    _, _, s, vt = _orbit_svd(action, x)
    tol = PINV_TOL * max(float(s[0]) if s.size else 0.0, 1e-300)
    m = int(np.sum(s > tol))
    if m != action.max_orbit_dim:
        raise SingularOrbit(f"orbit dimension {m} below maximal {action.max_orbit_dim}")
    h = np.zeros_like(x)
    for i in range(m):
        omega = np.einsum("j,jpq->pq", vt[i], action.lie_basis) / s[i]
        h += second_fundamental_form_orbit(action, x, omega)
    return CurvatureData(base_point=x, mean_curvature=h, grad_log_volume=-h,
                         source="curvature_trace")


def log_orbit_volume(action: GroupAction, x: np.ndarray) -> float:
    """Log orbit volume up to the action's additive constant."""
    x = np.asarray(x, dtype=float)
    stat = float(action.regularity_stat(x[None])[0])
    if stat < SINGULAR_GUARD:
        raise SingularOrbit(f"regularity statistic {stat:.3e} below guard {SINGULAR_GUARD}")
    kind = action.action_kind
    d = action.matrix_dim
    if kind == "so_d_rotation":
        return (d - 1) * float(np.log(np.linalg.norm(x)))
    if kind == "conjugation_sym":
        from .actions import coords_to_sym
        lam = np.linalg.eigvalsh(coords_to_sym(x, d))
        diffs = lam[None, :] - lam[:, None]
        iu = np.triu_indices(d, k=1)
        return float(np.sum(np.log(np.abs(diffs[iu]))))
    sv = np.linalg.svd(x.reshape(d, d), compute_uv=False)
    iu = np.triu_indices(d, k=1)
    pair = sv[:, None] ** 2 + sv[None, :] ** 2
    return float(0.5 * np.sum(np.log(pair[iu])))


def log_orbit_volume_batch(action: GroupAction, X: np.ndarray) -> np.ndarray:
    """Batched log orbit volume; no singular guard (callers gate usage)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    kind = action.action_kind
    d = action.matrix_dim
    if kind == "so_d_rotation":
        r = np.maximum(np.linalg.norm(X, axis=-1), 1e-300)
        return (d - 1) * np.log(r)
    if kind == "conjugation_sym":
        from .actions import coords_to_sym
        lam = np.linalg.eigvalsh(coords_to_sym(X, d))
        diffs = np.abs(lam[:, None, :] - lam[:, :, None])
        iu = np.triu_indices(d, k=1)
        return np.sum(np.log(np.maximum(diffs[:, iu[0], iu[1]], 1e-300)), axis=-1)
    sv = np.linalg.svd(X.reshape(-1, d, d), compute_uv=False)
    pair = sv[:, :, None] ** 2 + sv[:, None, :] ** 2
    iu = np.triu_indices(d, k=1)
    return 0.5 * np.sum(np.log(np.maximum(pair[:, iu[0], iu[1]], 1e-300)), axis=-1)


def grad_log_volume_batch(action: GroupAction, X: np.ndarray, source: str = "closed_form") -> np.ndarray:
    """Batched gradient of the log orbit volume.

    closed_form uses eigen/singular-value perturbation formulas; the
    curvature_trace route returns minus the mean curvature computed through
    the orbit frame.  Denominators are clamped, so callers must gate usage
    to regular points.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if source == "curvature_trace":
        t0 = _second_order_trace(action, X)
        return -normal_project(action, X, t0)
    if source != "closed_form":
        raise ValueError(f"unknown curvature source {source!r}")
    kind = action.action_kind
    d = action.matrix_dim
    if kind == "so_d_rotation":
        nrm2 = np.maximum(np.sum(X * X, axis=-1, keepdims=True), 1e-300)
        return (d - 1) * X / nrm2
    if kind == "conjugation_sym":
        from .actions import coords_to_sym, sym_to_coords
        lam, vec = np.linalg.eigh(coords_to_sym(X, d))
        diffs = lam[:, :, None] - lam[:, None, :]
        safe = np.where(np.abs(diffs) < 1e-30, np.inf, diffs)
        coef = np.sum(1.0 / safe, axis=-1)  # c_i = sum_{j != i} 1/(lam_i - lam_j)
        grad = np.einsum("bik,bk,bjk->bij", vec, coef, vec)
        return sym_to_coords(grad)
    u, sv, vt = np.linalg.svd(X.reshape(-1, d, d), full_matrices=False)
    pair = np.maximum(sv[:, :, None] ** 2 + sv[:, None, :] ** 2, 1e-300)
    w = sv * (np.sum(1.0 / pair, axis=-1) - 0.5 / np.maximum(sv**2, 1e-300))
    grad = np.einsum("bik,bk,bkj->bij", u, w, vt)
    return grad.reshape(X.shape[0], d * d)


def grad_log_orbit_volume(action: GroupAction, x: np.ndarray, source: str = "closed_form") -> np.ndarray:
    """Gradient of the log orbit volume at one regular point."""
    x = np.asarray(x, dtype=float)
    stat = float(action.regularity_stat(x[None])[0])
    if stat < SINGULAR_GUARD:
        raise SingularOrbit(f"regularity statistic {stat:.3e} below guard {SINGULAR_GUARD}")
    if source == "curvature_trace":
        return mean_curvature(action, x).grad_log_volume
    return grad_log_volume_batch(action, x[None], source=source)[0]


def _second_order_trace(action: GroupAction, X: np.ndarray, scale: np.ndarray | None = None):
    """sum_i sigma_i^{-2} xi(W_i, xi(W_i, x)) over the orbit-map singular frame."""
    xi = action.xi_all(X)
    _, s, vt = np.linalg.svd(xi, full_matrices=False)
    m = action.max_orbit_dim
    sm = np.maximum(s[..., :m], 1e-300)
    vm = vt[..., :m, :]
    mrep = np.einsum("bmj,jnu->bmnu", vm, action.rep)
    first = np.einsum("bmnu,bu->bmn", mrep, X)
    second = np.einsum("bmnu,bmu->bmn", mrep, first)
    t0 = np.einsum("bm,bmn->bn", sm**-2, second)
    if scale is not None:
        t0 = t0 * scale[:, None]
    return t0


def _side_mult(action: GroupAction, S: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Translate an algebra-side matrix to T_g-side per the action's composition side."""
    if action.comp_side == "left":
        return S @ g
    return g @ S


def coupling_operators_batch(action: GroupAction, g: np.ndarray, X: np.ndarray,
                             scale: np.ndarray, pinv_tol: float = PINV_TOL):
    """Batched coupling operators; rows with scale == 0 get zero operators.

    Returns (J0, V0, V1mat) with shapes (B, k, k), (B, d, d), (B, d, d).
    Raises RankDeficient when any active row's truncated rank differs from
    the maximal orbit dimension.
    """
    g = np.asarray(g, dtype=float)
    X = np.asarray(X, dtype=float)
    scale = np.asarray(scale, dtype=float)
    B = X.shape[0]
    k = action.n_generators
    d = action.matrix_dim
    J0 = np.zeros((B, k, k))
    V0 = np.zeros((B, d, d))
    V1 = np.zeros((B, d, d))
    active = scale > 0.0
    if not np.any(active):
        return J0, V0, V1
    ga, xa, sa = g[active], X[active], scale[active]
    y = action.apply_batch(ga, xa)
    xi = action.xi_all(y)
    u, s, vt = np.linalg.svd(xi, full_matrices=False)
    m = action.max_orbit_dim
    ranks = np.sum(s > pinv_tol * np.maximum(s[..., :1], 1e-300), axis=-1)
    if np.any(ranks != m):
        bad = int(np.argmax(ranks != m))
        raise RankDeficient(f"truncated rank {int(ranks[bad])} != orbit dimension {m}")
    um, sm, vm = u[..., :m], s[..., :m], vt[..., :m, :]
    inv = 1.0 / sm
    J0a = np.einsum("bmk,bm,bml->bkl", vm, inv, vm) * np.sqrt(sa)[:, None, None]
    om = np.einsum("bmj,jpq->bmpq", vm, action.lie_basis)
    om2 = np.einsum("bmpq,bmqr->bmpr", om, om)
    s0 = np.einsum("bm,bmpq->bpq", inv**2, om2)
    V0a = _side_mult(action, s0, ga) * sa[:, None, None]
    mrep = np.einsum("bmj,jnu->bmnu", vm, action.rep)
    first = np.einsum("bmnu,bu->bmn", mrep, y)
    second = np.einsum("bmnu,bmu->bmn", mrep, first)
    t = np.einsum("bm,bmn->bn", inv**2, second) * sa[:, None]
    ut = np.einsum("bnm,bn->bm", um, t)
    v1 = -np.einsum("bmk,bm->bk", vm, inv * ut)
    w1 = np.einsum("bk,kpq->bpq", v1, action.lie_basis)
    V1a = _side_mult(action, w1, ga)
    J0[active], V0[active], V1[active] = J0a, V0a, V1a
    return J0, V0, V1


def coupling_operators(action: GroupAction, g, x: np.ndarray, noise_scale: float,
                       pinv_tol: float = PINV_TOL) -> CouplingOperators:
    """Coupling operators at a single (g, x) with full inspection fields."""
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    if noise_scale < 0.0:
        raise ValueError("noise_scale must be nonnegative")
    y = action.apply_batch(g_mat, x[None])[0]
    xi = action.xi_all(y[None])[0]
    u, s, vt = np.linalg.svd(xi, full_matrices=False)
    tol = pinv_tol * max(float(s[0]) if s.size else 0.0, 1e-300)
    rank = int(np.sum(s > tol))
    if rank != action.max_orbit_dim:
        raise RankDeficient(
            f"truncated rank {rank} != orbit dimension {action.max_orbit_dim}")
    um, sm, vm = u[:, :rank], s[:rank], vt[:rank, :]
    inv = 1.0 / sm
    l_pinv = vm.T @ np.diag(inv) @ um.T
    j0 = np.sqrt(noise_scale) * (vm.T @ np.diag(inv) @ vm)
    v0 = np.zeros((action.matrix_dim, action.matrix_dim))
    t = np.zeros(action.ambient_dim)
    for i in range(rank):
        omega = np.einsum("j,jpq->pq", vm[i], action.lie_basis)
        v0 += inv[i] ** 2 * (omega @ omega)
        t += inv[i] ** 2 * action.infinitesimal_action(omega, action.infinitesimal_action(omega, y))
    v0 = noise_scale * _side_mult(action, v0, g_mat)
    t = noise_scale * t
    v1 = -l_pinv @ t
    return CouplingOperators(L_matrix=xi, L_pinv=l_pinv, J0=j0, V0=v0, V1=v1,
                             v0_image=t, singular_values=sm, pinv_tol=pinv_tol)


def hessian_identity_residual(action: GroupAction, grad_f, x: np.ndarray,
                              omega: np.ndarray, step: float | None = None) -> float:
    """Residual of the invariant-function Hessian identity along xi(omega, x).

    The Hessian is evaluated by central finite differences of the analytic
    gradient; the identity states hess[v, v] = -<grad, h_x(v, v)> for
    tangent v and invariant scalar functions.
    """
    x = np.asarray(x, dtype=float)
    v = action.infinitesimal_action(omega, x)
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return 0.0
    unit = v / vn
    h = (FD_STEP if step is None else step) * max(float(np.linalg.norm(x)), 1.0)
    hess_uu = float((grad_f(x + h * unit) - grad_f(x - h * unit)) @ unit) / (2.0 * h)
    hess_vv = vn**2 * hess_uu
    sff = second_fundamental_form_orbit(action, x, omega)
    return abs(hess_vv + float(grad_f(x) @ sff))


def fd_gradient(f, x: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central finite-difference gradient, for test oracles only."""
    x = np.asarray(x, dtype=float)
    h = (FD_STEP if step is None else step) * max(float(np.linalg.norm(x)), 1.0)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad
