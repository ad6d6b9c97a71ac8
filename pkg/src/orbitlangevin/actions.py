"""Isometric actions of closed subgroups of O(d) and their orbit projections.

Three concrete actions are provided, selected by string tag:

  so_d_rotation    SO(d) acting on R^d by matrix-vector multiplication
  conjugation_sym  O(d) acting on Sym(d) by M -> g^T M g
  right_mult       O(d) acting on R^{d x d} by M -> M g

Point spaces are always flat coordinate vectors.  Sym(d) uses the isometric
identification with R^{d(d+1)/2} (diagonal entries first, then sqrt(2)-scaled
off-diagonals) so the Euclidean inner product equals the trace inner product
and every group element acts as an orthogonal matrix on coordinates.  Square
matrices are flattened row-major, which is already isometric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonRetractable

ORTHO_TOL = 1e-10

ACTION_KINDS = ("so_d_rotation", "conjugation_sym", "right_mult")


def sym_to_coords(mats: np.ndarray) -> np.ndarray:
    """Isometric coordinates of symmetric matrices, shape (..., d, d) -> (..., n)."""
    d = mats.shape[-1]
    iu, ju = np.triu_indices(d, k=1)
    diag = mats[..., np.arange(d), np.arange(d)]
    off = mats[..., iu, ju] * np.sqrt(2.0)
    return np.concatenate([diag, off], axis=-1)


def coords_to_sym(vecs: np.ndarray, d: int) -> np.ndarray:
    """Inverse of sym_to_coords."""
    vecs = np.asarray(vecs, dtype=float)
    iu, ju = np.triu_indices(d, k=1)
    mats = np.zeros(vecs.shape[:-1] + (d, d))
    mats[..., np.arange(d), np.arange(d)] = vecs[..., :d]
    off = vecs[..., d:] / np.sqrt(2.0)
    mats[..., iu, ju] = off
    mats[..., ju, iu] = off
    return mats


def so_basis(d: int) -> np.ndarray:
    """Antisymmetric generators (E_ij - E_ji)/sqrt(2), orthonormal under tr(A^T B)."""
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    basis = np.zeros((len(pairs), d, d))
    for m, (i, j) in enumerate(pairs):
        basis[m, i, j] = 1.0 / np.sqrt(2.0)
        basis[m, j, i] = -1.0 / np.sqrt(2.0)
    return basis


@dataclass(frozen=True)
class GroupElement:
    """An orthogonal matrix representing one group element."""

    matrix: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("group element must be a square matrix")
        defect = np.linalg.norm(g.T @ g - np.eye(g.shape[0]))
        if defect > ORTHO_TOL:
            raise ValueError(f"matrix is not orthogonal: ||g^T g - I|| = {defect:.3e}")
        g.flags.writeable = False
        object.__setattr__(self, "matrix", g)

    @classmethod
    def identity(cls, d: int) -> "GroupElement":
        return cls(np.eye(d))


@dataclass(frozen=True)
class GroupAction:
    """An isometric action together with its Lie-algebra data.

    Fields
    ------
    ambient_dim : dimension n of the point coordinate space
    matrix_dim : size d of the orthogonal matrices
    lie_basis : (k, d, d) antisymmetric generators, trace-orthonormal
    rep : (k, n, n) matrices of the infinitesimal action on coordinates
    action_kind : one of ACTION_KINDS
    max_orbit_dim : dimension of the regular (maximal) orbits
    comp_side : which side exp(tW) composes with g so that the action of
        the product flows through the translated point ("left" for rotation,
        "right" for the matrix actions)
    special : True when Haar sampling is restricted to SO(d)
    """

    ambient_dim: int
    matrix_dim: int
    lie_basis: np.ndarray
    rep: np.ndarray
    action_kind: str
    max_orbit_dim: int
    comp_side: str
    special: bool

    @property
    def n_generators(self) -> int:
        return self.lie_basis.shape[0]

    # -- point-space action ------------------------------------------------

    def apply(self, g, x: np.ndarray) -> np.ndarray:
        """Apply a single group element to a single point (coordinates)."""
        g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
        x = np.asarray(x, dtype=float)
        if g_mat.shape != (self.matrix_dim, self.matrix_dim):
            raise ValueError("group element has wrong shape for this action")
        if x.shape != (self.ambient_dim,):
            raise ValueError("point has wrong shape for this action")
        return self.apply_batch(g_mat, x[None, :])[0]

    def apply_batch(self, g_mat: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Apply one group element (d, d) or a per-row batch (B, d, d) to rows of X."""
        d = self.matrix_dim
        kind = self.action_kind
        per_row = g_mat.ndim == 3
        if kind == "so_d_rotation":
            if per_row:
                return np.einsum("bij,bj->bi", g_mat, X)
            return X @ g_mat.T
        if kind == "conjugation_sym":
            mats = coords_to_sym(X, d)
            if per_row:
                out = np.einsum("bji,bjk,bkl->bil", g_mat, mats, g_mat)
            else:
                out = np.einsum("ji,bjk,kl->bil", g_mat, mats, g_mat)
            return sym_to_coords(out)
        # right_mult
        mats = X.reshape(X.shape[0], d, d)
        out = mats @ g_mat if per_row else mats @ g_mat[None]
        return out.reshape(X.shape[0], d * d)

    # -- infinitesimal action ----------------------------------------------

    def infinitesimal_action(self, omega: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Tangent vector xi(omega, x) of the flow exp(t*omega) through x."""
        coeffs = np.einsum("kij,ij->k", self.lie_basis, np.asarray(omega, dtype=float))
        gen = np.einsum("k,kij->ij", coeffs, self.rep)
        return gen @ np.asarray(x, dtype=float)

    def xi_all(self, X: np.ndarray) -> np.ndarray:
        """Matrix of the orbit map at each row of X: (B, n, k), column j = xi(B_j, x)."""
        return np.einsum("jnm,bm->bnj", self.rep, X)

    # -- invariant regularity statistic --------------------------------------

    def regularity_stat(self, X: np.ndarray) -> np.ndarray:
        """Invariant statistic whose smallness flags singular orbits.

        Radius for rotation, minimal eigenvalue gap for conjugation, minimal
        singular value for right multiplication.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        kind = self.action_kind
        d = self.matrix_dim
        if kind == "so_d_rotation":
            return np.linalg.norm(X, axis=-1)
        if kind == "conjugation_sym":
            evals = np.linalg.eigvalsh(coords_to_sym(X, d))
            return np.min(np.diff(evals, axis=-1), axis=-1)
        svals = np.linalg.svd(X.reshape(-1, d, d), compute_uv=False)
        return svals[:, -1]


def make_action(kind: str, dim: int) -> GroupAction:
    """Build one of the supported actions from its string tag and matrix size."""
    if kind not in ACTION_KINDS:
        raise ValueError(f"unknown action kind {kind!r}; expected one of {ACTION_KINDS}")
    if dim < 2:
        raise ValueError("matrix dimension must be at least 2")
    basis = so_basis(dim)
    k = basis.shape[0]
    if kind == "so_d_rotation":
        n = dim
        rep = basis.copy()
        max_orbit_dim = dim - 1
        side = "left"
        special = True
    elif kind == "conjugation_sym":
        n = dim * (dim + 1) // 2
        rep = _rep_from_map(basis, n, lambda B, M: M @ B - B @ M,
                            lambda v: coords_to_sym(v, dim), sym_to_coords)
        max_orbit_dim = k
        side = "right"
        special = False
    else:
        n = dim * dim
        rep = _rep_from_map(basis, n, lambda B, M: M @ B,
                            lambda v: v.reshape(dim, dim), lambda M: M.reshape(-1))
        max_orbit_dim = k
        side = "right"
        special = False
    for arr in (basis, rep):
        arr.flags.writeable = False
    return GroupAction(ambient_dim=n, matrix_dim=dim, lie_basis=basis, rep=rep,
                       action_kind=kind, max_orbit_dim=max_orbit_dim,
                       comp_side=side, special=special)


def _rep_from_map(basis, n, xi_mat, from_coords, to_coords):
    """Coordinate matrices of M -> xi_mat(B_j, M) for each generator."""
    rep = np.zeros((basis.shape[0], n, n))
    eye = np.eye(n)
    for j, B in enumerate(basis):
        for col in range(n):
            rep[j, :, col] = to_coords(xi_mat(B, from_coords(eye[col])))
    return rep


def apply_element(action: GroupAction, g, x: np.ndarray) -> np.ndarray:
    """Apply a group element to a point in coordinates (g.x per action kind)."""
    return action.apply(g, x)


# -- Haar sampling ----------------------------------------------------------

def haar_matrices(action: GroupAction, rng: np.random.Generator, n_samples: int) -> np.ndarray:
    """Haar-distributed orthogonal matrices, (n_samples, d, d).

    QR of a Gaussian matrix with the R-diagonal sign correction; for SO(d)
    the determinant is fixed to +1 by flipping the first column.
    """
    d = action.matrix_dim
    z = rng.standard_normal((n_samples, d, d))
    q, r = np.linalg.qr(z)
    diag = np.einsum("bii->bi", r)
    signs = np.where(diag < 0.0, -1.0, 1.0)
    q = q * signs[:, None, :]
    if action.special:
        flip = np.linalg.det(q) < 0.0
        q[flip, :, 0] *= -1.0
    return q


def haar_sample(action: GroupAction, rng: np.random.Generator) -> GroupElement:
    """Draw one group element from the normalized Haar measure."""
    return GroupElement(haar_matrices(action, rng, 1)[0])


# -- orbit tangent frames and projections ------------------------------------

@dataclass(frozen=True)
class ProjectionPair:
    """Orthonormal orbit tangent frame at a point with the induced projections.

    P_apply projects onto the normal space (T_x O_x)^perp, Q_apply onto the
    tangent space; P + Q = I holds exactly because P is computed as I - Q.
    """

    base_point: np.ndarray
    tangent_frame: np.ndarray  # (orbit_dim, n)
    orbit_dim: int
    regular: bool
    P_apply: object = field(repr=False, default=None)
    Q_apply: object = field(repr=False, default=None)


def orbit_tangent_frame(action: GroupAction, x: np.ndarray, rank_tol: float | None = None) -> ProjectionPair:
    """Orthonormal frame of T_x O_x via SVD of the orbit map, with rank truncation."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    if rank_tol is None:
        rank_tol = 1e-8 * max(float(np.linalg.norm(x)), 1.0)
    xi = action.xi_all(x[None, :])[0]  # (n, k)
    u, s, _ = np.linalg.svd(xi, full_matrices=False)
    m = int(np.sum(s > rank_tol))
    frame = u[:, :m].T.copy()

    def q_apply(v, _frame=frame):
        return _frame.T @ (_frame @ np.asarray(v, dtype=float))

    def p_apply(v, _q=q_apply):
        v = np.asarray(v, dtype=float)
        return v - _q(v)

    return ProjectionPair(base_point=x, tangent_frame=frame, orbit_dim=m,
                          regular=(m == action.max_orbit_dim),
                          P_apply=p_apply, Q_apply=q_apply)


def tangent_project(action: GroupAction, X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Batched projection of rows of V onto the orbit tangent spaces at rows of X."""
    kind = action.action_kind
    if kind == "so_d_rotation":
        nrm2 = np.sum(X * X, axis=-1, keepdims=True)
        safe = np.maximum(nrm2, 1e-300)
        rad = np.sum(X * V, axis=-1, keepdims=True) / safe
        q = V - rad * X
        return np.where(nrm2 > 1e-24, q, 0.0)
    xi = action.xi_all(X)  # (B, n, k)
    if action.n_generators == 1:
        w = xi[..., 0]
        nrm2 = np.maximum(np.sum(w * w, axis=-1, keepdims=True), 1e-300)
        coef = np.sum(w * V, axis=-1, keepdims=True) / nrm2
        return np.where(nrm2 > 1e-24, coef * w, 0.0)
    u, s, _ = np.linalg.svd(xi, full_matrices=False)
    tol = 1e-8 * np.maximum(s[..., :1], 1e-300)
    mask = (s > tol).astype(float)
    comps = np.einsum("bnm,bn->bm", u, V) * mask
    return np.einsum("bnm,bm->bn", u, comps)


def normal_project(action: GroupAction, X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Batched projection onto the orbit normal spaces; complement of tangent_project."""
    return V - tangent_project(action, X, V)


# -- group tangent frame and retraction --------------------------------------

def group_tangent_frame(action: GroupAction, g) -> list[np.ndarray]:
    """Orthonormal basis {g B_i} of T_g G under the trace inner product."""
    g_mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    return [g_mat @ B for B in action.lie_basis]


def polar_factor(mats: np.ndarray, min_sv: float = 0.5) -> np.ndarray:
    """Nearest orthogonal matrices (polar factor U V^T), batched over leading axes."""
    u, s, vt = np.linalg.svd(mats)
    smallest = float(np.min(s[..., -1]))
    if smallest <= min_sv:
        raise NonRetractable(f"smallest singular value {smallest:.3e} <= {min_sv}")
    return u @ vt


def retract_to_group(M: np.ndarray) -> GroupElement:
    """Polar retraction of a near-orthogonal matrix onto the orthogonal group."""
    M = np.asarray(M, dtype=float)
    return GroupElement(polar_factor(M[None])[0])
