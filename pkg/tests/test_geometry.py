import numpy as np
import pytest

from orbitlangevin import (NotTangent, RankDeficient, SingularOrbit,
                           coupling_operators, grad_log_orbit_volume,
                           hessian_identity_residual, log_orbit_volume,
                           make_action, mean_curvature, orbit_tangent_frame,
                           second_fundamental_form_group,
                           second_fundamental_form_orbit)
from orbitlangevin.actions import coords_to_sym, haar_matrices, sym_to_coords
from orbitlangevin.geometry import fd_gradient, grad_log_volume_batch

SEED = 20250809


def draw_regular(action, rng, floor=0.25):
    while True:
        x = rng.standard_normal(action.ambient_dim)
        if action.regularity_stat(x[None])[0] >= floor:
            return x


# -- second fundamental form of the orbit ------------------------------------

def test_sff_circle_points_inward():
    action = make_action("so_d_rotation", 2)
    omega = np.array([[0.0, -1.0], [1.0, 0.0]])  # unit-speed generator at (1, 0)
    h = second_fundamental_form_orbit(action, np.array([1.0, 0.0]), omega)
    assert np.allclose(h, [-1.0, 0.0], atol=1e-14)


def test_sff_great_circle_norm():
    action = make_action("so_d_rotation", 3)
    r = 2.0
    x = np.array([r, 0.0, 0.0])
    omega = np.zeros((3, 3))
    omega[0, 1], omega[1, 0] = -1.0, 1.0  # xi norm = r at x
    h = second_fundamental_form_orbit(action, x, omega)
    assert np.isclose(np.linalg.norm(h), r, atol=1e-12)
    assert h @ x < 0  # points toward the origin


def test_sff_matches_geodesic_acceleration_conjugation():
    # central finite differences of t -> exp(t Omega) . x
    from scipy.linalg import expm
    action = make_action("conjugation_sym", 2)
    rng = np.random.default_rng(SEED)
    x = draw_regular(action, rng)
    omega = np.einsum("k,kij->ij", rng.standard_normal(1), action.lie_basis)
    pp = orbit_tangent_frame(action, x)
    eps = 1e-3

    def curve(t):
        g = expm(t * omega)
        return action.apply_batch(g, x[None])[0]

    accel = (curve(eps) - 2.0 * curve(0.0) + curve(-eps)) / eps**2
    h = second_fundamental_form_orbit(action, x, omega)
    assert np.linalg.norm(h - pp.P_apply(accel)) <= 1e-5


# -- mean curvature and volumes ------------------------------------------------

def test_mean_curvature_sphere():
    action = make_action("so_d_rotation", 3)
    data = mean_curvature(action, np.array([2.0, 0.0, 0.0]))
    assert np.allclose(data.mean_curvature, [-1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(data.grad_log_volume, [1.0, 0.0, 0.0], atol=1e-12)


def test_mean_curvature_is_normal():
    rng = np.random.default_rng(SEED)
    for kind, d in [("so_d_rotation", 3), ("conjugation_sym", 2), ("right_mult", 2)]:
        action = make_action(kind, d)
        for _ in range(20):
            x = draw_regular(action, rng)
            data = mean_curvature(action, x)
            pp = orbit_tangent_frame(action, x)
            for w in pp.tangent_frame:
                assert abs(data.mean_curvature @ w) <= 1e-9


def test_mean_curvature_rejects_singular():
    action = make_action("conjugation_sym", 2)
    with pytest.raises(SingularOrbit):
        mean_curvature(action, sym_to_coords(2.0 * np.eye(2)))


def test_log_volume_closed_forms():
    conj = make_action("conjugation_sym", 2)
    assert np.isclose(log_orbit_volume(conj, sym_to_coords(np.diag([3.0, 1.0]))),
                      np.log(2.0), atol=1e-12)
    rm = make_action("right_mult", 2)
    assert np.isclose(log_orbit_volume(rm, np.diag([1.0, 2.0]).reshape(-1)),
                      0.5 * np.log(5.0), atol=1e-12)
    rot = make_action("so_d_rotation", 3)
    assert np.isclose(log_orbit_volume(rot, np.array([0.0, 2.0, 0.0])),
                      2.0 * np.log(2.0), atol=1e-12)


def test_log_volume_singular_guards():
    conj = make_action("conjugation_sym", 2)
    with pytest.raises(SingularOrbit):
        log_orbit_volume(conj, sym_to_coords(np.eye(2)))
    rot = make_action("so_d_rotation", 3)
    with pytest.raises(SingularOrbit):
        log_orbit_volume(rot, np.zeros(3))
    rm = make_action("right_mult", 2)
    with pytest.raises(SingularOrbit):
        log_orbit_volume(rm, np.diag([1.0, 0.0]).reshape(-1))


def test_grad_log_volume_rotation_closed_form():
    action = make_action("so_d_rotation", 4)
    rng = np.random.default_rng(SEED)
    x = rng.standard_normal(4)
    got = grad_log_orbit_volume(action, x)
    assert np.allclose(got, 3.0 * x / (x @ x), atol=1e-12)


def test_grad_log_volume_conjugation_eigen_coordinates():
    action = make_action("conjugation_sym", 2)
    x = sym_to_coords(np.diag([3.0, 1.0]))
    got = grad_log_orbit_volume(action, x)
    assert np.allclose(got, [0.5, -0.5, 0.0], atol=1e-12)
    fd = fd_gradient(lambda z: log_orbit_volume(action, z), x)
    assert np.linalg.norm(got - fd) <= 1e-5


@pytest.mark.parametrize("kind,d", [("so_d_rotation", 3), ("conjugation_sym", 2),
                                    ("conjugation_sym", 3), ("right_mult", 2),
                                    ("right_mult", 3)])
def test_grad_log_volume_cross_validation(kind, d):
    # closed form vs curvature trace vs finite differences of the log volume
    action = make_action(kind, d)
    rng = np.random.default_rng(SEED)
    for _ in range(30):
        x = draw_regular(action, rng)
        closed = grad_log_orbit_volume(action, x)
        trace = grad_log_orbit_volume(action, x, source="curvature_trace")
        rel = np.linalg.norm(closed - trace) / max(np.linalg.norm(closed), 1e-30)
        assert rel <= 1e-7
        fd = fd_gradient(lambda z: log_orbit_volume(action, z), x)
        assert np.linalg.norm(closed - fd) <= 1e-5


def test_grad_equivariance():
    rng = np.random.default_rng(SEED)
    for kind, d in [("so_d_rotation", 3), ("conjugation_sym", 2), ("right_mult", 2)]:
        action = make_action(kind, d)
        for _ in range(30):
            x = draw_regular(action, rng)
            g = haar_matrices(action, rng, 1)[0]
            lhs = action.apply_batch(g, grad_log_orbit_volume(action, x)[None])[0]
            rhs = grad_log_orbit_volume(action, action.apply_batch(g, x[None])[0])
            assert np.linalg.norm(lhs - rhs) <= 1e-9


# -- group second fundamental form ----------------------------------------------

def test_sff_group_at_identity():
    rng = np.random.default_rng(SEED)
    a = rng.standard_normal((3, 3))
    a = a - a.T
    h = second_fundamental_form_group(np.eye(3), a)
    assert np.allclose(h, a @ a, atol=1e-14)
    assert np.allclose(h, h.T, atol=1e-14)


def test_sff_group_zero_and_rotation_generator():
    assert np.allclose(second_fundamental_form_group(np.eye(2), np.zeros((2, 2))), 0.0)
    j = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(second_fundamental_form_group(np.eye(2), j), -np.eye(2), atol=1e-14)


def test_sff_group_rejects_non_tangent():
    with pytest.raises(NotTangent):
        second_fundamental_form_group(np.eye(2), np.eye(2))


def test_sff_translation_identity():
    # the orbit form at g.x evaluated through the frame pullback equals the
    # group-side expression pushed through the anchor
    rng = np.random.default_rng(SEED)
    for kind, d in [("so_d_rotation", 3), ("conjugation_sym", 2), ("right_mult", 2)]:
        action = make_action(kind, d)
        for _ in range(30):
            x = draw_regular(action, rng)
            g = haar_matrices(action, rng, 1)[0]
            omega = np.einsum("k,kij->ij", rng.standard_normal(action.n_generators),
                              action.lie_basis)
            y = action.apply_batch(g, x[None])[0]
            w = action.infinitesimal_action(omega, y)
            xi = action.xi_all(y[None])[0]
            u, s, vt = np.linalg.svd(xi, full_matrices=False)
            m = action.max_orbit_dim
            coeff = vt[:m].T @ ((u[:, :m].T @ w) / s[:m])
            omega_min = np.einsum("k,kij->ij", coeff, action.lie_basis)
            lhs = second_fundamental_form_orbit(action, y, omega_min)
            rhs = second_fundamental_form_orbit(action, y, omega)
            assert np.linalg.norm(lhs - rhs) <= 1e-8
            if kind == "so_d_rotation":
                pp_y = orbit_tangent_frame(action, y)
                h_group = second_fundamental_form_group(g, omega @ g)
                assert np.linalg.norm(lhs - pp_y.P_apply(h_group @ x)) <= 1e-8


# -- coupling operators ------------------------------------------------------------

def test_coupling_circle_hand_values():
    action = make_action("so_d_rotation", 2)
    r = 2.0
    ops = coupling_operators(action, np.eye(2), np.array([r, 0.0]), noise_scale=1.0)
    assert np.isclose(ops.singular_values[0], r / np.sqrt(2.0), atol=1e-12)
    assert np.isclose(ops.J0[0, 0], np.sqrt(2.0) / r, atol=1e-12)
    pp = orbit_tangent_frame(action, np.array([r, 0.0]))
    q = pp.tangent_frame.T @ pp.tangent_frame
    recon = ops.L_matrix @ ops.J0 @ ops.J0.T @ ops.L_matrix.T
    assert np.linalg.norm(recon - q) <= 1e-12
    assert np.allclose(ops.V0, -np.eye(2) / r**2, atol=1e-12)
    assert np.allclose(ops.V1, 0.0, atol=1e-12)


def test_coupling_zero_scale():
    action = make_action("so_d_rotation", 3)
    ops = coupling_operators(action, np.eye(3), np.array([1.0, 0.5, -0.2]), noise_scale=0.0)
    assert np.allclose(ops.J0, 0.0) and np.allclose(ops.V0, 0.0) and np.allclose(ops.V1, 0.0)


@pytest.mark.parametrize("kind,d", [("so_d_rotation", 3), ("conjugation_sym", 2),
                                    ("right_mult", 2)])
def test_coupling_invariants(kind, d):
    action = make_action(kind, d)
    rng = np.random.default_rng(SEED)
    for _ in range(25):
        x = draw_regular(action, rng)
        g = haar_matrices(action, rng, 1)[0]
        scale = float(rng.uniform(0.2, 2.0))
        ops = coupling_operators(action, g, x, noise_scale=scale)
        y = action.apply_batch(g, x[None])[0]
        pp = orbit_tangent_frame(action, y)
        q = pp.tangent_frame.T @ pp.tangent_frame
        recon = ops.L_matrix @ ops.J0 @ ops.J0.T @ ops.L_matrix.T
        assert np.linalg.norm(recon - scale * q) <= 1e-8
        assert np.linalg.norm(ops.L_matrix @ ops.V1 + pp.Q_apply(ops.v0_image)) <= 1e-8
        # image drift is the scaled mean curvature at the translated point
        drift = ops.v0_image - pp.Q_apply(ops.v0_image)
        h = mean_curvature(action, y).mean_curvature
        assert np.linalg.norm(drift - scale * h) <= 1e-8
        # J0 lives in the row space of L
        _, _, vt = np.linalg.svd(ops.L_matrix, full_matrices=False)
        vr = vt[: action.max_orbit_dim].T
        assert np.linalg.norm(ops.J0 - vr @ (vr.T @ ops.J0)) <= 1e-9


def test_coupling_rank_deficient_rejected():
    action = make_action("conjugation_sym", 2)
    with pytest.raises(RankDeficient):
        coupling_operators(action, np.eye(2), sym_to_coords(np.eye(2)), noise_scale=1.0)
    # batch variant with an active singular row
    from orbitlangevin.geometry import coupling_operators_batch
    x = np.stack([sym_to_coords(np.eye(2)), sym_to_coords(np.diag([3.0, 1.0]))])
    g = np.stack([np.eye(2), np.eye(2)])
    with pytest.raises(RankDeficient):
        coupling_operators_batch(action, g, x, np.array([1.0, 1.0]))


def test_v0_symmetry():
    rng = np.random.default_rng(SEED)
    for kind, d in [("so_d_rotation", 3), ("conjugation_sym", 2), ("right_mult", 2)]:
        action = make_action(kind, d)
        x = draw_regular(action, rng)
        ops_id = coupling_operators(action, np.eye(d), x, noise_scale=1.0)
        assert np.linalg.norm(ops_id.V0 - ops_id.V0.T) <= 1e-10
        g = haar_matrices(action, rng, 1)[0]
        ops = coupling_operators(action, g, x, noise_scale=1.0)
        untwist = ops.V0 @ g.T if action.comp_side == "left" else g.T @ ops.V0
        assert np.linalg.norm(untwist - untwist.T) <= 1e-10


# -- invariant-function Hessian identity ----------------------------------------

def test_hessian_identity_radial_quadratic():
    action = make_action("so_d_rotation", 3)
    rng = np.random.default_rng(SEED)
    for _ in range(20):
        x = draw_regular(action, rng)
        omega = np.einsum("k,kij->ij", rng.standard_normal(3), action.lie_basis)
        assert hessian_identity_residual(action, lambda z: 2.0 * z, x, omega) <= 1e-6


def test_hessian_identity_constant_function():
    action = make_action("so_d_rotation", 3)
    omega = np.einsum("k,kij->ij", np.ones(3), action.lie_basis)
    res = hessian_identity_residual(action, lambda z: np.zeros_like(z),
                                    np.array([1.0, 0.3, -0.2]), omega)
    assert res == 0.0


def test_hessian_identity_spectral_polynomial():
    action = make_action("conjugation_sym", 2)
    rng = np.random.default_rng(SEED)

    def grad(x):  # gradient of tr(M^3)/3 in isometric coordinates
        m = coords_to_sym(x, 2)
        return sym_to_coords(m @ m)

    for _ in range(20):
        x = draw_regular(action, rng)
        omega = np.einsum("k,kij->ij", rng.standard_normal(1), action.lie_basis)
        assert hessian_identity_residual(action, grad, x, omega) <= 1e-5


def test_grad_log_volume_batch_matches_single():
    rng = np.random.default_rng(SEED)
    action = make_action("conjugation_sym", 3)
    X = np.stack([draw_regular(action, rng) for _ in range(10)])
    batch = grad_log_volume_batch(action, X)
    for i in range(10):
        assert np.allclose(batch[i], grad_log_orbit_volume(action, X[i]), atol=1e-12)
