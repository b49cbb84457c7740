import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvflow import catalog
from bvflow.kernels import (
    AnisotropicKernel,
    DirectionField,
    PROFILES,
    poly_bump,
    smooth_exp,
)

ETA_X = DirectionField.constant((1.0, 0.0))


def aligned_unit_box_quadrature(eta, gamma, n=200, dim=2):
    """Test-side reference quadrature for integrals over supp rho(x, .).

    Built directly from (gamma, eta): Gauss-Legendre nodes on the unit
    box in the stretched frame, mapped by the inverse dilation.  It only
    shares the pointwise kernel values with the implementation, not its
    quadrature helpers.
    """
    gl_x, gl_w = np.polynomial.legendre.leggauss(n)
    mesh = np.meshgrid(*([gl_x] * dim), indexing="ij")
    w = np.stack(mesh, axis=-1).reshape(-1, dim)
    wmesh = np.meshgrid(*([gl_w] * dim), indexing="ij")
    wts = np.prod(np.stack(wmesh, axis=-1).reshape(-1, dim), axis=-1)
    eta = np.asarray(eta, dtype=float)
    z = w - (gamma / (1.0 + gamma)) * (w @ eta)[:, None] * eta[None, :]
    return z, wts / (1.0 + gamma)


def test_u_matrix_examples():
    k0 = AnisotropicKernel(poly_bump, ETA_X, 0.0)
    u, u_inv, det = k0.u_matrix()
    assert np.allclose(u[0], np.eye(2))
    assert det == 1.0

    k3 = AnisotropicKernel(poly_bump, ETA_X, 3.0)
    u, u_inv, det = k3.u_matrix()
    assert np.allclose(u[0], np.diag([4.0, 1.0]))
    assert det == 4.0


@given(
    st.floats(min_value=0.0, max_value=2 * math.pi),
    st.sampled_from([0.5, 10.0, 1000.0]),
)
@settings(max_examples=30, deadline=None)
def test_u_inverse_identity(angle, gamma):
    eta = DirectionField.constant((math.cos(angle), math.sin(angle)))
    k = AnisotropicKernel(poly_bump, eta, gamma)
    u, u_inv, _ = k.u_matrix()
    defect = np.max(np.abs(u[0] @ u_inv[0] - np.eye(2)))
    # the cancellation gamma - (gamma/(1+gamma))(1+gamma) leaves an
    # intrinsic gamma * eps residual, so the tolerance scales with gamma
    assert defect < max(1e-14, 4.0 * (1.0 + gamma) * np.finfo(float).eps)


def test_rho_compact_support():
    k = AnisotropicKernel(smooth_exp, ETA_X, 2.0)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(100, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assert np.all(k.rho(None, 1.001 * dirs) == 0.0)
    # inside the inner ball the kernel is positive
    inner, outer = k.support_bounds()
    assert (inner, outer) == (1.0 / 3.0, 1.0)
    assert np.all(k.rho(None, 0.99 * inner * dirs) > 0.0)


def test_rho_center_value_is_profile_maximum():
    for profile in (smooth_exp, poly_bump):
        k = AnisotropicKernel(profile, ETA_X, 0.0)
        val = k.rho(None, np.zeros((1, 2)))[0]
        assert val == pytest.approx(float(profile.f0(0.0, 2)))
        assert val > 0


def test_support_bounds_gamma9():
    k = AnisotropicKernel(poly_bump, ETA_X, 9.0)
    assert k.support_bounds() == (0.1, 1.0)
    # just outside the ellipsoid along eta: zero; just inside: positive
    assert k.rho(None, np.array([[0.101, 0.0]])) == 0.0
    assert k.rho(None, np.array([[0.099, 0.0]]))[0] > 0.0


@pytest.mark.parametrize("profile_tag", ["smooth_exp", "poly_bump"])
def test_normalization_over_gamma_and_x(profile_tag):
    profile = PROFILES[profile_tag]
    rng = np.random.default_rng(17)
    eta_var = DirectionField.mollified_normal(catalog.get_field("C"), 0.4)
    for gamma in (0.0, 1.0, 10.0, 100.0):
        kern = AnisotropicKernel(profile, eta_var, gamma)
        for _ in range(5):
            x = rng.random((1, 2))
            e = eta_var.eta(x)[0]
            z, w = aligned_unit_box_quadrature(e, gamma, n=200)
            xs = np.broadcast_to(x, (z.shape[0], 2))
            val = float(np.sum(kern.rho(xs, z) * w))
            assert abs(val - 1.0) < 1e-6


@pytest.mark.parametrize("dim", [2, 3])
def test_normalization_dim(dim):
    # constant direction, tensor reference grid in the stretched frame
    eta = DirectionField.constant((1.0,) + (0.0,) * (dim - 1))
    kern = AnisotropicKernel(poly_bump, eta, 10.0, dim=dim)
    n = 200 if dim == 2 else 64
    gl_x, gl_w = np.polynomial.legendre.leggauss(n)
    mesh = np.meshgrid(*([gl_x] * dim), indexing="ij")
    w = np.stack(mesh, axis=-1).reshape(-1, dim)
    wmesh = np.meshgrid(*([gl_w] * dim), indexing="ij")
    wts = np.prod(np.stack(wmesh, axis=-1).reshape(-1, dim), axis=-1)
    z = w.copy()
    z[:, 0] /= 11.0
    val = float(np.sum(kern.rho(None, z) * wts / 11.0))
    tol = 1e-6 if dim == 2 else 5e-4  # 64^3 reference is coarser
    assert abs(val - 1.0) < tol


def test_change_of_variables_identity():
    # int g(U z) det U dz = int g(w) dw for an F0-type integrand
    gamma = 7.0
    eta = np.array([0.6, 0.8])
    g = lambda w: poly_bump.f0(2.0 * np.sum(w * w, axis=1) ** 1.0, 2) + np.exp(
        -np.sum(w * w, axis=1)
    ) * (np.sum(w * w, axis=1) < 1.0)
    z, wts = aligned_unit_box_quadrature(eta, gamma, n=300)
    uz = z + gamma * (z @ eta)[:, None] * eta[None, :]
    lhs = float(np.sum(g(uz) * (1.0 + gamma) * wts))
    gl_x, gl_w = np.polynomial.legendre.leggauss(300)
    w2 = np.stack(np.meshgrid(gl_x, gl_x, indexing="ij"), axis=-1).reshape(-1, 2)
    ww = np.prod(
        np.stack(np.meshgrid(gl_w, gl_w, indexing="ij"), axis=-1).reshape(-1, 2),
        axis=1,
    )
    rhs = float(np.sum(g(w2) * ww))
    assert abs(lhs - rhs) < 1e-6


def test_d2_rho_zero_at_origin_and_radial():
    k = AnisotropicKernel(smooth_exp, ETA_X, 0.0)
    assert np.allclose(k.d2_rho(None, np.zeros((1, 2))), 0.0)
    z = np.array([[0.3, 0.4], [-0.2, 0.5]])
    grad = k.d2_rho(None, z)
    # gamma=0, radial profile: gradient parallel to z
    cross = grad[:, 0] * z[:, 1] - grad[:, 1] * z[:, 0]
    assert np.max(np.abs(cross)) < 1e-14


def test_d2_rho_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-5
    for profile in (smooth_exp, poly_bump):
        for gamma in (0.0, 2.0, 9.0):
            ang = rng.random() * math.pi
            eta = DirectionField.constant((math.cos(ang), math.sin(ang)))
            k = AnisotropicKernel(profile, eta, gamma)
            inner, _ = k.support_bounds()
            z = rng.normal(size=(30, 2))
            z *= (0.7 * inner / np.linalg.norm(z, axis=1))[:, None]
            grad = k.d2_rho(None, z)
            for comp in range(2):
                dz = np.zeros(2)
                dz[comp] = h
                fd = (k.rho(None, z + dz) - k.rho(None, z - dz)) / (2 * h)
                scale = np.maximum(np.abs(grad[:, comp]), 1.0)
                assert np.max(np.abs(fd - grad[:, comp]) / scale) < 1e-6


def test_d1_rho_constant_direction_is_zero():
    k = AnisotropicKernel(poly_bump, ETA_X, 5.0)
    z = np.array([[0.05, 0.3], [0.01, -0.2]])
    x = np.array([[0.2, 0.7], [0.9, 0.1]])
    assert np.allclose(k.d1_rho(x, z), 0.0)


def test_d1_rho_finite_differences_mollified():
    eta = DirectionField.mollified_normal(catalog.get_field("D"), 0.25)
    k = AnisotropicKernel(smooth_exp, eta, 3.0)
    rng = np.random.default_rng(9)
    h = 1e-6
    for _ in range(10):
        x = rng.random((1, 2))
        z = rng.normal(size=(1, 2))
        z *= 0.15 / np.linalg.norm(z)
        grad = k.d1_rho(x, z)[0]
        for comp in range(2):
            dx = np.zeros((1, 2))
            dx[0, comp] = h
            fd = float((k.rho(x + dx, z) - k.rho(x - dx, z))[0]) / (2 * h)
            scale = max(abs(grad[comp]), 1.0)
            assert abs(fd - grad[comp]) / scale < 1e-5


def test_d1_rho_integral_vanishes():
    eta = DirectionField.mollified_normal(catalog.get_field("C"), 0.3)
    rng = np.random.default_rng(2)
    for gamma in (1.0, 10.0):
        k = AnisotropicKernel(poly_bump, eta, gamma)
        for _ in range(5):
            x = rng.random((1, 2))
            z, w = k.z_quadrature(x, 160, rule="gauss")
            xs = np.broadcast_to(x, (z.shape[0], 2))
            val = np.linalg.norm(np.sum(k.d1_rho(xs, z) * w[:, None], axis=0))
            assert val < 1e-6


def test_direction_field_unit_norm_and_jacobian():
    eta = DirectionField.mollified_normal(catalog.get_field("D"), 0.5)
    rng = np.random.default_rng(13)
    pts = rng.random((50, 2))
    vals = eta.eta(pts)
    assert np.max(np.abs(np.linalg.norm(vals, axis=1) - 1.0)) < 1e-14
    h = 1e-6
    de = eta.d_eta(pts)
    for comp in range(2):
        dp = pts.copy()
        dp[:, comp] += h
        dm = pts.copy()
        dm[:, comp] -= h
        fd = (eta.eta(dp) - eta.eta(dm)) / (2 * h)
        assert np.max(np.abs(fd - de[:, :, comp])) < 1e-7
    # width zero reproduces the exact jump normal everywhere
    exact = DirectionField.mollified_normal(catalog.get_field("D"), 0.0)
    normals = exact.eta(pts)
    eta_b = np.array([2.0, 1.0]) / math.sqrt(5.0)
    assert np.max(np.abs(normals - eta_b)) < 1e-14


def test_mollified_normal_requires_jumps():
    with pytest.raises(ValueError):
        DirectionField.mollified_normal(catalog.get_field("A"), 0.1)


def test_scalar_product_bounds_sampled():
    # |<z, U xi>| <= (1 + gamma |eta - eta_b|) |z| and
    # |<eta_b, U^-1 z>| <= (|eta - eta_b| + 1/(1+gamma)) |z|
    rng = np.random.default_rng(23)
    for _ in range(1000):
        fid = ("C", "D")[rng.integers(2)]
        jump = catalog.get_field(fid).jumps[rng.integers(2)]
        xi, eta_b = np.asarray(jump.xi), np.asarray(jump.eta)
        gamma = float(10 ** (rng.random() * 3 - 1))
        delta = float(rng.random())
        c, s = math.cos(delta), math.sin(delta)
        eta = np.array(
            [c * eta_b[0] - s * eta_b[1], s * eta_b[0] + c * eta_b[1]]
        )
        z = rng.normal(size=2)
        u = np.eye(2) + gamma * np.outer(eta, eta)
        u_inv = np.eye(2) - gamma / (1 + gamma) * np.outer(eta, eta)
        mis = float(np.linalg.norm(eta - eta_b))
        zn = float(np.linalg.norm(z))
        assert abs(z @ (u @ xi)) <= (1 + gamma * mis) * zn + 1e-12
        assert abs(eta_b @ (u_inv @ z)) <= (mis + 1 / (1 + gamma)) * zn + 1e-12


def test_z_quadrature_rules_agree():
    k = AnisotropicKernel(smooth_exp, ETA_X, 4.0)
    vals = {}
    for rule in ("midpoint", "gauss", "polar"):
        z, w = k.z_quadrature(None, 128, rule=rule)
        vals[rule] = float(np.sum(k.rho(None, z) * w))
    assert vals["polar"] == pytest.approx(1.0, abs=1e-12)
    assert vals["gauss"] == pytest.approx(1.0, abs=1e-6)
    assert vals["midpoint"] == pytest.approx(1.0, abs=1e-3)


def test_gamma_must_be_nonnegative():
    with pytest.raises(ValueError):
        AnisotropicKernel(poly_bump, ETA_X, -1.0)
