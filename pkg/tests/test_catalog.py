import math

import numpy as np
import pytest

from bvflow import catalog
from bvflow.catalog import (
    FIELD_IDS,
    NoJumpError,
    OnJumpError,
    TrigPolynomial,
    distributional_divergence_check,
    get_field,
    surface_quadrature,
    total_jump_mass,
    volume_quadrature,
)

TWO_PI = 2.0 * math.pi


def test_catalog_ids_and_classification():
    assert FIELD_IDS == ("A", "B", "C", "D", "E")
    classes = {fid: get_field(fid).classification for fid in FIELD_IDS}
    assert classes == {
        "A": "smooth",
        "B": "smooth",
        "C": "bv",
        "D": "bv",
        "E": "pathological",
    }
    with pytest.raises(KeyError):
        get_field("Z")


def test_eval_examples():
    a = get_field("A")
    assert np.allclose(a.eval_b((0.25, 0.0)), (0.0, 1.0), atol=1e-15)
    c = get_field("C")
    assert np.allclose(c.eval_b((0.25, 0.7)), (0.0, 1.0))
    assert np.allclose(c.eval_b((0.75, 0.7)), (0.0, -1.0))
    e = get_field("E")
    assert np.allclose(e.eval_b((0.3, 0.5)), (1.0, 0.0))


def test_jacobian_examples():
    a = get_field("A")
    assert np.allclose(
        a.grad_a((0.0, 0.0)), [[0.0, -TWO_PI], [TWO_PI, 0.0]], atol=1e-12
    )
    b = get_field("B")
    assert np.allclose(b.grad_a((0.0, 0.0)), [[TWO_PI, 0.0], [0.0, 0.0]])
    c = get_field("C")
    assert np.allclose(c.grad_a((0.2, 0.9)), np.zeros((2, 2)))


def test_divergence_examples():
    assert get_field("A").div_a((0.3, 0.8)) == pytest.approx(0.0, abs=1e-12)
    assert get_field("B").div_a((0.0, 0.4)) == pytest.approx(TWO_PI)
    assert get_field("C").div_a((0.31, 0.2)) == 0.0


def test_on_jump_signal_carries_traces():
    c = get_field("C")
    with pytest.raises(OnJumpError) as err:
        c.eval_b((0.5, 0.3))
    assert np.allclose(err.value.b_plus, (0.0, -1.0))
    assert np.allclose(err.value.b_minus, (0.0, 1.0))
    with pytest.raises(OnJumpError):
        c.grad_a((0.0, 0.9))


def test_jump_data_c():
    xi, eta, sigma = get_field("C").jump_data((0.5, 0.123))
    assert np.allclose(xi, (0.0, -1.0))
    assert np.allclose(eta, (1.0, 0.0))
    assert sigma == pytest.approx(2.0)


def test_jump_data_d_rotated_normal():
    d = get_field("D")
    # a point with 2 x1 + x2 = 0.5 exactly
    xi, eta, sigma = d.jump_data((0.125, 0.25))
    assert np.allclose(eta, np.array([2.0, 1.0]) / math.sqrt(5.0))
    assert abs(float(xi @ eta)) < 1e-14
    assert sigma == pytest.approx(2.0)


def test_jump_data_e_violates_orthogonality():
    xi, eta, sigma = get_field("E").jump_data((0.5, 0.9))
    assert np.allclose(xi, (-1.0, 0.0))
    assert np.allclose(eta, (1.0, 0.0))
    assert float(np.dot(xi, eta)) == pytest.approx(-1.0)
    assert sigma == pytest.approx(2.0)
    assert get_field("E").singular_divergence_violation() == pytest.approx(1.0)


def test_jump_data_off_surface_raises():
    with pytest.raises(NoJumpError):
        get_field("C").jump_data((0.25, 0.25))


def test_orthogonality_at_surface_nodes():
    for fid in ("C", "D"):
        for jump in get_field(fid).jumps:
            nodes = jump.nodes(128)
            # jump data constant along the surface for the catalog
            assert abs(float(np.dot(jump.xi, jump.eta))) < 1e-14
            # every node really sits on the surface
            assert np.max(np.abs(jump.level(nodes))) < 1e-12


def test_rank_one_structure():
    for fid in ("C", "D", "E"):
        for jump in get_field(fid).jumps:
            m = np.outer(jump.xi, jump.eta)
            sv = np.linalg.svd(m, compute_uv=False)
            assert sv[0] == pytest.approx(1.0, abs=1e-14)
            assert sv[1] == pytest.approx(0.0, abs=1e-14)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-6
    for fid in FIELD_IDS:
        fld = get_field(fid)
        pts = rng.random((100, 2))
        keep = np.ones(100, dtype=bool)
        for jump in fld.jumps:
            keep &= np.abs(jump.level(pts)) > 10 * h
        pts = pts[keep]
        jac = fld.jacobian_many(pts)
        for k in range(2):
            dp, dm = pts.copy(), pts.copy()
            dp[:, k] += h
            dm[:, k] -= h
            fd = (fld.eval_many(dp) - fld.eval_many(dm)) / (2 * h)
            assert np.max(np.abs(fd - jac[:, :, k])) < 5e-9  # O(h^2)


def test_surface_quadrature_examples():
    c = get_field("C")
    total = sum(surface_quadrature(j, lambda xs: 1.0) for j in c.jumps)
    assert total == pytest.approx(4.0, abs=1e-12)  # |D^s b|(T^2) for C
    # indicator of half of one line
    half = surface_quadrature(
        c.jumps[1], lambda xs: (xs[:, 1] < 0.5).astype(float), m=512
    )
    assert half == pytest.approx(1.0, abs=1e-8)
    pairing = sum(
        surface_quadrature(j, lambda xs: 1.0) * float(np.dot(j.xi, j.eta))
        for j in c.jumps
    )
    assert pairing == 0.0
    assert total_jump_mass(get_field("D")) == pytest.approx(4.0 * math.sqrt(5.0))


FIVE_TEST_FUNCTIONS = [
    TrigPolynomial(((1.0, (1, 0), 0.0),)),
    TrigPolynomial(((0.8, (0, 1), 0.4),)),
    TrigPolynomial(((0.5, (1, 1), 1.0), (0.3, (2, 0), 0.2))),
    TrigPolynomial(((0.7, (2, 1), 0.0), (0.2, (0, 3), 2.1))),
    TrigPolynomial(((0.4, (1, 2), 0.9), (0.6, (3, 1), 0.5))),
]


@pytest.mark.parametrize("fid", FIELD_IDS)
def test_distributional_divergence_residual(fid):
    fld = get_field(fid)
    for phi in FIVE_TEST_FUNCTIONS:
        residual = distributional_divergence_check(fld, phi, 256)
        assert abs(residual) < 1e-6


def test_distributional_divergence_spec_examples():
    phi = TrigPolynomial(((1.0, (1, 0), 0.0),))  # cos 2 pi x1
    assert abs(distributional_divergence_check(get_field("C"), phi, 256)) < 1e-6
    assert abs(distributional_divergence_check(get_field("B"), phi, 256)) < 1e-6
    one = TrigPolynomial(((1.0, (0, 0), 0.0),))  # constant 1
    assert abs(distributional_divergence_check(get_field("E"), one, 256)) < 1e-6


def test_volume_quadrature_measures():
    for fid in FIELD_IDS:
        pts, wts = volume_quadrature(get_field(fid), 64)
        assert np.isclose(np.sum(wts), 1.0, atol=1e-13)
        assert np.all((pts >= 0) & (pts < 1))


def test_vectorized_matches_scalar_off_jumps():
    rng = np.random.default_rng(4)
    for fid in FIELD_IDS:
        fld = get_field(fid)
        pts = rng.random((20, 2))
        keep = np.ones(20, dtype=bool)
        for jump in fld.jumps:
            keep &= np.abs(jump.level(pts)) > 1e-6
        pts = pts[keep]
        many = fld.eval_many(pts)
        for i, p in enumerate(pts):
            assert np.allclose(fld.eval_b(p), many[i])


def test_fields_are_immutable():
    c = get_field("C")
    with pytest.raises(Exception):
        c.id = "X"
