import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from backend.candidates import CandidateFamily, CandidateSpec
from backend.errors import DomainError, SingularityError, UnsupportedError
from backend.gaussian import INV_SQRT_2PI, make_rng
from backend.transport import (
    HalfspaceSpec,
    analytic_halfspace_surface,
    boundary_weight,
    candidate_surface,
    decomposition_check,
    fd_jacobian_determinant,
    jacobian_determinant,
    orthonormal_complement,
    penalized_functional,
    pushforward_ks_test,
    restriction_area_gram,
    restriction_area_mc,
    restriction_jacobian,
    slab_closed_form,
    to_cube,
    to_gauss,
)


def test_maps_are_inverse():
    x = np.array([-2.0, 0.0, 1.5])
    assert np.allclose(to_gauss(to_cube(x)), x, atol=1e-12)


def test_to_gauss_rejects_closed_cube():
    with pytest.raises(DomainError):
        to_gauss([0.0, 0.5])
    with pytest.raises(DomainError):
        to_cube([math.inf])


@given(st.lists(st.floats(min_value=-4.0, max_value=4.0), min_size=1, max_size=4))
@settings(max_examples=50)
def test_jacobian_identity(coords):
    x = np.array(coords)
    exact = jacobian_determinant(x)
    assert fd_jacobian_determinant(x) == pytest.approx(exact, rel=1e-6, abs=1e-14)


def test_restriction_jacobian_identity_matrix():
    assert restriction_jacobian(np.eye(3), [0.0, 0.0, 1.0]) == pytest.approx(1.0)


def test_restriction_jacobian_diagonal():
    # ds area of the x-y plane under diag(2, 3, 5) is 6.
    A = np.diag([2.0, 3.0, 5.0])
    assert restriction_jacobian(A, [0.0, 0.0, 1.0]) == pytest.approx(6.0)
    assert restriction_area_gram(A, [0.0, 0.0, 1.0]) == pytest.approx(6.0)


def test_restriction_rejects_singular_and_non_unit():
    with pytest.raises(SingularityError):
        restriction_jacobian(np.zeros((2, 2)), [1.0, 0.0])
    with pytest.raises(DomainError):
        restriction_jacobian(np.eye(2), [1.0, 1.0])


def test_orthonormal_complement_is_orthonormal():
    rng = make_rng(1)
    for d in (2, 3, 5):
        nu = rng.standard_normal(d)
        nu /= np.linalg.norm(nu)
        B = orthonormal_complement(nu)
        assert B.shape == (d, d - 1)
        assert np.allclose(B.T @ B, np.eye(d - 1), atol=1e-12)
        assert np.allclose(nu @ B, 0.0, atol=1e-12)


def test_restriction_area_mc_matches_formula():
    rng = make_rng(4)
    A = rng.standard_normal((3, 3)) + 2.0 * np.eye(3)
    nu = rng.standard_normal(3)
    nu /= np.linalg.norm(nu)
    exact = restriction_jacobian(A, nu)
    assert restriction_area_gram(A, nu) == pytest.approx(exact, rel=1e-10)
    assert restriction_area_mc(A, nu, n=200_000, seed=0) == pytest.approx(exact, rel=0.02)


def test_boundary_weight_for_axis_normal():
    assert boundary_weight([0.0, 0.0], [1.0, 0.0]) == pytest.approx(math.sqrt(2.0 * math.pi))
    assert boundary_weight([1.0, 5.0], [1.0, 0.0]) == pytest.approx(math.sqrt(2.0 * math.pi) * math.exp(0.5))


def test_halfspace_perimeter_quadrature():
    h = HalfspaceSpec.from_volume(np.array([1.0, 1.0]) / math.sqrt(2.0), 0.3)
    value = penalized_functional(analytic_halfspace_surface(h))
    assert value.gauss_perimeter == pytest.approx(h.gaussian_perimeter, rel=1e-9)


def test_tilted_halfspace_penalty_closed_form():
    # Through the origin with normal (1,1)/sqrt(2): phi(0) * (sqrt(2) - 1) integrated exactly.
    h = HalfspaceSpec(np.array([1.0, 1.0]) / math.sqrt(2.0), 0.0)
    value = penalized_functional(analytic_halfspace_surface(h))
    assert value.penalty == pytest.approx(1.0 / math.sqrt(math.pi) - INV_SQRT_2PI, abs=1e-6)


def test_halfspace_quadrature_refuses_high_dimension():
    with pytest.raises(UnsupportedError):
        analytic_halfspace_surface(HalfspaceSpec.axis(7, 0.0))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("lam", [0.05, 0.3, 0.5, 0.8])
def test_slab_decomposition_closed_form(d, lam):
    rep = decomposition_check(CandidateSpec(CandidateFamily.AXIS_SLAB, d, lam), method="closed_form")
    assert abs(rep.margin) < 1e-8
    assert rep.config["penalty"] >= 0.0


@pytest.mark.parametrize("d", [2, 3])
def test_slab_decomposition_quadrature(d):
    rep = decomposition_check(CandidateSpec(CandidateFamily.AXIS_SLAB, d, 0.3), method="quadrature")
    assert abs(rep.margin) < 1e-3


def test_slab_closed_form_at_half_has_no_penalty():
    value = slab_closed_form(0.5)
    assert value.gauss_perimeter == pytest.approx(INV_SQRT_2PI)
    assert value.penalty == pytest.approx(0.0, abs=1e-15)


def test_quarter_disc_decomposition():
    spec = CandidateSpec(CandidateFamily.VERTEX_BALL, 2, 0.1)
    rep = decomposition_check(spec, nodes=20_000)
    assert rep.config["method"] == "quadrature"
    assert abs(rep.margin) < 1e-3
    assert rep.config["penalty"] > 0.0


@pytest.mark.parametrize("t", [-2.0, -1.25, -0.5, 0.0, 0.5, 1.25, 2.0])
def test_axis_halfspace_perimeter_is_phi(t):
    value = penalized_functional(analytic_halfspace_surface(HalfspaceSpec.axis(2, t)))
    phi = INV_SQRT_2PI * math.exp(-0.5 * t * t)
    assert value.gauss_perimeter == pytest.approx(phi, rel=1e-9)
    assert value.penalty == pytest.approx(phi * math.expm1(0.5 * t * t), rel=1e-8, abs=1e-15)


@pytest.mark.parametrize("t", [0.3, 1.0, 1.9])
def test_halfspace_offset_sign_flip(t):
    normal = np.array([1.0, 2.0, 2.0]) / 3.0
    plus = penalized_functional(analytic_halfspace_surface(HalfspaceSpec(normal, t), resolution=128))
    minus = penalized_functional(analytic_halfspace_surface(HalfspaceSpec(normal, -t), resolution=128))
    assert plus.gauss_perimeter == pytest.approx(minus.gauss_perimeter, rel=1e-12)
    assert HalfspaceSpec(normal, t).gaussian_perimeter == HalfspaceSpec(normal, -t).gaussian_perimeter


@pytest.mark.parametrize("family", [CandidateFamily.VERTEX_BALL, CandidateFamily.EDGE_CYLINDER])
@pytest.mark.parametrize("lam", [0.05, 0.2])
def test_three_dimensional_decomposition_quadrature(family, lam):
    rep = decomposition_check(CandidateSpec(family, 3, lam), nodes=40_000)
    assert rep.config["method"] == "quadrature"
    assert abs(rep.margin) < 1e-3
    assert rep.config["penalty"] > 0.0


def test_closed_form_only_for_slabs():
    with pytest.raises(UnsupportedError):
        decomposition_check(CandidateSpec(CandidateFamily.VERTEX_BALL, 2, 0.1), method="closed_form")


def test_candidate_surface_lives_in_gauss_space():
    surface = candidate_surface(CandidateSpec(CandidateFamily.EDGE_CYLINDER, 3, 0.2), nodes=2500)
    assert surface.dimension == 3
    assert np.allclose(np.linalg.norm(surface.normals, axis=1), 1.0)


def test_pushforward_is_uniform_and_control_fails():
    n = 100_000
    stats = pushforward_ks_test(3, n, seed=0)
    assert np.all(stats < 1.95 / math.sqrt(n))
    raw = pushforward_ks_test(3, n, seed=0, raw=True)
    assert np.all(raw > 1.95 / math.sqrt(n))


def test_pushforward_needs_samples():
    with pytest.raises(DomainError):
        pushforward_ks_test(2, 10, seed=0)
