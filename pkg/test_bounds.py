import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from backend.bounds import (
    CarvedSlab,
    GraphPerturbation,
    PiecewiseExponential,
    SlicingConfig,
    cs_fuzz,
    cs_pointwise,
    delta_threshold,
    gaussian_isoperimetry_margin,
    jensen_fuzz,
    jensen_gap,
    locate_strip_maximum,
    slicing_bound,
    slicing_fuzz,
    soft_threshold,
    strip_bound_check,
    strip_constant,
    strip_fuzz,
    strip_mass,
    symmetric_difference_mass,
    theorem_gap_probe,
)
from backend.candidates import CandidateFamily, CandidateSpec
from backend.errors import DomainError, PreconditionError, UnsupportedError
from backend.transport import HalfspaceSpec, analytic_halfspace_surface


def Phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# slicing around a half-space

def test_slicing_unperturbed_is_tight():
    cfg = SlicingConfig(HalfspaceSpec.axis(3, 0.8), r=0.3)
    rep = slicing_bound(cfg)
    assert rep.lhs == pytest.approx(phi(0.8), rel=1e-12)
    assert rep.rhs == pytest.approx(phi(0.8), rel=1e-12)
    assert rep.margin == pytest.approx(0.0, abs=1e-12)
    assert rep.config["symmetric_difference"] == 0.0


def test_slicing_shift_inside_strip():
    ell, r = 0.5, 0.25
    cfg = SlicingConfig(HalfspaceSpec.axis(1, ell), r, GraphPerturbation((), (r / 2,)))
    rep = slicing_bound(cfg)
    expected_rhs = phi(ell) - phi(ell) / phi(ell + r) * (Phi(0.625) - Phi(0.5)) / r
    assert rep.lhs == pytest.approx(phi(ell), rel=1e-12)
    assert rep.rhs == pytest.approx(expected_rhs, rel=1e-10)
    assert rep.margin > 0.0


def test_slicing_shift_outside_strip():
    ell, r = 0.5, 0.25
    cfg = SlicingConfig(HalfspaceSpec.axis(1, ell), r, GraphPerturbation((), (2 * r,)))
    rep = slicing_bound(cfg)
    assert rep.lhs == 0.0
    assert rep.rhs <= 0.0
    assert rep.holds


def test_slicing_half_shifted_graph():
    ell, r = 0.5, 0.2
    cfg = SlicingConfig(HalfspaceSpec.axis(2, ell), r, GraphPerturbation((0.0,), (0.0, 2 * r)))
    rep = slicing_bound(cfg)
    sym = 0.5 * (Phi(ell + 2 * r) - Phi(ell))
    assert symmetric_difference_mass(cfg) == pytest.approx(sym, rel=1e-12)
    assert rep.lhs == pytest.approx(0.5 * phi(ell), rel=1e-12)
    assert rep.rhs == pytest.approx(phi(ell) - phi(ell) / phi(ell + r) * sym / r, rel=1e-12)
    assert rep.holds


def test_slicing_carved_hole():
    ell, r = 1.0, 0.5
    hole = CarvedSlab(-math.inf, math.inf, -0.3, -0.1, add=False)
    cfg = SlicingConfig(HalfspaceSpec.axis(2, -ell), r, slabs=(hole,))
    rep = slicing_bound(cfg)
    assert rep.lhs == pytest.approx(phi(ell), rel=1e-12)
    assert rep.config["symmetric_difference"] == pytest.approx(Phi(-ell - 0.1) - Phi(-ell - 0.3), rel=1e-12)


def test_slicing_rejects_bad_configs():
    with pytest.raises(DomainError):
        SlicingConfig(HalfspaceSpec.axis(2, 0.5), r=0.0)
    with pytest.raises(DomainError):
        GraphPerturbation((1.0, 0.0), (0.0, 0.1, 0.2))
    with pytest.raises(UnsupportedError):
        GraphPerturbation((), (math.inf,))
    with pytest.raises(UnsupportedError):
        SlicingConfig(HalfspaceSpec.axis(1, 0.5), 0.1, GraphPerturbation((0.0,), (0.0, 0.1)))
    with pytest.raises(UnsupportedError):
        CarvedSlab(0.0, 1.0, -math.inf, 0.0)


def test_slicing_fuzz_never_fails():
    reports = slicing_fuzz(count=60, seed=3)
    assert len(reports) == 60
    assert min(r.margin for r in reports) >= -1e-9


def test_slicing_fuzz_is_reproducible():
    a = [r.to_dict() for r in slicing_fuzz(count=5, seed=11)]
    b = [r.to_dict() for r in slicing_fuzz(count=5, seed=11)]
    assert a == b


# strip mass

def test_strip_mass_through_center():
    assert strip_mass(1.0, 0.0) == pytest.approx(phi(1.0) * (2.0 * Phi(0.5) - 1.0), rel=1e-12)


@pytest.mark.parametrize("ell", [0.3, 1.0, 2.5])
def test_strip_mass_vanishes_at_poles(ell):
    assert strip_mass(ell, 1.0) == 0.0
    assert strip_mass(ell, -1.0) == 0.0


def test_strip_mass_off_center_interval():
    assert strip_mass(1.0, 0.9) < phi(1.0) / 2.0


def test_strip_mass_domain():
    with pytest.raises(DomainError):
        strip_mass(0.0, 0.1)
    with pytest.raises(DomainError):
        strip_mass(1.0, 1.5)


def test_strip_constant_matches_dense_grid():
    q_star, maximum, grid_best = locate_strip_maximum(1.0)
    assert maximum >= grid_best
    dense = max(strip_mass(1.0, q) for q in np.linspace(-1.0, 1.0, 10_001))
    assert maximum >= dense - 1e-12
    assert strip_constant(1.0) == pytest.approx(phi(1.0) - strip_mass(1.0, q_star), abs=1e-15)


@pytest.mark.parametrize("ell", [0.5, 1.0, 2.0])
def test_strip_constant_positive_and_below_phi(ell):
    c = strip_constant(ell)
    assert 0.0 < c < phi(ell)


def test_strip_check_constant_f():
    rep = strip_bound_check(1.0, 0.3, 0.0, lambda s: 1.0)
    assert rep.lhs == pytest.approx(phi(1.0), rel=1e-9)
    assert rep.rhs == pytest.approx(strip_constant(1.0), rel=1e-12)
    assert rep.holds


def test_strip_check_exponential_f():
    rep = strip_bound_check(1.0, 0.0, 0.0, lambda s: math.expm1(0.5 * s * s))
    assert rep.margin > 0.0


def test_strip_check_large_deficit_is_trivial():
    c = strip_constant(1.5)
    rep = strip_bound_check(1.5, 0.2, c, lambda s: 1.0 + s)
    assert rep.rhs <= 0.0
    assert rep.margin >= 0.0


def test_strip_check_removes_where_f_is_largest():
    f = PiecewiseExponential(knots=(0.0,), rates=(1.0,), scales=(1.0,), floor=0.1)
    full = strip_bound_check(1.0, 0.4, 0.0, f)
    cut = strip_bound_check(1.0, 0.4, 0.05, f)
    assert cut.lhs < full.lhs
    assert cut.config["tau"] < math.inf
    assert cut.holds


def test_strip_check_rejects_decreasing_f():
    with pytest.raises(PreconditionError):
        strip_bound_check(1.0, 0.0, 0.0, lambda s: math.exp(-s))


def test_strip_fuzz_never_fails():
    reports = strip_fuzz(count=25, seed=5)
    assert min(r.margin for r in reports) >= -1e-9


# pointwise steps

def test_soft_threshold_examples():
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(2.0, 0.5) == 1.5
    assert soft_threshold(-2.0, 0.5) == -1.5
    s = np.array([-3.0, -0.2, 0.0, 4.5])
    assert np.array_equal(soft_threshold(s, 0.0), s)
    with pytest.raises(DomainError):
        soft_threshold(1.0, -0.1)


@given(st.floats(-1e6, 1e6), st.floats(0.0, 1e3))
def test_soft_threshold_is_odd_shrinkage(s, kappa):
    value = soft_threshold(s, kappa)
    assert soft_threshold(-s, kappa) == -value
    assert abs(value) == pytest.approx(max(abs(s) - kappa, 0.0))


def test_jensen_gap_equality_cases():
    assert jensen_gap([1.0, 0.0, 0.0], [1.7, -0.4, 2.0]) == pytest.approx(0.0, abs=1e-12)
    nu = np.array([0.6, 0.8])
    assert jensen_gap(nu, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_jensen_gap_strict_case():
    nu = np.array([1.0, 1.0]) / math.sqrt(2.0)
    expected = math.sqrt(0.5 * math.exp(4.0) + 0.5) - 1.0 - 0.5 * (math.exp(2.0) - 1.0)
    assert jensen_gap(nu, [2.0, 0.0]) == pytest.approx(expected, rel=1e-10)
    assert expected > 0.0


def test_jensen_gap_rejects_non_unit():
    with pytest.raises(DomainError):
        jensen_gap([1.0, 1.0], [0.0, 0.0])


def test_jensen_fuzz_nonnegative():
    gaps = jensen_fuzz(count=5000, seed=2)
    assert gaps.shape == (5000,)
    assert gaps.min() >= -1e-12


def test_cs_pointwise_examples():
    same = cs_pointwise([0.3, -1.2], [0.3, -1.2])
    assert (same.lhs, same.rhs, same.margin) == (0.0, 0.0, 0.0)
    tight = cs_pointwise([1.0, 0.0], [0.0, 1.0])
    assert tight.lhs == pytest.approx(2.0)
    assert tight.rhs == pytest.approx(2.0)
    assert tight.margin == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        cs_pointwise([1.0, 2.0], [1.0])


def test_cs_fuzz_never_fails():
    reports = cs_fuzz(count=500, seed=9)
    assert min(r.margin for r in reports) >= -1e-12


def test_delta_threshold():
    assert delta_threshold(0.5) == 0.0
    assert delta_threshold(0.25) == pytest.approx((0.6744897501960817 / 4.0) ** 4, rel=1e-9)
    assert delta_threshold(1e-9) == 1.0
    assert delta_threshold(0.0) == 1.0
    assert delta_threshold(1.0) == 1.0
    assert delta_threshold(0.1) == pytest.approx(delta_threshold(0.9), rel=1e-12)


# Gaussian isoperimetry

@pytest.mark.parametrize("offset", [-1.3, 0.0, 0.4])
def test_halfspace_isoperimetry_is_equality(offset):
    h = HalfspaceSpec.axis(2, offset)
    rep = gaussian_isoperimetry_margin(h, Phi(offset))
    assert abs(rep.margin) <= 1e-9


def test_halfspace_isoperimetry_checks_volume():
    with pytest.raises(PreconditionError):
        gaussian_isoperimetry_margin(HalfspaceSpec.axis(2, 0.0), 0.3)


def test_transported_quarter_disc_is_strictly_worse():
    spec = CandidateSpec(CandidateFamily.VERTEX_BALL, 2, 0.1)
    rep = gaussian_isoperimetry_margin(spec, 0.1, nodes=20_000)
    assert rep.margin > 1e-3


def test_tilted_halfspace_surface_through_origin():
    h = HalfspaceSpec(np.array([1.0, 1.0]) / math.sqrt(2.0), 0.0)
    rep = gaussian_isoperimetry_margin(analytic_halfspace_surface(h), 0.5)
    assert abs(rep.margin) < 1e-6


def test_gap_probe_penalty_stays_positive():
    rows = theorem_gap_probe(0.25, dims=(1, 2), nodes=2500)
    assert [row["dimension"] for row in rows] == [1, 2]
    for row in rows:
        assert row["penalty"] > 1e-3
        assert row["delta1"] == pytest.approx(delta_threshold(0.25))
