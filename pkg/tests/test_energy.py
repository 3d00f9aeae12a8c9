import numpy as np
import pytest
from scipy.integrate import quad

from calabiflow import (
    AdmissibleClass,
    DegenerateInputError,
    SymplecticPotential,
    abreu_scalar_field,
    average_scalar,
    build_grid,
    energy_report,
    interior_quadrature,
    mixed_trace,
    polynomial_form,
    weighted_scalar_field,
)
from calabiflow.energy import boundary_integral, cauchy_schwarz_gap, dissipation_integral


def test_quadrature_constant(grid96):
    assert interior_quadrature(grid96, np.ones(grid96.n_nodes)) == pytest.approx(4.5, abs=1e-6)


def test_quadrature_linear_symmetry(grid96):
    assert interior_quadrature(grid96, grid96.points[:, 0]) == pytest.approx(0.0, abs=1e-6)
    assert interior_quadrature(grid96, grid96.points[:, 1]) == pytest.approx(0.0, abs=1e-6)


def test_quadrature_refinement_order(triangle):
    import sympy as sp

    sx, sy = sp.symbols("x y")
    exact = float(sp.integrate(sp.integrate(sp.cos(sx) * sp.exp(sy / 3), (sy, -1, 1 - sx)), (sx, -1, 2)))
    errs = []
    for n in (48, 96):
        g = build_grid(triangle, n, 0.5 * 3.0 / n)
        f = np.cos(g.points[:, 0]) * np.exp(g.points[:, 1] / 3)
        errs.append(abs(interior_quadrature(g, f) - exact))
    assert 3.0 <= errs[0] / errs[1] <= 10.0


def test_quadrature_shape_check(grid48):
    with pytest.raises(DegenerateInputError):
        interior_quadrature(grid48, np.ones(3))


def test_average_scalar_trivial(triangle, grid96):
    assert average_scalar(triangle, AdmissibleClass.trivial(), grid96) == pytest.approx(4.0, abs=1e-10)


def test_average_scalar_constant_weight(triangle, grid96):
    cls = AdmissibleClass((0.0, 0.0), 2.0, -1.0, 1, -2)
    assert average_scalar(triangle, cls, grid96) == pytest.approx(-0.5 + 4.0, abs=1e-10)


def test_average_scalar_two_routes(triangle, grid96, fs96, bundle_class):
    r1 = average_scalar(triangle, bundle_class, grid96)
    pw = bundle_class.weight(grid96.points)
    W = weighted_scalar_field(fs96, bundle_class)
    r2 = interior_quadrature(grid96, W * pw) / interior_quadrature(grid96, pw)
    assert r1 == pytest.approx(r2, abs=1e-5)


def test_average_scalar_closed_form(triangle, grid96, bundle_class):
    # affine-weight case is exactly (scal * area + 2 * weighted boundary) / weighted volume
    r = average_scalar(triangle, bundle_class, grid96)
    assert r == pytest.approx((-4.5 + 2 * 108.0) / 54.0, abs=1e-12)


def test_energy_report_fs_trivial(fs96, grid96):
    rep = energy_report(fs96, AdmissibleClass.trivial())
    assert rep.area == pytest.approx(4.5, abs=1e-10)
    assert rep.r_bar == pytest.approx(4.0, abs=1e-10)
    assert rep.calabi == pytest.approx(0.0, abs=1e-12)
    assert rep.dissipation == pytest.approx(0.0, abs=1e-10)
    assert rep.invariant_j == pytest.approx(6.0, abs=1e-6)
    assert rep.total_rm2 >= 0 and rep.fiber_rm2_unweighted >= 0


def test_boundary_u_against_1d_oracle(fs96, triangle):
    # per facet the canonical potential restricts to (s ln s + (3-s) ln(3-s))/2
    val, _ = quad(
        lambda s: 0.5 * (s * np.log(s) + (3 - s) * np.log(3 - s)) if 0 < s < 3 else 0.0,
        0.0, 3.0, limit=200,
    )
    rep = energy_report(fs96, AdmissibleClass.trivial())
    assert rep.boundary_u == pytest.approx(3 * val, abs=1e-4)


def test_total_scalar_integral_class_invariance(triangle, grid96, rng):
    # int R dmu = twice the boundary measure, for any admissible potential
    base = SymplecticPotential.fubini_study(grid96)
    assert interior_quadrature(grid96, abreu_scalar_field(base)) == pytest.approx(18.0, abs=1e-6)
    for _ in range(5):
        coeffs = {
            (a, b): rng.uniform(-3e-3, 3e-3)
            for (a, b) in [(2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]
        }
        u = SymplecticPotential.from_closed_form(triangle, grid96, polynomial_form(coeffs))
        assert interior_quadrature(grid96, abreu_scalar_field(u)) == pytest.approx(18.0, abs=1e-4)


def test_weighted_scalar_integral_class_invariance(triangle, grid96, bundle_class, rng):
    pw = bundle_class.weight(grid96.points)
    base = SymplecticPotential.fubini_study(grid96)
    ref = interior_quadrature(grid96, weighted_scalar_field(base, bundle_class) * pw)
    for _ in range(5):
        coeffs = {
            (a, b): rng.uniform(-1e-3, 1e-3)
            for (a, b) in [(2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]
        }
        u = SymplecticPotential.from_closed_form(triangle, grid96, polynomial_form(coeffs))
        val = interior_quadrature(grid96, weighted_scalar_field(u, bundle_class) * pw)
        assert val == pytest.approx(ref, abs=1e-4)


def test_mixed_trace_self(fs96):
    t01, t10 = mixed_trace(fs96, fs96)
    assert t01 == pytest.approx(9.0, abs=1e-10)
    assert t10 == pytest.approx(9.0, abs=1e-10)


def test_mixed_trace_swap_symmetry(triangle, grid96, fs96):
    u1 = SymplecticPotential.from_closed_form(
        triangle, grid96, polynomial_form({(2, 0): 0.05, (0, 2): 0.03})
    )
    a, b = mixed_trace(fs96, u1)
    c, d = mixed_trace(u1, fs96)
    assert a == pytest.approx(d, rel=1e-12)
    assert b == pytest.approx(c, rel=1e-12)


def test_mixed_trace_grid_mismatch(triangle, fs48, fs96):
    with pytest.raises(DegenerateInputError):
        mixed_trace(fs48, fs96)


def test_mixed_trace_against_oracle(triangle, fs96, grid96):
    # quadratic correction: u1_{ij} = u0_{ij} + diag(2c), closed-form reference
    # via high-resolution quadrature of the analytic integrand
    c = 0.05
    u1 = SymplecticPotential.from_closed_form(
        triangle, grid96, polynomial_form({(2, 0): c, (0, 2): c})
    )
    t01, t10 = mixed_trace(fs96, u1)
    gfine = build_grid(triangle, 256, 0.5 * 3 / 256)
    u0f = SymplecticPotential.fubini_study(gfine)
    u1f = SymplecticPotential.from_closed_form(
        triangle, gfine, polynomial_form({(2, 0): c, (0, 2): c})
    )
    r01, r10 = mixed_trace(u0f, u1f)
    assert t01 == pytest.approx(r01, rel=5e-4)
    assert t10 == pytest.approx(r10, rel=5e-4)


def test_dissipation_nonnegative_and_cs_bound(triangle, grid48, bundle_class):
    u = SymplecticPotential.from_closed_form(
        triangle, grid48, polynomial_form({(3, 0): 0.01, (2, 1): -0.008})
    )
    d = dissipation_integral(u, bundle_class)
    assert d >= 0
    gap = cauchy_schwarz_gap(u, bundle_class)
    assert gap >= -1e-9 * max(d, 1.0)


def test_boundary_integral_weight(triangle, bundle_class):
    # affine weights integrate exactly against the lattice boundary measure
    val = boundary_integral(triangle, lambda pts: bundle_class.affine(pts))
    assert val == pytest.approx(108.0, abs=1e-9)
