import numpy as np
import pytest

from calabiflow import (
    AdmissibleClass,
    ConfigError,
    FlowState,
    RunConfig,
    StepPolicy,
    SymplecticPotential,
    build_grid,
    eps_region,
    rhs,
    riemannian_distance,
    step,
)
from calabiflow.flow import boundary_ring, distance_field, proposed_dt
from calabiflow.errors import StiffnessError


def fd_state(potential):
    return FlowState(t=0.0, u=potential.with_node_values(potential.f_values))


def test_rhs_vanishes_at_fs_trivial(fs48):
    st = fd_state(fs48)
    v = rhs(st, AdmissibleClass.trivial())
    assert np.abs(v).max() <= 1e-9


def test_rhs_vanishes_constant_weight(fs48):
    cls = AdmissibleClass((0.0, 0.0), 2.0, -1.0, 1, -2)
    v = rhs(fd_state(fs48), cls)
    assert np.abs(v).max() <= 1e-9


def test_rhs_sign(fs48, triangle, grid48):
    # where R exceeds its average the potential must decrease
    from calabiflow import polynomial_form, weighted_scalar_field
    from calabiflow.energy import average_scalar

    u = SymplecticPotential.from_closed_form(
        triangle, grid48, polynomial_form({(4, 0): 0.002, (0, 4): 0.002})
    )
    cls = AdmissibleClass.trivial()
    r_bar = average_scalar(triangle, cls, grid48)
    v = rhs(fd_state(u), cls, r_bar=r_bar)
    W = weighted_scalar_field(u.with_node_values(u.f_values), cls)
    hot = W > r_bar
    assert np.all(v[hot] < 0)


def test_dt_scaling_h4(triangle, fs48):
    g192 = build_grid(triangle, 192, 0.5 * 3.0 / 192)
    u192 = SymplecticPotential.fubini_study(g192)
    dt48 = proposed_dt(fs48, 0.1)
    dt192 = proposed_dt(u192, 0.1)
    assert dt48 / dt192 == pytest.approx(256.0, rel=0.05)


def test_step_accepts_and_advances(fs48):
    st = fd_state(fs48)
    st2 = step(st, AdmissibleClass.trivial())
    assert st2.step_count == 1
    assert st2.t == st2.dt_last > 0


def test_stiffness_error_carries_state(fs48, triangle, grid48):
    from calabiflow import polynomial_form

    # valid state, absurd step size: every retry loses positivity in a stage
    u = SymplecticPotential.from_closed_form(
        triangle, grid48, polynomial_form({(2, 0): -0.1})
    )
    st = fd_state(u)
    policy = StepPolicy(sigma=1e15, max_retries=2)
    with pytest.raises(StiffnessError) as exc:
        step(st, AdmissibleClass.trivial(), policy)
    assert exc.value.last_state is st


def test_riemannian_distance_flat_metric(triangle, grid48):
    # identity Hessians: the graph distance approximates Euclidean length
    ident = np.tile(np.eye(2), (grid48.n_nodes, 1, 1))
    a = int(np.argmin(((grid48.points - (-0.5, -0.5)) ** 2).sum(axis=1)))
    b = int(np.argmin(((grid48.points - (0.75, 0.25)) ** 2).sum(axis=1)))
    d = distance_field(grid48, ident, [a])[b]
    euclid = np.hypot(*(grid48.points[a] - grid48.points[b]))
    assert euclid <= d <= 1.09 * euclid


def test_riemannian_distance_zero_on_overlap(fs48, triangle, grid48):
    ring = boundary_ring(grid48, eps_region(triangle, grid48, 0.25))
    assert riemannian_distance(fs48, ring, ring) == 0.0


def test_riemannian_distance_refinement_monotone(triangle):
    # refining the grid adds paths, so distances between shared lattice
    # endpoints can only shrink (edge metric sampling converges from above
    # for the convex canonical metric)
    pts = [(-0.5, -0.5), (0.5, 0.25)]
    vals = []
    for n in (24, 48):
        g = build_grid(triangle, n, 0.5 * 3.0 / n)
        u = SymplecticPotential.fubini_study(g)
        a = int(np.argmin(((g.points - pts[0]) ** 2).sum(axis=1)))
        b = int(np.argmin(((g.points - pts[1]) ** 2).sum(axis=1)))
        assert np.allclose(g.points[a], pts[0]) and np.allclose(g.points[b], pts[1])
        vals.append(riemannian_distance(u, [a], [b]))
    assert vals[1] <= vals[0] * (1 + 1e-9)


# -- fixed-point run ---------------------------------------------------------


def test_fixed_point_keeps_f_small(fixed_point_run):
    fr = fixed_point_run
    assert fr.state.step_count == 100
    assert np.abs(fr.state.u.f_values).max() <= 1e-8


def test_fixed_point_calabi_negligible(fixed_point_run):
    assert all(rec.calabi <= 1e-12 for rec in fixed_point_run.records)


def test_fixed_point_positivity(fixed_point_run):
    assert all(rec.positivity_ok for rec in fixed_point_run.records)


# -- perturbed run -----------------------------------------------------------


def test_perturbed_calabi_strictly_decreasing(perturbed_run):
    ca = [r.calabi for r in perturbed_run.records]
    assert all(ca[k + 1] < ca[k] for k in range(len(ca) - 1))


def test_perturbed_rate_residual(perturbed_run):
    res = [r.calabi_rate_residual for r in perturbed_run.records]
    assert all(r <= 0.05 for r in res[1:])


def test_perturbed_invariant_drift(perturbed_run):
    ij = [r.invariant_j for r in perturbed_run.records]
    drift = (max(ij) - min(ij)) / abs(ij[0])
    assert drift <= 0.01


def test_perturbed_l2_bounded(perturbed_run):
    l2 = [r.l2_u for r in perturbed_run.records]
    assert max(l2) <= 2.0 * perturbed_run.initial_witnesses.l2_u


def test_perturbed_q_d2_no_explosion(perturbed_run):
    q = [r.q_d2_max for r in perturbed_run.records]
    assert np.isfinite(q).all()
    assert max(q) <= 2.0 * max(q[0], 1.0)


def test_perturbed_dist_eps_positive(perturbed_run):
    d = [r.dist_eps for r in perturbed_run.records]
    assert min(d) > 0


def test_monitor_rows_increasing_in_t(perturbed_run):
    t = [r.t for r in perturbed_run.records]
    assert all(t[k + 1] > t[k] for k in range(len(t) - 1))


def test_monitor_csv_written(perturbed_run):
    import csv

    path = perturbed_run.cfg.out_dir + "/monitor.csv"
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == (
        "t,calabi,dissipation,calabi_rate_residual,l2_u,boundary_u,min_hess_eig,"
        "max_d1,max_d2,max_d3,max_d4,dist_eps,q_d2_max,invariant_j,positivity_ok"
    ).split(",")
    assert len(rows) == len(perturbed_run.records)


def test_run_config_unknown_perturbation(triangle_file, bundle_class):
    cfg = RunConfig(
        polytope_path=str(triangle_file),
        admissible_class=bundle_class,
        perturbation_kind="sawtooth",
    )
    from calabiflow.flow import FlowRun

    with pytest.raises(ConfigError):
        FlowRun(cfg)
