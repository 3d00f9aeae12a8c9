import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from calabiflow import (
    AdmissibleClass,
    FlowRun,
    RunConfig,
    SymplecticPotential,
    build_grid,
    save_polytope,
    standard_triangle,
)


@pytest.fixture(scope="session")
def triangle():
    return standard_triangle()


@pytest.fixture(scope="session")
def grid48(triangle):
    return build_grid(triangle, 48, 0.5 * 3.0 / 48)


@pytest.fixture(scope="session")
def grid96(triangle):
    return build_grid(triangle, 96, 0.5 * 3.0 / 96)


@pytest.fixture(scope="session")
def fs48(triangle, grid48):
    return SymplecticPotential.fubini_study(grid48)


@pytest.fixture(scope="session")
def fs48_fd(triangle, grid48):
    return SymplecticPotential.from_node_values(triangle, grid48, np.zeros(grid48.n_nodes))


@pytest.fixture(scope="session")
def fs96(triangle, grid96):
    return SymplecticPotential.fubini_study(grid96)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)


def interior_points(polytope, rng, n, margin=0.3):
    """Random points at distance >= margin from the boundary."""
    pts = []
    lo, hi = polytope.bbox
    while len(pts) < n:
        c = rng.uniform(lo, hi)
        if polytope.contains(c) and polytope.distance_to_boundary(c) >= margin:
            pts.append(c)
    return np.array(pts)


@pytest.fixture(scope="session")
def bundle_class():
    return AdmissibleClass(p=(1.0, 1.0), c_S=12.0, scal_S=-1.0, m=1, chi_S=-2)


@pytest.fixture(scope="session")
def triangle_file(tmp_path_factory, triangle):
    path = tmp_path_factory.mktemp("polytope") / "triangle.json"
    save_polytope(triangle, path)
    return path


@pytest.fixture(scope="session")
def perturbed_run(triangle_file, bundle_class, tmp_path_factory):
    """The 200-step perturbed-canonical flow shared by the flow tests."""
    out = tmp_path_factory.mktemp("flow_out")
    cfg = RunConfig(
        polytope_path=str(triangle_file),
        admissible_class=bundle_class,
        grid_n=48,
        perturbation_kind="bump",
        perturbation_amplitude=0.05,
        perturbation_width=0.8,
        t_end=1.0,
        max_steps=200,
        monitor_every=5,
        snapshot_every=0,
        out_dir=str(out),
    )
    fr = FlowRun(cfg)
    fr.keep_states = True
    fr.advance()
    fr.write_outputs()
    return fr


@pytest.fixture(scope="session")
def fixed_point_run(triangle_file, tmp_path_factory):
    """100 steps from the exact canonical potential in the trivial class."""
    out = tmp_path_factory.mktemp("fs_out")
    cfg = RunConfig(
        polytope_path=str(triangle_file),
        admissible_class=AdmissibleClass.trivial(),
        grid_n=48,
        perturbation_kind="none",
        t_end=1.0,
        max_steps=100,
        monitor_every=5,
        snapshot_every=0,
        out_dir=str(out),
    )
    fr = FlowRun(cfg)
    fr.advance()
    return fr
