import math

import numpy as np
import pytest

from calabiflow import (
    AdmissibleClass,
    ClassTopology,
    RegimeError,
    certify,
    fiber_energy_bound,
    sobolev_bound,
    sobolev_inequality_test,
    yamabe_lower_bound,
)

PI2 = math.pi**2


@pytest.fixture(scope="module")
def topo():
    return ClassTopology.standard_o3()


def test_zero_energy_chain(topo):
    cert = certify(0.0, topo)
    assert cert.eq_cs_satisfied
    assert cert.yamabe_lower == pytest.approx(12 * math.pi, rel=1e-13)
    assert cert.sobolev_bound == pytest.approx(1.0, rel=1e-13)


def test_threshold_value(topo):
    cert = yamabe_lower_bound(0.0, topo)
    assert cert.eq_cs_threshold == pytest.approx(48 * PI2, rel=1e-13)
    assert cert.prop_threshold_variant == pytest.approx(96 * PI2, rel=1e-13)


def test_threshold_boundary(topo):
    cert = certify(48 * PI2, topo)
    assert cert.eq_cs_satisfied  # equality counts
    # the Yamabe gap closes exactly at the threshold
    assert cert.yamabe_lower - cert.calabi_l2 == pytest.approx(0.0, abs=1e-9)


def test_beyond_threshold_no_bound(topo):
    cert = certify(100 * PI2, topo)
    assert not cert.eq_cs_satisfied
    assert not cert.has_bound
    assert cert.to_dict()["sobolev_bound"] is None


def test_bound_monotone_in_energy(topo):
    cas = np.linspace(0.0, 47.5 * PI2, 20)
    bounds = [certify(float(v), topo).sobolev_bound for v in cas]
    assert all(np.isfinite(bounds))
    assert all(bounds[i] < bounds[i + 1] for i in range(len(bounds) - 1))


def test_bound_closed_form(topo):
    # 12 pi / (sqrt(144 pi^2 - 2 ca) - sqrt(ca)) for the O(3) class
    for ca_pi2 in (10.0, 30.0, 45.0):
        ca = ca_pi2 * PI2
        expect = 12.0 / (math.sqrt(144 - 2 * ca_pi2) - math.sqrt(ca_pi2))
        assert certify(ca, topo).sobolev_bound == pytest.approx(expect, rel=1e-12)


def test_negative_energy_rejected(topo):
    with pytest.raises(RegimeError):
        yamabe_lower_bound(-1.0, topo)


def test_controlled_class_chain(bundle_class):
    fb = fiber_energy_bound(bundle_class)
    assert fb.sup_rm2_pointwise < 0.5 + 4.0 / 3.0
    assert fb.inf_weight == pytest.approx(10.0)
    assert fb.sup_weight == pytest.approx(14.0)
    assert fb.fiber_l2_bound == pytest.approx(11.55, abs=1e-10)
    assert fb.ca_bound / PI2 == pytest.approx(44.4, abs=1e-10)
    assert fb.ca_bound < 45 * PI2
    cert = fb.certificate
    assert cert.eq_cs_satisfied
    assert cert.has_bound
    expect = 12 * math.pi / (math.sqrt(144 * PI2 - 2 * fb.ca_bound) - math.sqrt(fb.ca_bound))
    assert cert.sobolev_bound == pytest.approx(expect, rel=1e-12)


def test_controlled_class_larger_c(bundle_class):
    # any c_S above the threshold passes with a tighter interval ratio
    cls = AdmissibleClass((1.0, 1.0), 20.0, -1.0, 1, -2)
    fb = fiber_energy_bound(cls)
    base = fiber_energy_bound(bundle_class)
    assert fb.ca_bound < base.ca_bound


def test_regime_errors():
    with pytest.raises(RegimeError, match="c_S >= 12 p1"):
        fiber_energy_bound(AdmissibleClass((1.0, 1.0), 11.0, -1.0, 1, -2))
    with pytest.raises(RegimeError, match="chi"):
        fiber_energy_bound(AdmissibleClass((1.0, 1.0), 12.0, 0.0, 1, 0))
    with pytest.raises(RegimeError, match="p1 >= p2 >= 1"):
        fiber_energy_bound(AdmissibleClass((1.0, 0.5), 12.0, -1.0, 1, -2))
    with pytest.raises(RegimeError, match="m = 1"):
        fiber_energy_bound(AdmissibleClass((1.0, 1.0), 12.0, -1.0, 0, -2))


def test_topology_validation():
    with pytest.raises(RegimeError):
        ClassTopology(c1_squared=4.5, volume=-1.0, r_bar=4.0)


def test_ratio_constant_function(fs48):
    triv = AdmissibleClass.trivial()
    worst = sobolev_inequality_test(fs48, triv, [("one", lambda p: np.ones(len(p)),
                                                  lambda p: np.zeros((len(p), 2)))])
    assert worst == pytest.approx(4.5 ** (1 / 3) / 4.5**0.5, rel=1e-6)


def test_ratio_scale_invariance(fs48):
    triv = AdmissibleClass.trivial()

    def fam(lam):
        return [("f", lambda p: lam * (1 + p[:, 0]),
                 lambda p: np.tile([lam, 0.0], (len(p), 1)))]

    r1 = sobolev_inequality_test(fs48, triv, fam(1.0))
    r2 = sobolev_inequality_test(fs48, triv, fam(7.5))
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_ratio_below_certificate(fs48, bundle_class):
    fb = fiber_energy_bound(bundle_class)
    worst = sobolev_inequality_test(fs48, bundle_class)
    assert worst <= fb.certificate.sobolev_bound
