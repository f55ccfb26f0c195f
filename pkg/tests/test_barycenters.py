import math

import numpy as np
import pytest

from conftest import analytic_ym
from twoscale.barycenters import barycenter, reg_sing_partition, second_scale_barycenter
from twoscale.compare import golden_fakir, golden_spike_singular, golden_translated_spike
from twoscale.integrands import get_integrand
from twoscale.measures import ScalarMeasure, VectorMeasure, interval, torus
from twoscale.young import elementary, embed_measure


def test_partition_no_lambda():
    ym = elementary(interval(0, 1, 8), torus(1, 4))
    p = reg_sing_partition(ym)
    assert len(p.singular_points) == 0 and len(p.regular_cells) == 8


def test_partition_atom():
    p = reg_sing_partition(golden_spike_singular(interval(-1, 1, 32), torus(1, 8)))
    assert np.allclose(p.singular_points, [[0.0]]) and p.singular_sites.tolist() == [32]


def test_partition_fakir_has_no_singular_points():
    ym = golden_fakir(interval(0, 1, 64), torus(1, 8))
    assert ym.lam.total_mass() == pytest.approx(0.5)
    assert len(reg_sing_partition(ym).singular_points) == 0


def test_barycenter_of_embedding():
    om = interval(0, 1, 16)
    x = om.centers()[:, 0]
    m = VectorMeasure(om, np.stack([x, -x], axis=1), [[0.25]], [[0.6, -0.8]], [1.5])
    b = barycenter(embed_measure(m, torus(1, 4)))
    assert np.allclose(b.density, m.density)
    assert np.allclose(b.atom_masses, [1.5]) and np.allclose(b.atom_dirs, [[0.6, -0.8]])


def test_barycenter_spike_is_positive_atom():
    b = barycenter(golden_spike_singular(interval(-1, 1, 32), torus(1, 8)))
    assert isinstance(b, VectorMeasure)
    assert np.allclose(b.density, 0.0) and np.allclose(b.atom_dirs, [[1.0]]) and b.atom_masses[0] == 1.0


def test_abs_barycenter_fakir():
    ym = golden_fakir(interval(0, 1, 64), torus(1, 8))
    b = barycenter(ym, get_integrand("abs"))
    assert isinstance(b, ScalarMeasure)
    x = ym.omega.centers()[:, 0]
    assert np.allclose(b.density, (x < 0.5).astype(float))
    assert np.allclose(barycenter(ym).density, 0.0)


def test_second_scale_classical_two_scale_limit():
    om, tz = interval(0, 1, 8), torus(1, 16)
    x, xi = om.centers()[:, 0], tz.centers()[:, 0]
    u = np.sin(2 * math.pi * x)[:, None] * np.cos(2 * math.pi * xi)[None, :]
    ym = elementary(om, tz, 1, nu_point=u[..., None])
    ss = second_scale_barycenter(ym)
    assert np.allclose(ss.density[:8, :, 0], u)


def test_second_scale_translated_atom():
    tz = torus(1, 64)
    ym = golden_translated_spike(0.7, 0.3, interval(0, 1, 32), tz)
    ss = second_scale_barycenter(ym)
    s = 32
    assert ss.is_atom[s]
    hit = int(tz.cell_index(np.array([[0.3]]))[0])
    assert np.argmax(ss.density[s, :, 0]) == hit
    assert ss.total()[s, 0] == pytest.approx(1.0)


def test_second_scale_of_one_is_probability():
    ym = analytic_ym(2, d=1, N=1)
    ss = second_scale_barycenter(elementary(ym.omega, ym.torus), get_integrand("one"))
    assert np.allclose(ss.total()[: ym.omega.size], 1.0)
    # part of a ym with λ > 0 adds nothing for f = 1 since f∞ = 0
    assert np.allclose(second_scale_barycenter(ym, get_integrand("one")).total()[: ym.omega.size], 1.0)


def test_barycenter_mass_matches_pair():
    from twoscale.young import pair
    ym = analytic_ym(5, d=1, N=1)
    f = get_integrand("abs")
    assert barycenter(ym, f).total_mass() == pytest.approx(pair(f, ym), rel=1e-12)
