import json
import math

import numpy as np
import pytest

from conftest import analytic_ym
from twoscale.compare import golden_fakir, golden_spike_singular
from twoscale.integrands import get_integrand
from twoscale.measures import VectorMeasure, interval, torus
from twoscale.young import (CompactifiedMeasure, NotAYoungMeasure, compactify, decompose_compactified, dumps,
                            elementary, embed_measure, pair, pair_bound, pair_compactified,
                            representation_tolerance, verify_representation_identity, ym_from_json,
                            ym_max_abs_difference, ym_to_json)

E = math.e


def test_pair_probability_normalization():
    ym = analytic_ym(3, d=1, N=1)
    f = get_integrand("tensor:expx:cos1:one")
    # h = 1 has zero recession, so only ∫φ ∫g survives
    assert pair(f, ym) == pytest.approx(E - 1.0, rel=1e-3)


def test_pair_spike_singular():
    ym = golden_spike_singular()
    f = get_integrand("tensor:expx:cos1:shift")
    g0 = 1.0 + math.cos(2 * math.pi * ym.torus.centers()[0, 0])
    expect = math.sqrt(2.0) * (E - 1 / E) + 1.0 * g0 * 1.0
    assert pair(f, ym) == pytest.approx(expect, rel=1e-6)


def test_pair_fakir():
    ym = golden_fakir()
    f = get_integrand("tensor:expx:cos1:abs")
    g0 = 1.0 + math.cos(2 * math.pi * ym.torus.centers()[0, 0])
    # h(0) = 0; h∞(±1) = 1; ∫_0^{1/2} e^x = e^{1/2} − 1
    assert pair(f, ym) == pytest.approx(g0 * (math.sqrt(E) - 1.0), rel=1e-6)


def test_compactify_zero_fibers():
    ym = elementary(interval(0, 1, 8), torus(1, 8))
    mu = compactify(ym)
    assert np.allclose(mu.int_points, 0.0)
    assert mu.int_mass.sum() == pytest.approx(1.0) and mu.bnd_mass.sum() == 0
    back = decompose_compactified(mu)
    assert np.allclose(back.nu_points, 0.0) and back.lam.total_mass() == 0


def test_compactify_spike_boundary_shell():
    ym = golden_spike_singular(interval(-1, 1, 64), torus(1, 16))
    mu = compactify(ym)
    idx = np.argwhere(mu.bnd_mass > 0)
    assert len(idx) == 1 and idx[0, 0] == 64 and idx[0, 1] == 0
    assert np.allclose(mu.bnd_points[tuple(idx[0])], [1.0])
    for name in ("abs", "one", "sqrt1pz2", "tensor:one:halfcos:abs", "tensor:expx:cos1:shift", "pos", "neg",
                 "tensor:one:sin1:pos", "z1", "sinpz"):
        f = get_integrand(name)
        assert pair_compactified(f, mu) == pytest.approx(pair(f, ym), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_roundtrip(seed):
    ym = analytic_ym(seed)
    back = decompose_compactified(compactify(ym))
    assert ym_max_abs_difference(ym, back) < 1e-12


def test_doubled_interior_rejected():
    mu = compactify(analytic_ym(1, d=1))
    assert verify_representation_identity(mu) < representation_tolerance(mu)
    bad = mu.scaled(interior=2.0)
    assert verify_representation_identity(bad) == pytest.approx(1.0, rel=0.05)
    with pytest.raises(NotAYoungMeasure):
        decompose_compactified(bad)


def test_zero_measure_fails_identity():
    om, tz = interval(0, 1, 8), torus(1, 8)
    mu = CompactifiedMeasure(om, tz, np.zeros((8, 8, 1, 1)), np.zeros((8, 8, 1)), np.zeros((0, 1)),
                             np.ones((8, 8, 1, 1)), np.zeros((8, 8, 1)))
    assert verify_representation_identity(mu) >= 1.0
    with pytest.raises(NotAYoungMeasure):
        decompose_compactified(mu)


def test_embed_zero_measure():
    om, tz = interval(0, 1, 8), torus(1, 4)
    ym = embed_measure(VectorMeasure(om, np.zeros(8)), tz)
    assert np.allclose(ym.nu_points, 0.0) and ym.lam.total_mass() == 0
    assert np.allclose(ym.rho, 0.25)


def test_embed_atom():
    om, tz = interval(-1, 1, 8), torus(1, 4)
    ym = embed_measure(VectorMeasure(om, np.zeros(8), [[0.0]], [[1.0]], [1.0]), tz)
    assert ym.atom_masses.tolist() == [1.0] and np.allclose(ym.rho[8], 0.25)
    assert np.allclose(ym.inf_dirs[8, :, 0, 0], 1.0)


def test_embed_pairing_oracle():
    om = interval(0, 1, 400)
    x = om.centers()[:, 0]
    m = VectorMeasure(om, x, [[0.5]], [[-1.0]], [2.0])
    ym = embed_measure(m, torus(1, 4))
    f = get_integrand("tensor:expx:one:abs")
    # ∫ e^x x dx = 1 plus the atom 2 e^{1/2}
    assert pair(f, ym) == pytest.approx(1.0 + 2.0 * math.sqrt(E), rel=1e-5)


def test_pair_bound_dominates():
    ym = analytic_ym(4, d=1, N=1)
    for name in ("abs", "sqrt1pz2", "tensor:expx:cos1:shift"):
        f = get_integrand(name)
        assert abs(pair(f, ym)) <= pair_bound(f, ym) + 1e-12


def test_json_roundtrip_is_exact():
    ym = analytic_ym(6)
    text = dumps(ym_to_json(ym))
    back = ym_from_json(json.loads(text))
    assert ym_max_abs_difference(ym, back) == 0.0
    assert dumps(ym_to_json(back)) == text


def test_invalid_fibers_rejected():
    ym = elementary(interval(0, 1, 4), torus(1, 4))
    with pytest.raises(ValueError):
        type(ym)(ym.omega, ym.torus, ym.nu_points, 2 * ym.nu_weights, ym.lam_density, ym.atom_locs,
                 ym.atom_masses, ym.rho, ym.inf_dirs, ym.inf_weights)
