import math

import numpy as np
import pytest

from twoscale.compare import diff_passes
from twoscale.estimation import EstimatorOptions, estimate_young_measure
from twoscale.localization import (BlowupSpec, LocalizationError, blow_up, tangent_measures, tangent_young,
                                   torus_translate, xi0_from_schedule)
from twoscale.measures import ScalarMeasure, VectorMeasure, interval, torus
from twoscale.sequences import make_sequence


def test_regular_blowup_fixed_point():
    m = ScalarMeasure(interval(0, 1, 200), np.full(200, 2.5))
    t = blow_up(m, (0.5,), 0.1, "regular", 10)
    assert np.allclose(t.density, 2.5)


def test_singular_blowup_unit_atom():
    m = VectorMeasure(interval(0, 1, 100), np.zeros(100), [[0.3]], [[1.0]], [4.0])
    t = blow_up(m, (0.3,), 0.05, "singular", 8)
    assert np.allclose(t.atom_locs, [[0.0]]) and t.atom_masses[0] == pytest.approx(1.0)


def test_blowup_density_x_quadrature():
    m = ScalarMeasure(interval(0, 1, 2000), interval(0, 1, 2000).centers()[:, 0])
    t = blow_up(m, (0.5,), 0.1, "regular", 10)
    y = t.domain.centers()[:, 0]
    assert np.allclose(t.density, 0.5 + 0.1 * y, atol=1e-12)


def test_blowup_rejects_cube_outside():
    m = ScalarMeasure(interval(0, 1, 10), np.ones(10))
    with pytest.raises(ValueError):
        blow_up(m, (0.02,), 0.1)


def test_blowup_spec_validation():
    with pytest.raises(ValueError):
        BlowupSpec((0.0,), (0.1, 0.2))


def test_torus_translate_examples():
    tz = torus(1, 10)
    uni = ScalarMeasure(tz, np.ones(10))
    assert np.allclose(torus_translate(uni, (0.37,)).density, 1.0)
    d = np.zeros(10)
    d[3] = 1.0
    out = torus_translate(d, (0.1,), tz)
    assert out[2] == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    p = rng.uniform(size=10)
    back = torus_translate(torus_translate(p, (0.3,), tz), (-0.3,), tz)
    assert np.allclose(back, p, atol=1e-14)


def test_tangent_measures_lebesgue_and_atom():
    m = ScalarMeasure(interval(0, 1, 512), np.ones(512))
    _, info = tangent_measures(m, (0.4,), (0.2, 0.1, 0.05), 8)
    assert info["converged"] and np.allclose(info["tangent"].density, 1.0)
    fak = ScalarMeasure(interval(0, 1, 512), (interval(0, 1, 512).centers()[:, 0] < 0.5).astype(float) * 2)
    _, info = tangent_measures(fak, (0.25,), (0.2, 0.1), 8)
    assert np.allclose(info["tangent"].density, 1.0)
    at = ScalarMeasure(interval(0, 1, 64), np.zeros(64), [[0.5]], [2.0])
    _, info = tangent_measures(at, (0.5,), (0.2, 0.1), 8)
    assert info["tangent"].atom_masses.tolist() == [1.0] and np.allclose(info["tangent"].atom_locs, 0.0)


def test_xi0_from_schedule():
    spec = make_sequence("translated_spike", "a/(2^j+xi),j=4..8", 1024, a=0.7, b=0.3, xi=0.25)
    xi0, spread = xi0_from_schedule(spec, (0.7,))
    assert xi0[0] == pytest.approx(0.25, abs=1e-9) and spread < 1e-9
    bad = make_sequence("sine", "0.1,0.07,0.03", 64, alpha=1.0)
    with pytest.raises(LocalizationError, match="subsequence"):
        xi0_from_schedule(bad, (0.3,))


def test_tangent_spike_singular():
    spec = make_sequence("spike", "2^-k,k=4..12", 4096, alpha=2.0)
    ym = estimate_young_measure(spec, EstimatorOptions())
    res = tangent_young(ym, spec, (0.0,), "singular")
    tan = res.ym
    assert tan.atom_masses.sum() == pytest.approx(1.0)
    assert np.allclose(tan.atom_locs, 0.0, atol=2 / tan.omega.shape[0])
    s = tan.omega.size + int(np.argmax(tan.atom_masses))
    assert np.argmax(tan.rho[s]) == 0 and tan.rho[s, 0] > 0.95
    assert np.allclose(tan.inf_dirs[s, 0, 0], [1.0])


def test_tangent_sine_regular():
    spec = make_sequence("sine", "2^-k,k=10..12", 64, alpha=1.0)
    ym = estimate_young_measure(spec, EstimatorOptions(torus_resolution=32))
    res = tangent_young(ym, spec, (0.375,), "regular")
    tan = res.ym
    assert res.xi0 == pytest.approx((0.0,), abs=1e-9)
    assert tan.lam.total_mass() == 0
    assert np.allclose(tan.nu_points, tan.nu_points[:1])
    assert np.allclose(tan.rho, 1.0 / tan.torus.size)
    assert res.diff is not None and all(diff_passes(res.diff).values())


def test_tangent_translated_spike_is_delta_b():
    a = 1 / math.sqrt(2)
    spec = make_sequence("translated_spike", "a/(2^j+xi),j=4..12", 4096, a=a, b=0.3, xi=0.1)
    ym = estimate_young_measure(spec, EstimatorOptions())
    res = tangent_young(ym, spec, (a,), "singular")
    rho = res.rho_tangent()
    centers = ym.torus.centers()[:, 0]
    assert abs(float(rho @ centers) - 0.3) < 2 / ym.torus.size
    assert not res.warnings
