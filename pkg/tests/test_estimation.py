import math

import numpy as np
import pytest

from twoscale.compare import diff_passes, golden_spike_singular, ym_diff
from twoscale.estimation import (EstimatorOptions, estimate_young_measure, evaluate_I_eps,
                                 evaluate_I_eps_sequence, two_scale_limit)
from twoscale.integrands import get_integrand
from twoscale.sequences import ResolutionError, make_sequence, parse_schedule
from twoscale.young import pair

E = math.e


def test_parse_schedule_forms():
    assert parse_schedule("2^-k,k=2..4") == (0.25, 0.125, 0.0625)
    assert parse_schedule("0.5,0.25") == (0.5, 0.25)
    assert parse_schedule("1/(2*j),j=1|2") == (0.5, 0.25)
    assert parse_schedule("a/(2^j+xi),j=1..2", {"a": 1.0, "xi": 0.0}) == (0.5, 0.25)
    with pytest.raises(ValueError):
        make_sequence("spike", "0.1,0.2", 64)


def test_spike_generate_tv_one():
    m = make_sequence("spike", "0.1", 4000, alpha=1.0).generate(0.1)
    inside = m.domain.centers()[:, 0]
    assert m.total_variation() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(m.density[(inside > 0.001) & (inside < 0.099), 0], 10.0)


def test_fakir_blocks():
    spec = make_sequence("fakir", "0.25", 64)
    lo, hi, val = spec.pieces(0.25)
    assert len(lo) == 3 and np.allclose(hi - lo, 1 / 16)
    assert val[:, 0].tolist() == [4.0, -4.0, 4.0]
    assert spec.total_variation(0.25) == pytest.approx(0.75)
    assert spec.generate(0.25).total_variation() == pytest.approx(0.75)


def test_sine_sampling():
    spec = make_sequence("sine", "0.5", 64, alpha=1.0)
    x = np.linspace(0, 1, 9)[:, None]
    assert np.allclose(spec(x, 0.5)[:, 0], np.sin(2 * math.pi * x[:, 0] / 0.5))


def test_generate_refuses_unresolved_pieces():
    with pytest.raises(ResolutionError, match="resolution insufficient"):
        make_sequence("spike", "2^-k,k=8..9", 64, alpha=2.0).generate(2.0**-9)


def test_I_eps_spike_limit():
    f = get_integrand("tensor:expx:cos1:shift")
    spec = make_sequence("spike", "2^-k,k=10..12", 4096, alpha=2.0)
    val = evaluate_I_eps_sequence(f, spec, 2.0**-12)
    expect = math.sqrt(2.0) * (E - 1 / E) + 2.0
    assert val == pytest.approx(expect, abs=5e-3)


def test_I_eps_constant_one():
    spec = make_sequence("fakir", "1/(2*j),j=1..4", 64)
    assert evaluate_I_eps_sequence(get_integrand("one"), spec, 0.125) == pytest.approx(1.0, abs=1e-12)
    assert evaluate_I_eps(get_integrand("one"), spec.generate(0.125), 0.125) == pytest.approx(1.0, abs=1e-12)


def test_I_eps_fakir_exact_and_limit():
    from scipy.integrate import quad
    f = get_integrand("tensor:expx:cos1:abs")
    k = 200
    spec = make_sequence("fakir", f"1/(2*j),j=1..{k // 2}", 400)
    exact = sum(quad(lambda x: k * math.exp(x) * (1 + math.cos(2 * math.pi * k * x)), i / k, i / k + 1 / k**2)[0]
                for i in range(k // 2 + 1))
    val = evaluate_I_eps_sequence(f, spec, 1 / k)
    assert val == pytest.approx(exact, rel=1e-8)
    # the limit g(0)∫_0^{1/2}φ is approached at rate 1/k (one extra block)
    assert abs(val - 2.0 * (math.sqrt(E) - 1.0)) < 3.0 / k


def test_estimate_spike_golden_and_pairing():
    spec = make_sequence("spike", "2^-k,k=4..12", 4096, alpha=2.0)
    ym, rows = estimate_young_measure(spec, EstimatorOptions(), log=True,
                                      test_integrands=[get_integrand("abs"), get_integrand("sqrt1pz2")])
    assert all(diff_passes(ym_diff(ym, golden_spike_singular(ym.omega, ym.torus))).values())
    errs = [r["pairing_error"] for r in rows]
    assert errs[-1] < errs[0] and errs[-1] < 1e-2


def test_estimate_zero_sequence():
    spec = make_sequence("zero", "0.5,0.25", 16)
    ym = estimate_young_measure(spec, EstimatorOptions(torus_resolution=8))
    assert ym.lam.total_mass() == 0 and np.allclose(ym.nu_points, 0.0)


def test_two_scale_limit_sine():
    # ε ≪ cell width, so every macro cell sees the whole torus
    spec = make_sequence("sine", "2^-k,k=10..12", 64, alpha=1.0)
    lim = two_scale_limit(spec, opts=EstimatorOptions(torus_resolution=64))
    assert lim.checks["max_test_error"] < 1e-6
    xi = lim.torus.centers()[:, 0]
    # θ_x = sin(2π ξ) L_Z at every regular x
    prof = lim.theta[10, :, 0]
    assert np.max(np.abs(prof - np.sin(2 * math.pi * xi))) < 1e-9


def test_two_scale_limit_zero():
    lim = two_scale_limit(make_sequence("zero", "0.5,0.25", 16), opts=EstimatorOptions(torus_resolution=8))
    assert np.allclose(lim.theta, 0.0) and lim.total_variation() == 0.0


def test_two_scale_limit_translated_spike():
    a = 1 / math.sqrt(2)
    spec = make_sequence("translated_spike", "a/(2^j+xi),j=4..12", 4096, a=a, b=0.3, xi=0.1)
    lim = two_scale_limit(spec, opts=EstimatorOptions())
    assert lim.kappa.atom_masses.sum() == pytest.approx(1.0, rel=1e-3)
    s = lim.kappa.domain.size + int(np.argmax(lim.kappa.atom_masses))
    peak = lim.torus.centers()[np.argmax(lim.theta[s, :, 0]), 0]
    assert abs(peak - 0.4) <= 2 / lim.torus.size


def test_estimated_pair_matches_direct_limit():
    spec = make_sequence("osc1d", "2^-k,k=8..10", 64, z0=(1.0,))
    ym = estimate_young_measure(spec, EstimatorOptions(torus_resolution=64))
    f = get_integrand("aniso_quad")
    direct = evaluate_I_eps_sequence(f, spec, 2.0**-10)
    assert direct == pytest.approx(math.sqrt(3.0), rel=1e-3)
    assert pair(f, ym) == pytest.approx(direct, rel=1e-2)
