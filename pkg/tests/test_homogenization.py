import math

import numpy as np
import pytest

from twoscale.compare import golden_fakir
from twoscale.homogenization import (CellProblem, EnvelopeCache, cell_minimize, envelope, envelope_recession,
                                     gamma_liminf_demo, harmonic_mean_oracle, jensen_verify,
                                     piecewise_constant_oracle, recession_commute_check, recession_integrand)
from twoscale.integrands import NotInE2, coefficient, get_integrand
from twoscale.measures import GridDomain, VectorMeasure, interval, torus
from twoscale.pde import parse_operator
from twoscale.young import embed_measure

ZERO = parse_operator("zero", d=1, N=1)


def test_aniso_quad_matches_oracles():
    a = coefficient("2+sin")
    assert harmonic_mean_oracle(a, 1.0) == pytest.approx(math.sqrt(3.0), abs=1e-9)
    assert piecewise_constant_oracle(a, 1.0) == pytest.approx(math.sqrt(3.0), abs=1e-5)
    r = cell_minimize(CellProblem(get_integrand("aniso_quad"), ZERO, (1.0,), 1, 128), (1, 2))
    assert r.value == pytest.approx(math.sqrt(3.0), abs=1e-3)
    assert abs(r.R_sweep[1] - r.R_sweep[2]) < 1e-6


def test_quadratic_scaling_in_z():
    f = get_integrand("aniso_quad")
    assert envelope(f, ZERO, [0.5], grid=128) == pytest.approx(math.sqrt(3.0) / 4, abs=1e-3)


def test_ddx_admits_only_zero_corrector():
    # ker of d/dy on mean-zero periodic fields is {0}
    assert envelope(get_integrand("aniso_quad"), parse_operator("ddx"), [1.0]) == pytest.approx(2.0, abs=1e-6)


def test_y_independent_convex_is_unchanged():
    f = get_integrand("sqrt1pz2")
    r = cell_minimize(CellProblem(f, ZERO, (0.7,), 1, 32))
    assert r.value == pytest.approx(math.sqrt(1.49), abs=1e-9)
    assert np.max(np.abs(r.w)) < 1e-6


def test_zero_vector_gives_zero():
    assert envelope(get_integrand("abs"), ZERO, [0.0]) == pytest.approx(0.0, abs=1e-12)


def test_unbounded_cell_problem():
    op = parse_operator("zero", d=1, N=2)
    assert cell_minimize(CellProblem(get_integrand("tensor:one:diag:z1"), op, (1.0, 0.0), 1, 32)).value == -math.inf


def test_one_homogeneous_recession_is_itself():
    h = get_integrand("abs")
    assert recession_integrand(h).name == "abs#"
    r = recession_commute_check(h, ZERO, z_samples=[[1.5]])
    row = r["rows"][0]
    assert row["lhs"] == pytest.approx(row["rhs"], abs=1e-6)
    with pytest.raises(NotInE2):
        recession_integrand(get_integrand("aniso_quad"))


def test_superlinear_is_vacuous():
    r = recession_commute_check(get_integrand("aniso_quad"), ZERO)
    assert r["vacuous"] and r["passed"]


def test_weighted_linear_growth_commutes():
    # mass concentrates where a is smallest, so both sides are min a
    r = recession_commute_check(get_integrand("tensor:one:a:sqrt1pz2"), ZERO, z_samples=[[1.0]])
    row = r["rows"][0]
    y = (np.arange(64) + 0.5) / 64
    assert row["rhs"] == pytest.approx(float(np.min(2 + np.sin(2 * math.pi * y))), abs=1e-6)
    assert r["passed"]


def test_envelope_recession_secant():
    val, seq = envelope_recession(get_integrand("sqrt1pz2"), ZERO, [1.0])
    assert val == pytest.approx(1.0, abs=1e-6)
    assert all(b >= 1.0 for b in seq)


def test_envelope_cache_counts_solves():
    c = EnvelopeCache(get_integrand("aniso_quad"), ZERO, 64)
    v = c.exact((1.0,))
    assert c.exact((1.0,)) == v and c.solves == 1
    # linear interpolation overestimates a convex envelope between nodes
    assert c.interpolate((0.5,)) >= c.exact((0.5,)) - 1e-9
    assert c.interpolate((0.6,)) == pytest.approx(c.exact((0.6,)), abs=1e-9)


def test_jensen_on_embedded_constant():
    ym = embed_measure(VectorMeasure(interval(0, 1, 8), np.full((8, 1), 0.7)), torus(1, 8))
    rep = jensen_verify(ym, get_integrand("sqrt1pz2"), ZERO)
    assert rep.passed
    finite = [m for m in rep.margins.values() if math.isfinite(m)]
    assert finite and min(finite) == pytest.approx(0.0, abs=1e-9)


def test_jensen_fakir_abs():
    rep = jensen_verify(golden_fakir(interval(0, 1, 32), torus(1, 8)), get_integrand("abs"), ZERO)
    assert rep.passed and rep.margins["J1r"] == pytest.approx(0.0, abs=1e-9)


def test_gamma_y_independent():
    target = VectorMeasure(GridDomain("omega", (0.0,), (1.0,), (4,)), np.full((4, 1), 0.5))
    rep = gamma_liminf_demo(get_integrand("sqrt1pz2"), ZERO, target, "2^-k,k=4..6", 3, seed=1, grid=32)
    assert rep.I_hom == pytest.approx(math.sqrt(1.25), abs=1e-9)
    assert rep.passed and all(c["margin"] >= -1e-3 for c in rep.competitors)
