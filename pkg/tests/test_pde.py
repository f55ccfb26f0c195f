import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoscale.barycenters import second_scale_barycenter
from twoscale.compare import golden_spike_singular
from twoscale.estimation import EstimatorOptions, estimate_young_measure
from twoscale.pde import (a_residual, field_residual, parse_operator, project_A_free, structure_check, symbol,
                          wave_cone_test)
from twoscale.sequences import make_sequence, stream_field


def test_symbol_ddx():
    assert np.allclose(symbol(parse_operator("ddx"), [2.0]), [[2.0]])


def test_symbol_grad_has_trivial_kernel():
    s = symbol(parse_operator("grad_scalar:d=2"), [0.6, 0.8])
    assert s.shape == (2, 1) and np.allclose(s[:, 0], [0.6, 0.8])
    assert np.linalg.svd(s, compute_uv=False).min() > 0.99


def test_symbol_div_kernel_is_perp():
    eta = np.array([0.6, 0.8])
    s = symbol(parse_operator("div:d=2"), eta)
    _, sv, vt = np.linalg.svd(s)
    ker = vt[-1]
    assert abs(ker @ eta) < 1e-12


def test_wave_cone_membership():
    out = wave_cone_test(parse_operator("grad_scalar:d=2"), [1.0])
    assert not out.inside and out.distance == pytest.approx(1.0)
    inn = wave_cone_test(parse_operator("div:d=2"), [1.0, 0.0])
    assert inn.inside and abs(inn.eta[0]) < 1e-6
    assert wave_cone_test(parse_operator("zero", d=2, N=3), [1.0, -2.0, 0.5]).inside


def test_projection_constant_and_ddx():
    op = parse_operator("div:d=2")
    assert np.allclose(project_A_free(np.ones((8, 8, 2)), op), 0.0)
    rng = np.random.default_rng(0)
    assert np.allclose(project_A_free(rng.normal(size=32), parse_operator("ddx")), 0.0)


def test_projection_keeps_curl_fields():
    n = 32
    rng = np.random.default_rng(3)
    k = np.fft.fftfreq(n, 1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    psi_hat = np.fft.fft2(rng.normal(size=(n, n)))
    psi_hat[:, n // 2] = psi_hat[n // 2, :] = 0.0
    # w = ∇^⊥ψ spectrally, exactly divergence-free
    w = np.stack([np.real(np.fft.ifft2(2j * math.pi * ky * psi_hat)),
                  np.real(np.fft.ifft2(-2j * math.pi * kx * psi_hat))], axis=-1)
    w -= w.mean(axis=(0, 1))
    op = parse_operator("div:d=2")
    assert np.max(np.abs(project_A_free(w, op) - w)) < 1e-10 * max(1.0, np.max(np.abs(w)))
    assert field_residual(w, op) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["div:d=2", "curl:d=2", "grad_scalar:d=2"]))
def test_projection_is_idempotent_and_free(seed, name):
    op = parse_operator(name)
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(16, 16, op.E))
    p = project_A_free(w, op)
    assert field_residual(p, op) < 1e-10
    assert np.allclose(project_A_free(p, op), p, atol=1e-12)


def test_residual_zero_operator_is_vacuous():
    ym = estimate_young_measure(make_sequence("sine", "2^-k,k=8..10", 64, alpha=1.0),
                                EstimatorOptions(torus_resolution=32))
    assert a_residual(second_scale_barycenter(ym), parse_operator("zero", d=1, N=1)) == 0.0


def test_divfree_residual_decreases():
    op = parse_operator("div:d=2")
    res = []
    for n in (32, 64):
        ym = estimate_young_measure(make_sequence("divfree2d", "1/4", 4, amplitude=1.0),
                                    EstimatorOptions(torus_resolution=n, max_samples=1_000_000))
        res.append(a_residual(second_scale_barycenter(ym), op))
    assert res[1] < res[0] < 1e-2


def test_stream_field_is_divergence_free():
    # C² only: sampled residual is aliasing error and falls with n
    res = []
    for n in (32, 64, 128):
        t = (np.arange(n) + 0.5) / n
        xi = np.stack(np.meshgrid(t, t, indexing="ij"), -1)
        w = stream_field(xi.reshape(-1, 2)).reshape(n, n, 2)
        res.append(field_residual(w, parse_operator("div:d=2")))
    assert res[0] < 1e-4 and res[2] < res[1] < res[0]


def test_structure_check_zero_and_spike():
    ym = golden_spike_singular()
    assert structure_check(ym, parse_operator("zero", d=1, N=1)).passed


def test_structure_negative_control():
    ym = estimate_young_measure(make_sequence("spike2d", "2^-k,k=3..6", 32, alpha=2.0, scalar=True),
                                EstimatorOptions())
    assert not structure_check(ym, parse_operator("grad_scalar:d=2")).passed
    vec = estimate_young_measure(make_sequence("spike2d", "2^-k,k=3..6", 32, alpha=2.0), EstimatorOptions())
    assert structure_check(vec, parse_operator("div:d=2")).passed


def test_parse_operator_errors():
    with pytest.raises(ValueError):
        parse_operator("laplace")
    with pytest.raises(ValueError):
        parse_operator("div:q=2")
    op = parse_operator('custom:{"d":1,"E":1,"F":1,"k":2,"alpha":{"2":[[1.0]]}}')
    assert op.order == 2 and np.allclose(symbol(op, [3.0]), [[9.0]])
