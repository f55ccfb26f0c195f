"""Acceptance criteria 1-10, one PASS/FAIL line each."""
import glob
import math
import os
import time

import numpy as np
import pytest

from conftest import analytic_ym, record_criterion
from twoscale.barycenters import second_scale_barycenter
from twoscale.cli import run_experiment
from twoscale.compare import (circular_w1, diff_passes, golden_fakir, golden_spike_diffuse,
                              golden_spike_singular, torus_tv, ym_diff)
from twoscale.config import load_config
from twoscale.estimation import EstimatorOptions, afree_generators, estimate_young_measure
from twoscale.homogenization import (CellProblem, cell_minimize, gamma_liminf_demo, harmonic_mean_oracle,
                                     jensen_verify, piecewise_constant_oracle, recession_commute_check)
from twoscale.integrands import FULL_REGISTRY, coefficient, get_integrand
from twoscale.localization import tangent_young, torus_translate
from twoscale.measures import GridDomain, VectorMeasure
from twoscale.pde import a_residual, parse_operator, structure_check
from twoscale.sequences import make_sequence
from twoscale.young import (compactify, decompose_compactified, pair, pair_compactified,
                            representation_tolerance, verify_representation_identity, ym_max_abs_difference)

CONFIGS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "configs", "*.toml")))


def _verdict(n, ok, detail):
    record_criterion(n, ok, detail)
    assert ok, f"criterion {n}: {detail}"


# -- 1 ------------------------------------------------------------------------

GOLDEN_CASES = [
    ("spike alpha=2", lambda: make_sequence("spike", "2^-k,k=4..12", 4096, alpha=2.0), golden_spike_singular),
    ("spike alpha=1/2", lambda: make_sequence("spike", "2^-k,k=16..24", 4096, alpha=0.5), golden_spike_diffuse),
    ("fakir", lambda: make_sequence("fakir", "1/(2*j),j=1..256", 512), golden_fakir),
]


def test_criterion_1_golden_four_tuples():
    lines, ok = [], True
    for name, build, gold in GOLDEN_CASES:
        t = time.perf_counter()
        ym = estimate_young_measure(build(), EstimatorOptions())
        dt = time.perf_counter() - t
        d = ym_diff(ym, gold(ym.omega, ym.torus))
        parts = diff_passes(d)
        good = all(parts.values()) and dt < 60.0
        ok &= good
        failed = [k for k, v in parts.items() if not v]
        lines.append(f"{name} {dt:.1f}s" + (f" failed {failed}" if failed else ""))
    _verdict(1, ok, "; ".join(lines))


# -- 2 ------------------------------------------------------------------------

def _coupled(kind, res):
    """Schedules whose tail shrinks with the grid; smooth kinds keep ε ≪ h."""
    L = int(round(math.log2(res)))
    if kind == "fakir":
        return make_sequence("fakir", f"1/(2*j),j=1..{res // 2}", res)
    if kind == "spike":
        return make_sequence("spike", f"2^-k,k=4..{L}", res, alpha=2.0)
    if kind == "sine":
        return make_sequence("sine", f"2^-k,k={L + 2}..{L + 4}", res, alpha=1.0)
    return make_sequence("osc1d", f"2^-k,k={L + 2}..{L + 4}", res, z0=(1.0,))


def test_criterion_2_representation_identity():
    lines, ok = [], True
    for kind in ("fakir", "spike", "sine", "osc1d"):
        devs = []
        for res in (64, 128, 256, 512):
            ym = estimate_young_measure(_coupled(kind, res), EstimatorOptions(torus_resolution=res))
            mu = compactify(ym)
            dev = verify_representation_identity(mu)
            ok &= dev < representation_tolerance(mu)
            devs.append(dev)
        mono = all(b < a for a, b in zip(devs, devs[1:]))
        ok &= mono
        lines.append(f"{kind} " + " > ".join(f"{v:.2e}" for v in devs) + ("" if mono else " (not monotone)"))
    _verdict(2, ok, "; ".join(lines))


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_roundtrip_isometry():
    worst_rt, worst_pair, n_pairs = 0.0, 0.0, 0
    for seed in range(20):
        ym = analytic_ym(seed)
        mu = compactify(ym)
        worst_rt = max(worst_rt, ym_max_abs_difference(ym, decompose_compactified(mu)))
        for name in FULL_REGISTRY:
            f = get_integrand(name)
            if f.superlinear:
                continue
            worst_pair = max(worst_pair, abs(pair(f, ym) - pair_compactified(f, mu)))
            n_pairs += 1
    ok = worst_rt < 1e-8 and worst_pair < 1e-10
    _verdict(3, ok, f"roundtrip {worst_rt:.1e}, pairing {worst_pair:.1e} over {n_pairs} pairs")


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_localization_translated_spike():
    a, b = 1 / math.sqrt(2), 0.3
    runs = []
    for xi in (0.1, 0.6):
        spec = make_sequence("translated_spike", "a/(2^j+xi),j=4..12", 4096, a=a, b=b, xi=xi)
        ym = estimate_young_measure(spec, EstimatorOptions())
        res = tangent_young(ym, spec, (a,), "singular")
        site = ym.omega.size + int(np.argmax(ym.atom_masses))
        runs.append((res, ym.rho[site], ym.torus))
    (r1, raw1, tz), (r2, raw2, _) = runs
    shift = r2.xi0[0] - r1.xi0[0]
    tv_raw = torus_tv(raw1, torus_translate(raw2, (shift,), tz))
    tv_tan = torus_tv(r1.rho_tangent(), r2.rho_tangent())
    target = np.zeros(tz.size)
    target[int(tz.cell_index(np.array([[b]]))[0])] = 1.0
    w1 = [circular_w1(r.rho_tangent(), target, tz.shape) for r in (r1, r2)]
    ok = tv_raw <= 0.01 and tv_tan <= 0.01 and max(w1) <= 2.0
    _verdict(4, ok, f"TV raw {tv_raw:.1e}, TV tangent {tv_tan:.1e}, W1 to delta_b {w1[0]:.2f}/{w1[1]:.2f} cells")


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_afree_rigidity():
    op = parse_operator("div:d=2")
    res = []
    for n in (256, 512):
        spec = make_sequence("divfree2d", "1/4", 4, amplitude=1.0)
        ym = estimate_young_measure(spec, EstimatorOptions(torus_resolution=n, max_samples=5_000_000))
        res.append(a_residual(second_scale_barycenter(ym), op))
    ctrl = estimate_young_measure(make_sequence("spike2d", "2^-k,k=3..6", 32, alpha=2.0, scalar=True),
                                  EstimatorOptions())
    neg = structure_check(ctrl, parse_operator("grad_scalar:d=2"))
    ok = res[0] < 1e-3 and res[1] <= 0.5 * res[0] and not neg.passed
    _verdict(5, ok, f"residual 256: {res[0]:.1e}, 512: {res[1]:.1e}; negative control "
                    f"{'rejected' if not neg.passed else 'accepted'}")


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_homogenized_envelope():
    f = get_integrand("aniso_quad")
    op = parse_operator("zero", d=1, N=1)
    r = cell_minimize(CellProblem(f, op, (1.0,), 1, 256), (1, 2, 4))
    a = coefficient("2+sin")
    quad, pc = harmonic_mean_oracle(a, 1.0), piecewise_constant_oracle(a, 1.0)
    sweep = list(r.R_sweep.values())
    flat = max(sweep) - min(sweep)
    ok = abs(r.value - math.sqrt(3)) < 1e-3 and abs(quad - r.value) < 1e-3 and abs(pc - r.value) < 1e-3 \
        and flat < 1e-6
    _verdict(6, ok, f"value {r.value:.7f} (quadrature {quad:.7f}, piecewise {pc:.7f}), R-sweep spread {flat:.1e}")


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_jensen_suite():
    t = time.perf_counter()
    worst, count, ok = math.inf, 0, True
    for gname, spec, opts, op in afree_generators():
        ym = estimate_young_measure(spec, opts)
        for hname in ("abs", "sqrt1pz2", "aniso_quad"):
            rep = jensen_verify(ym, get_integrand(hname), op)
            finite = [m for m in rep.margins.values() if math.isfinite(m)]
            worst = min([worst] + finite)
            ok &= all(m >= -1e-3 for m in finite)
            count += 1
    dt = time.perf_counter() - t
    ok &= dt < 300.0
    _verdict(7, ok, f"{count} combinations, worst margin {worst:.2e}, {dt:.0f}s")


# -- 8 ------------------------------------------------------------------------

def test_criterion_8_gamma_liminf():
    f = get_integrand("aniso_quad")
    op = parse_operator("zero", d=1, N=1)
    target = VectorMeasure(GridDomain("omega", (0.0,), (1.0,), (8,)), np.full((8, 1), 1.3))
    rep = gamma_liminf_demo(f, op, target, "2^-k,k=4..9", 20, seed=7, grid=128)
    rnd = [c for c in rep.competitors if not c["recovery"]]
    rec = [c for c in rep.competitors if c["recovery"]]
    worst = min(c["margin"] for c in rnd)
    rec_err = abs(rec[0]["margin"]) if rec else math.inf
    ok = len(rnd) == 20 and worst >= -1e-3 and rec_err <= 1e-3
    _verdict(8, ok, f"I_hom {rep.I_hom:.6f}, worst random margin {worst:.2e} over {len(rnd)}, "
                    f"recovery error {rec_err:.1e}")


# -- 9 ------------------------------------------------------------------------

OPERATORS = (("zero", lambda: parse_operator("zero", d=1, N=1)), ("ddx", lambda: parse_operator("ddx")),
             ("div:d=2", lambda: parse_operator("div:d=2")))


def test_criterion_9_recession_commute():
    failed, worst, vacuous = [], math.inf, 0
    for name in FULL_REGISTRY:
        h = get_integrand(name)
        for oname, build in OPERATORS:
            op = build()
            r = recession_commute_check(h, op, grid=64 if op.d == 1 else 16)
            if r["vacuous"]:
                vacuous += 1
            elif r["worst_margin"] is not None:
                worst = min(worst, r["worst_margin"])
            if not r["passed"]:
                failed.append(f"{name}/{oname}")
    n = len(FULL_REGISTRY) * len(OPERATORS)
    _verdict(9, not failed, f"{n - len(failed)}/{n} pass, worst margin {worst:.1e}, {vacuous} vacuous"
             + (f", failed {failed}" if failed else ""))


# -- 10 -----------------------------------------------------------------------

def _bytes(out_dir):
    got = {}
    for p in sorted(glob.glob(os.path.join(out_dir, "*"))):
        with open(p, "rb") as fh:
            got[os.path.basename(p)] = fh.read()
    return got


def test_criterion_10_determinism(tmp_path):
    diffs, n_files = [], 0
    for path in CONFIGS:
        cfg = load_config(path)
        outs = []
        for k in range(2):
            d = tmp_path / f"{os.path.basename(path)}-{k}"
            run_experiment(cfg, str(d))
            outs.append(_bytes(str(d)))
        a, b = outs
        for name in a:
            if name.endswith((".csv", ".json", ".svg")):
                n_files += 1
                if a[name] != b.get(name):
                    diffs.append(f"{os.path.basename(path)}:{name}")
    _verdict(10, not diffs and n_files > 0, f"{len(CONFIGS)} configs, {n_files} files compared"
             + (f", differing {diffs}" if diffs else ", all identical"))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
