"""Command-line interface: ``ym <subcommand>``.

Exit codes: 0 all checks passed, 1 usage/configuration error, 2 at least
one asserted tolerance failed (artifacts and the summary are still written).
"""
from __future__ import annotations

import os

_THREADS = os.environ.get("YM_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402

import numpy as np  # noqa: E402

from .config import ConfigError, ExperimentConfig, load_config, parse_config  # noqa: E402

__all__ = ["main", "run_experiment", "execute", "GOLDENS"]

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

GOLDENS = ("spike_singular", "spike_diffuse", "fakir", "translated_spike")
PAIRING_TESTS = ("abs", "sqrt1pz2", "tensor:one:halfcos:abs", "tensor:one:sin1:pos")
JENSEN_DEFAULT = ("abs", "sqrt1pz2", "aniso_quad")


# ----------------------------------------------------------------------------
# helpers

def _check(name, passed, value=None, tol=None, margin=None, **extra) -> dict:
    c = {"name": name, "passed": bool(passed), "value": _num(value), "tol": _num(tol), "margin": _num(margin)}
    c.update(extra)
    return c


def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _le(name, value, tol, **extra):
    """value ≤ tol, margin tol − value."""
    return _check(name, value <= tol, value, tol, tol - value, **extra)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _tol(cfg: ExperimentConfig, key, default):
    return float(cfg.tolerances.get(key, default))


def _sequence(cfg: ExperimentConfig):
    from .sequences import make_sequence
    s = cfg.sequence
    params = dict(s.get("params", {}))
    for k, v in list(params.items()):
        if isinstance(v, list):
            params[k] = tuple(v)
    return make_sequence(s["kind"], s["schedule"], s.get("resolution"), s.get("lower"), s.get("upper"), **params)


def _options(cfg: ExperimentConfig):
    from .estimation import EstimatorOptions
    return EstimatorOptions(**cfg.estimator)


def _operator(cfg: ExperimentConfig):
    from .pde import parse_operator
    o = cfg.operator
    return parse_operator(str(o["name"]), d=o.get("d"), N=o.get("N"))


def golden(name: str, omega, tz):
    from . import compare
    if name not in GOLDENS:
        raise ConfigError(f"unknown golden reference {name!r} (one of {', '.join(GOLDENS)})")
    return getattr(compare, f"golden_{name}")(omega=omega, tz=tz)


# ----------------------------------------------------------------------------
# experiments: each returns (summary, {filename: text})

def exp_estimate(cfg: ExperimentConfig):
    from .estimation import estimate_young_measure
    from .integrands import get_integrand
    from .young import representation_tolerance, compactify, verify_representation_identity, ym_to_json
    from .compare import ym_diff, diff_passes, GOLDEN_TOLERANCES
    spec = _sequence(cfg)
    opts = _options(cfg)
    tests = [get_integrand(n) for n in PAIRING_TESTS]
    ym, rows = estimate_young_measure(spec, opts, log=True, test_integrands=tests)
    mu = compactify(ym)
    dev = ym.info["representation_deviation"]
    tol = max(_tol(cfg, "representation", 1e-8), representation_tolerance(mu))
    checks = [_le("representation_identity", dev, tol),
              _le("roundtrip_representation", verify_representation_identity(mu), tol)]
    out = {"ym.json": dumps(ym_to_json(ym))}
    diff = None
    if cfg.golden:
        ref = golden(cfg.golden["reference"], ym.omega, ym.torus)
        diff = ym_diff(ym, ref, int(cfg.golden.get("bins", 32)))
        t = dict(GOLDEN_TOLERANCES)
        for k in ("tv", "atom_location_cells", "atom_mass_rel"):
            t[k] = _tol(cfg, k, t[k])
        ok = diff_passes(diff, t, _tol(cfg, "nu", 1e-3))
        checks.append(_check("golden_atom_count", ok["atoms"] or diff["atom_count"][0] == diff["atom_count"][1],
                             diff["atom_count"][0], diff["atom_count"][1], None))
        checks.append(_le("golden_nu_moment", diff["nu_moment"], _tol(cfg, "nu", 1e-3)))
        checks.append(_le("golden_atom_location_cells", diff["atom_location_cells"], t["atom_location_cells"]))
        checks.append(_le("golden_atom_mass_rel", diff["atom_mass_rel"], t["atom_mass_rel"]))
        checks.append(_le("golden_lambda_ac_tv", diff["lambda_ac_tv"], t["tv"]))
        rho_ok = ok["rho"]
        checks.append(_check("golden_rho", rho_ok, diff["rho_tv"], t["tv"],
                             max(t["tv"] - diff["rho_tv"], t["atom_location_cells"] - diff["rho_w1_cells"]),
                             w1_cells=_num(diff["rho_w1_cells"])))
        checks.append(_le("golden_direction_tv", diff["direction_tv"], t["tv"]))
    table = [(r["eps"], r["representation_deviation"], r["total_variation"], r["pairing_error"]) for r in rows]
    out["estimate.csv"] = _csv(["eps", "representation_deviation", "total_variation", "pairing_error"], table)
    series = {"convergence": [
        {"label": "pairing error", "x": [r["eps"] for r in rows], "y": [r["pairing_error"] for r in rows]},
        {"label": "representation deviation", "x": [r["eps"] for r in rows],
         "y": [r["representation_deviation"] for r in rows]}],
        "convergence_ylabel": "deviation from the limit"}
    summary = {"results": {"n_atoms": int(np.sum(ym.atom_masses > 0)), "atom_masses": ym.atom_masses[ym.atom_masses > 0],
                           "atom_locs": ym.atom_locs[ym.atom_masses > 0], "lambda_ac_mass": float(ym.lam_density.sum()
                                                                                                  * ym.omega.cell_volume),
                           "representation_deviation": dev, "golden_diff": diff},
               "checks": checks, "series": series}
    return summary, out


def exp_localize(cfg: ExperimentConfig):
    from .estimation import estimate_young_measure
    from .localization import tangent_young
    from .compare import diff_passes
    from .young import ym_to_json
    spec = _sequence(cfg)
    opts = _options(cfg)
    ym = estimate_young_measure(spec, opts)
    L = cfg.localize
    x0 = np.atleast_1d(np.asarray(L["x0"], float))
    res = tangent_young(ym, spec, x0, L.get("mode", "regular"), L.get("radii"), L.get("resolution"), opts)
    checks = []
    if res.diff is not None:
        ok = diff_passes(res.diff)
        for k, v in ok.items():
            checks.append(_check(f"reestimate_{k}", v))
    else:
        checks.append(_check("reestimate", False, note="; ".join(res.warnings)))
    doc = ym_to_json(res.ym)
    doc["tangent"] = {"xi0": list(res.xi0), "mode": res.mode, "radius": res.radius, "checks": res.checks,
                      "warnings": res.warnings, "rho_tangent": res.rho_tangent()}
    summary = {"results": {"xi0": list(res.xi0), "radius": res.radius, "diff": res.diff, "warnings": res.warnings},
               "checks": checks}
    return summary, {"tangent.json": dumps(doc)}


def exp_homogenize(cfg: ExperimentConfig):
    from .homogenization import CellProblem, cell_minimize, harmonic_mean_oracle, TAU_HOM
    from .integrands import get_integrand, coefficient
    f = get_integrand(cfg.integrand["name"])
    op = _operator(cfg)
    H = cfg.homogenize
    z = tuple(np.atleast_1d(np.asarray(H.get("z", [1.0] * op.E), float)))
    Rs = tuple(int(r) for r in H.get("R", [1]))
    p = CellProblem(f, op, z, 1, int(H.get("grid", 64)), H.get("x"), cfg.seed, int(H.get("restarts", 3)),
                    int(H.get("max_iter", 5000)))
    res = cell_minimize(p, Rs)
    tau = _tol(cfg, "tau_hom", TAU_HOM)
    vals = [res.R_sweep[r] for r in sorted(res.R_sweep)]
    mono = max([b - a for a, b in zip(vals, vals[1:])], default=0.0)
    checks = [_le("value_below_trivial", res.value - res.trivial_value, 1e-12),
              _le("R_sweep_monotone", mono, 1e-8)]
    if f.convex and len(vals) > 1:
        checks.append(_le("R_sweep_flat", max(vals) - min(vals), 1e-6))
    if res.stagnated:
        checks.append(_check("no_stagnation", False))
    if f.name.startswith("aniso_quad") and op.is_zero and op.d == 1:
        spec = f.meta.get("coefficient", "2+sin")
        ref = harmonic_mean_oracle(coefficient(spec), z[0])
        err = abs(res.value - ref)
        checks.append(_le("harmonic_mean_oracle", err, tau * max(1.0, abs(ref)), oracle=ref))
    summary = {"results": res.to_json(), "checks": checks,
               "series": {"margins": [{"name": f"R={r}", "margin": res.trivial_value - v, "passed": True}
                                      for r, v in sorted(res.R_sweep.items())]}}
    return summary, {"homogenize.json": dumps(res.to_json())}


def _gamma_target(cfg: ExperimentConfig, op):
    from .measures import VectorMeasure, GridDomain
    G = cfg.gamma
    t = G.get("target", {"kind": "constant", "value": [1.0] * op.E})
    if t.get("kind", "constant") != "constant":
        raise ConfigError(f"unknown gamma.target.kind {t.get('kind')!r}")
    d = op.d
    lo = tuple(G.get("lower", [0.0] * d))
    hi = tuple(G.get("upper", [1.0] * d))
    n = int(G.get("resolution", 8))
    dom = GridDomain("omega", lo, hi, (n,) * d)
    val = np.atleast_1d(np.asarray(t.get("value", [1.0] * op.E), float))
    return VectorMeasure(dom, np.broadcast_to(val, (dom.size, op.E)).copy())


def exp_gamma(cfg: ExperimentConfig):
    from .homogenization import gamma_liminf_demo, TAU_GAMMA
    from .integrands import get_integrand
    f = get_integrand(cfg.integrand["name"])
    op = _operator(cfg)
    G = cfg.gamma
    target = _gamma_target(cfg, op)
    tau = _tol(cfg, "tau_gamma", TAU_GAMMA)
    rep = gamma_liminf_demo(f, op, target, G.get("schedule"), int(G.get("n_random", 20)), cfg.seed,
                            int(G.get("grid", 128)), tau, tail=int(G.get("tail", 3)))
    scale = max(1.0, abs(rep.I_hom))
    checks = []
    for c in rep.competitors:
        checks.append(_check(f"liminf_{c['competitor']}", c["lower_bound_ok"], c["liminf"], rep.I_hom - tau * scale,
                             c["margin"] + tau * scale))
        if c["recovery"]:
            err = abs(c["margin"])
            checks.append(_le("recovery_attains_I_hom", err, tau * scale))
    if not rep.competitors:
        checks.append(_check("competitors", False, note="; ".join(rep.excluded)))
    rows = [(r["competitor"], r["eps"], r["I_eps"], r["I_hom"], r["margin"]) for r in rep.rows]
    rec = [r for r in rep.rows if r["competitor"] == "recovery"]
    series = {
        "margins": [{"name": c["competitor"], "margin": c["margin"], "passed": c["lower_bound_ok"]}
                    for c in rep.competitors],
        "convergence": ([{"label": "recovery |I^ε − I^hom|", "x": [r["eps"] for r in rec],
                          "y": [abs(r["margin"]) for r in rec]}] if rec else []),
        "convergence_ylabel": "|I^ε − I^hom|",
    }
    summary = {"results": {"I_hom": rep.I_hom, "competitors": rep.competitors, "excluded": rep.excluded},
               "checks": checks, "series": series}
    return summary, {"gamma.csv": _csv(["competitor", "eps", "I_eps", "I_hom", "margin"], rows)}


def exp_jensen(cfg: ExperimentConfig):
    from .estimation import estimate_young_measure
    from .homogenization import jensen_verify, TAU_J
    from .integrands import get_integrand
    spec = _sequence(cfg)
    ym = estimate_young_measure(spec, _options(cfg))
    op = _operator(cfg)
    tau = _tol(cfg, "tau_j", TAU_J)
    checks, reports = [], []
    for name in cfg.jensen.get("integrands", JENSEN_DEFAULT):
        rep = jensen_verify(ym, get_integrand(name), op, tau, cfg.seed)
        reports.append(rep.to_json())
        for k, m in rep.margins.items():
            if rep.counts[k] == 0:
                continue
            checks.append(_check(f"{name}:{k}", m >= -tau, m, -tau, m + tau, count=rep.counts[k]))
    return {"results": {"reports": reports}, "checks": checks}, {"jensen.json": dumps(reports)}


def exp_structure(cfg: ExperimentConfig):
    from .barycenters import second_scale_barycenter
    from .estimation import estimate_young_measure
    from .pde import a_residual, structure_check, TAU_CONE
    spec = _sequence(cfg)
    ym = estimate_young_measure(spec, _options(cfg))
    op = _operator(cfg)
    S = cfg.structure
    expect = S.get("expect", "pass")
    if expect not in ("pass", "fail"):
        raise ConfigError("structure.expect must be 'pass' or 'fail'")
    rep = structure_check(ym, op, _tol(cfg, "tau_cone", TAU_CONE), float(S.get("rho_atom_factor", 20.0)))
    res = a_residual(second_scale_barycenter(ym), op)
    tol = _tol(cfg, "a_residual", 1e-3)
    checks = [_check("structure_as_expected", rep.passed == (expect == "pass"), rep.polar_violation,
                     None, None, expected=expect, structure_passed=rep.passed)]
    if expect == "pass":
        checks.append(_le("second_scale_a_residual", res, tol))
    doc = {"structure": rep.to_json(), "a_residual": res}
    return {"results": doc, "checks": checks}, {"structure.json": dumps(doc)}


EXPERIMENT_RUNNERS = {"estimate": exp_estimate, "localize": exp_localize, "homogenize": exp_homogenize,
                      "gamma": exp_gamma, "jensen": exp_jensen, "structure": exp_structure}


def execute(cfg: ExperimentConfig):
    """Run an experiment in memory: (summary, artifacts)."""
    np.random.seed(cfg.seed)
    summary, files = EXPERIMENT_RUNNERS[cfg.experiment](cfg)
    summary = {"experiment": cfg.experiment, "name": cfg.name, "seed": cfg.seed, "config": cfg.raw, **summary}
    summary["passed"] = all(c["passed"] for c in summary["checks"])
    summary["artifacts"] = sorted(files)
    return summary, files


def run_experiment(cfg: ExperimentConfig, out_dir: str = None, figures: bool = True) -> int:
    """Write artifacts, summary.json and the report; exit code 0 or 2."""
    from .report import report
    out_dir = out_dir or cfg.output.get("dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    summary, files = execute(cfg)
    renames = {"ym.json": cfg.output.get("ym"), "gamma.csv": cfg.output.get("csv")}
    for name, text in files.items():
        target = renames.get(name) or name
        with open(os.path.join(out_dir, target), "w") as fh:
            fh.write(text)
    with open(os.path.join(out_dir, cfg.output.get("summary", "summary.json")), "w") as fh:
        fh.write(dumps(summary))
    if figures and cfg.output.get("figures", True):
        report(_jsonable(summary), out_dir)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


# ----------------------------------------------------------------------------
# subcommands

def _params(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError(f"parameter {it!r} must be key=value")
        k, v = it.split("=", 1)
        try:
            val = json.loads(v)
        except json.JSONDecodeError:
            val = v
        out[k] = val
    return out


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _sequence_cfg(a) -> dict:
    seq = {"kind": a.seq, "schedule": a.schedule}
    if a.resolution:
        seq["resolution"] = a.resolution
    p = _params(a.param)
    if p:
        seq["params"] = p
    return seq


def _load_ym(path):
    from .young import ym_from_json
    with open(path) as fh:
        return ym_from_json(json.load(fh))


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(a):
    return run_experiment(load_config(a.config), a.out)


def _config_or_flags(a, kind, build):
    if getattr(a, "config", None):
        cfg = load_config(a.config)
        if cfg.experiment != kind:
            raise ConfigError(f"config experiment is {cfg.experiment!r}, expected {kind!r}")
    else:
        cfg = parse_config(build())
    return cfg


def cmd_estimate(a):
    def build():
        d = {"experiment": "estimate", "seed": a.seed, "sequence": _sequence_cfg(a),
             "estimator": {"torus_resolution": a.torus}}
        if a.golden:
            d["golden"] = {"reference": a.golden}
        return d
    cfg = _config_or_flags(a, "estimate", build)
    if a.outdir:
        return run_experiment(cfg, a.outdir)
    summary, files = execute(cfg)
    _emit(files["ym.json"], a.out)
    sys.stderr.write(_check_lines(summary))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def _check_lines(summary) -> str:
    lines = []
    for c in summary["checks"]:
        lines.append(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} value={c['value']} tol={c['tol']}")
    return "\n".join(lines) + ("\n" if lines else "")


def cmd_pair(a):
    from .integrands import get_integrand
    from .young import pair
    ym = _load_ym(a.ym)
    val, inner, conc = pair(get_integrand(a.f), ym, parts=True)
    _emit(dumps({"integrand": a.f, "value": val, "parts": {"oscillation": inner, "concentration": conc}}), a.out)
    return EXIT_OK


def cmd_localize(a):
    def build():
        return {"experiment": "localize", "seed": a.seed, "sequence": _sequence_cfg(a),
                "estimator": {"torus_resolution": a.torus},
                "localize": {"x0": _floats(a.x0), "mode": a.mode}}
    cfg = _config_or_flags(a, "localize", build)
    if a.outdir:
        return run_experiment(cfg, a.outdir)
    summary, files = execute(cfg)
    _emit(files["tangent.json"], a.out)
    sys.stderr.write(_check_lines(summary))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def cmd_check_afree(a):
    from .barycenters import second_scale_barycenter
    from .pde import a_residual, parse_operator, structure_check
    ym = _load_ym(a.ym)
    op = parse_operator(a.op, d=a.d or ym.omega.dim, N=a.N or ym.N)
    rep = structure_check(ym, op)
    res = a_residual(second_scale_barycenter(ym), op)
    ok = rep.passed and res <= a.tol
    _emit(dumps({"operator": op.to_json(), "structure": rep.to_json(), "a_residual": res, "tol": a.tol,
                 "passed": ok}), a.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_homogenize(a):
    def build():
        R = [int(r) for r in str(a.R).split(",")]
        d = {"experiment": "homogenize", "seed": a.seed, "integrand": {"name": a.f},
             "operator": {"name": a.op}, "homogenize": {"z": _floats(a.z), "R": R, "grid": a.grid}}
        nz = len(d["homogenize"]["z"])
        if a.d or not any(s in a.op for s in ("d=", "{")):
            d["operator"]["d"] = a.d or nz
        if a.N or not any(s in a.op for s in ("d=", "{")):
            d["operator"]["N"] = a.N or nz
        return d
    cfg = _config_or_flags(a, "homogenize", build)
    if a.outdir:
        return run_experiment(cfg, a.outdir)
    summary, files = execute(cfg)
    doc = dict(summary["results"])
    doc["checks"] = summary["checks"]
    _emit(dumps(doc), a.out)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def cmd_jensen(a):
    from .homogenization import jensen_verify
    from .integrands import get_integrand
    from .pde import parse_operator
    ym = _load_ym(a.ym)
    op = parse_operator(a.op, d=a.d or ym.omega.dim, N=a.N or ym.N)
    reps = [jensen_verify(ym, get_integrand(h), op, a.tol, a.seed).to_json() for h in a.h]
    _emit(dumps(reps), a.out)
    return EXIT_OK if all(r["passed"] for r in reps) else EXIT_FAIL


def cmd_gamma(a):
    def build():
        return {"experiment": "gamma", "seed": a.seed, "integrand": {"name": a.f},
                "operator": {"name": a.op, "d": 1, "N": 1},
                "gamma": {"target": {"kind": "constant", "value": _floats(a.z0)}, "n_random": a.n_random,
                          "schedule": a.schedule}}
    cfg = _config_or_flags(a, "gamma", build)
    if a.outdir:
        return run_experiment(cfg, a.outdir)
    summary, files = execute(cfg)
    _emit(files["gamma.csv"], a.out)
    sys.stderr.write(_check_lines(summary))
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def cmd_report(a):
    from .report import report
    for p in report(a.summary, a.out):
        print(p)
    return EXIT_OK


def cmd_ym_diff(a):
    from .compare import diff_passes, ym_diff
    ya = _load_ym(a.a)
    if a.golden:
        yb = golden(a.golden, ya.omega, ya.torus)
    elif a.b:
        yb = _load_ym(a.b)
    else:
        raise ConfigError("ym-diff needs a second Young measure or --golden")
    d = ym_diff(ya, yb, a.bins)
    ok = diff_passes(d)
    _emit(dumps({"diff": d, "passes": ok, "passed": all(ok.values())}), a.out)
    return EXIT_OK if all(ok.values()) else EXIT_FAIL


def cmd_barycenter(a):
    from .barycenters import barycenter, second_scale_barycenter
    from .integrands import get_integrand
    from .measures import measure_to_json
    ym = _load_ym(a.ym)
    f = get_integrand(a.f) if a.f else None
    doc = {"barycenter": measure_to_json(barycenter(ym, f))}
    if a.second_scale:
        sb = second_scale_barycenter(ym, f)
        doc["second_scale"] = {"total": sb.total(), "base_mass": sb.base_mass, "is_atom": sb.is_atom,
                               "site_locs": sb.site_locs}
    _emit(dumps(doc), a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ym", description="Discrete two-scale Young measures and A-free homogenization.")
    sub = ap.add_subparsers(dest="command", required=True)

    def seq_args(p):
        p.add_argument("--config")
        p.add_argument("--seq", default="spike")
        p.add_argument("--schedule", default="2^-k,k=4..12")
        p.add_argument("--resolution", type=int)
        p.add_argument("--param", action="append", help="sequence parameter key=value (repeatable)")
        p.add_argument("--torus", type=int, default=64)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--outdir", help="write the full artifact bundle into this directory")

    p = sub.add_parser("run", help="run a TOML experiment config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("estimate", help="estimate a Young measure from a sequence")
    seq_args(p)
    p.add_argument("--golden", choices=GOLDENS)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("pair", help="pairing <<f, nu>> of a stored Young measure")
    p.add_argument("--ym", required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_pair)

    p = sub.add_parser("localize", help="tangent Young measure at a point")
    seq_args(p)
    p.add_argument("--x0", default="0")
    p.add_argument("--mode", choices=("regular", "singular"), default="regular")
    p.set_defaults(fn=cmd_localize)

    p = sub.add_parser("check-afree", help="structure and second-scale A-freeness checks")
    p.add_argument("--ym", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_check_afree)

    p = sub.add_parser("homogenize", help="cell minimization f_{*A}(z)")
    p.add_argument("--config")
    p.add_argument("--f", default="aniso_quad")
    p.add_argument("--op", default="zero")
    p.add_argument("--d", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--z", default="1.0")
    p.add_argument("--R", default="1")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--outdir")
    p.set_defaults(fn=cmd_homogenize)

    p = sub.add_parser("jensen", help="Jensen inequality margins of a stored Young measure")
    p.add_argument("--ym", required=True)
    p.add_argument("--h", action="append", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_jensen)

    p = sub.add_parser("gamma", help="Gamma-liminf demonstration")
    p.add_argument("--config")
    p.add_argument("--f", default="aniso_quad")
    p.add_argument("--op", default="zero")
    p.add_argument("--z0", default="1.0")
    p.add_argument("--schedule", default="2^-k,k=4..9")
    p.add_argument("--n-random", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--outdir")
    p.set_defaults(fn=cmd_gamma)

    p = sub.add_parser("report", help="render SVG/CSV from a summary JSON")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("ym-diff", help="component distances between Young measures")
    p.add_argument("a")
    p.add_argument("b", nargs="?")
    p.add_argument("--golden", choices=GOLDENS)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ym_diff)

    p = sub.add_parser("barycenter", help="first- (and second-) scale barycenters")
    p.add_argument("--ym", required=True)
    p.add_argument("--f")
    p.add_argument("--second-scale", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_barycenter)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        return a.fn(a)
    except ConfigError as exc:
        sys.stderr.write(f"ym: configuration error: {exc}\n")
        return EXIT_USAGE
    except (KeyError, FileNotFoundError) as exc:
        sys.stderr.write(f"ym: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
