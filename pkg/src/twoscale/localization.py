"""Blow-ups, torus translations and tangent two-scale* Young measures."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import (AffineMap, GridDomain, ProbabilityField, ScalarMeasure, VectorMeasure,
                       _apply_separable, _overlap_matrix, box, push_forward)
from .young import TwoScaleYoungMeasure

__all__ = [
    "LocalizationError",
    "BlowupSpec",
    "unit_cube",
    "blow_up",
    "torus_translate",
    "translate_rows",
    "shift_fibers",
    "tangent_measures",
    "TangentResult",
    "tangent_young",
    "xi0_from_schedule",
    "TAU_TAN",
]

TAU_TAN = 1e-3
DELTA_MAX = 0.1
REGULAR_RATIO_TOL = 0.10
SINGULAR_RATIO_TOL = 0.05


class LocalizationError(ValueError):
    """No tangent could be extracted at the requested point."""


@dataclass(frozen=True)
class BlowupSpec:
    x0: tuple
    radii: tuple
    scaling: str = "regular"

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if any(b >= a for a, b in zip(r, r[1:])) or any(v <= 0 for v in r):
            raise ValueError("radii must be positive and decreasing")
        if self.scaling not in ("regular", "singular", "probability"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))


def unit_cube(d: int, n: int) -> GridDomain:
    """Q = (−1/2, 1/2)^d with n cells per axis."""
    return box((-0.5,) * d, (0.5,) * d, (n,) * d)


def _cube_inside(dom: GridDomain, x0, r) -> bool:
    x0 = np.atleast_1d(x0)
    return bool(np.all(x0 - r / 2 >= np.array(dom.lower) - 1e-12) and np.all(x0 + r / 2 <= np.array(dom.upper) + 1e-12))


def _scale_measure(m, c: float):
    if isinstance(m, VectorMeasure):
        return VectorMeasure(m.domain, m.density * c, m.atom_locs, m.atom_dirs, m.atom_masses * c)
    return ScalarMeasure(m.domain, m.density * c, m.atom_locs, m.atom_masses * c)


def _mass(m) -> float:
    return m.total_variation() if isinstance(m, VectorMeasure) else m.total_mass()


def _singular_mass(m) -> float:
    return float(m.atom_masses.sum())


def blow_up(m, x0, r: float, scaling="regular", resolution: int = None):
    """c · T^{(x0,r)}_# m rasterized on Q, with T(x) = (x − x0)/r.

    ``scaling``: "regular" (c = r^{-d}), "singular" (c = 1/|m^s|(Q_r(x0))),
    "probability" (c = 1/|m|(Q_r(x0))) or a number."""
    dom = m.domain
    d = dom.dim
    if not r > 0 or not _cube_inside(dom, x0, r):
        raise ValueError(f"Q_r(x0) with r={r} is not inside the domain")
    if resolution is None:
        resolution = max(2, int(round(r / float(np.min(dom.widths)))))
    Q = unit_cube(d, resolution)
    img = push_forward(m, AffineMap("blowup", tuple(np.atleast_1d(x0)), r), Q)
    if isinstance(scaling, str):
        if scaling == "regular":
            c = r ** -d
        elif scaling == "singular":
            s = _singular_mass(img)
            if s <= 0:
                raise LocalizationError("no singular mass in Q_r(x0)")
            c = 1.0 / s
        elif scaling == "probability":
            s = _mass(img)
            if s <= 0:
                raise LocalizationError("no tangent extracted: vanishing mass in Q_r(x0)")
            c = 1.0 / s
        else:
            raise ValueError(f"unknown scaling {scaling!r}")
    else:
        c = float(scaling)
    return _scale_measure(img, c)


def translate_rows(rows: np.ndarray, tz: GridDomain, xi0) -> np.ndarray:
    """Γ^{ξ0}_# applied to each row of an array of cell masses on Z."""
    xi0 = tuple(np.atleast_1d(np.asarray(xi0, float)))
    amap = AffineMap("translate", xi0)
    mats = [_overlap_matrix(tz, tz, a, amap) for a in range(tz.dim)]
    rows = np.atleast_2d(np.asarray(rows, float))
    return np.stack([_apply_separable(mats, row, tz.shape) for row in rows])


def torus_translate(p, xi0, torus: GridDomain = None):
    """Push-forward under ξ ↦ ξ − ξ0 mod 1 of a ScalarMeasure on Z, the
    fibers of a ProbabilityField over Z, or raw cell-mass rows on ``torus``."""
    if isinstance(p, ScalarMeasure):
        return push_forward(p, AffineMap("translate", tuple(np.atleast_1d(xi0))), p.domain)
    if isinstance(p, ProbabilityField):
        t = translate_rows(p.table, p.fiber, xi0)
        t = t / t.sum(axis=1, keepdims=True)
        return ProbabilityField(p.base, p.fiber, t, p.undefined, p.atom_locs)
    if torus is None:
        raise ValueError("raw rows need the torus grid")
    out = translate_rows(p, torus, xi0)
    return out.reshape(np.shape(p)) if np.ndim(p) == 1 else out


def shift_fibers(points: np.ndarray, weights: np.ndarray, tz: GridDomain, xi0):
    """Fiber family ξ ↦ ν_{ξ0+ξ} from ν given per torus cell, shapes
    (nz, K, N), (nz, K).  Fractional shifts mix neighbouring cells."""
    xi0 = np.atleast_1d(np.asarray(xi0, float))
    d = tz.dim
    K, N = points.shape[1], points.shape[2]
    P = points.reshape(tz.shape + (K, N))
    W = weights.reshape(tz.shape + (K,))
    s = xi0 * np.array(tz.shape)
    k = np.floor(s).astype(int)
    f = s - k
    pts, wts = [], []
    for corner in itertools.product((0, 1), repeat=d):
        c = float(np.prod([f[a] if corner[a] else 1.0 - f[a] for a in range(d)]))
        if c <= 1e-15:
            continue
        sh = tuple(-(k[a] + corner[a]) for a in range(d))
        pts.append(np.roll(P, sh, axis=tuple(range(d))))
        wts.append(c * np.roll(W, sh, axis=tuple(range(d))))
    pts = np.concatenate(pts, axis=d).reshape(tz.size, -1, N)
    wts = np.concatenate(wts, axis=d).reshape(tz.size, -1)
    return pts, wts


def _pair_macro(m, n_tests: int = 10) -> np.ndarray:
    from .integrands import phi_g_family
    dom = m.domain
    fam = phi_g_family(dom.lower, dom.upper)[:n_tests]
    vals = []
    for phi, _, _, _ in fam:
        v = m.integrate(phi)
        vals.append(float(np.sum(np.abs(v))) if np.ndim(v) else float(v))
    return np.array(vals)


def tangent_measures(m, x0, radii, resolution: int = 16, scaling: str = "probability", tol: float = TAU_TAN):
    """Normalized blow-ups τ_j along ``radii``.  Returns (taus, info) with
    info["converged"] true when the macro pairings of the last two τ agree
    within ``tol`` and info["tangent"] the last τ."""
    taus = [blow_up(m, x0, r, scaling, resolution) for r in radii]
    pairs = [_pair_macro(t) for t in taus]
    diffs = [float(np.max(np.abs(a - b))) for a, b in zip(pairs, pairs[1:])]
    info = {"radii": list(map(float, radii)), "pairing_steps": diffs,
            "converged": bool(diffs and diffs[-1] < tol), "tangent": taus[-1]}
    return taus, info


# ----------------------------------------------------------------------------
# tangent Young measures

def xi0_from_schedule(spec, x0, tol: float = 1e-3, tail: int = 3) -> tuple:
    """ξ0 = lim frac(x0/ε_i) judged on the last ``tail`` members.  Returns
    (ξ0, spread); raises when the circular spread exceeds ``tol``."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    fr = np.array([np.mod(x0 / e, 1.0) for e in spec.schedule[-tail:]])
    ref = fr[-1]
    dev = np.abs(((fr - ref) + 0.5) % 1.0 - 0.5)
    spread = float(dev.max())
    if spread > tol:
        raise LocalizationError(
            f"frac(x0/ε) does not converge along the schedule (spread {spread:.3g} over the last {tail} members: "
            f"{fr.tolist()}); refine to a subsequence with convergent frac(x0/ε)")
    return tuple(float(v) for v in ref), spread


def _lam_in_cube(ym: TwoScaleYoungMeasure, x0, r):
    """(λ^ac(Q_r(x0)), λ^s(Q_r(x0)), indices of the atoms inside)."""
    x0 = np.atleast_1d(x0)
    om = ym.omega
    Q = unit_cube(om.dim, 2)
    ac = push_forward(ScalarMeasure(om, ym.lam_density), AffineMap("blowup", tuple(x0), r), Q).total_mass()
    inside = np.all(np.abs(ym.atom_locs - x0) <= r / 2 + 1e-15, axis=1) & (ym.atom_masses > 0)
    return float(ac), float(ym.atom_masses[inside].sum()), np.nonzero(inside)[0]


@dataclass
class TangentResult:
    ym: TwoScaleYoungMeasure
    xi0: tuple
    mode: str
    radius: float
    checks: dict = field(default_factory=dict)
    reestimated: TwoScaleYoungMeasure = None
    diff: dict = None
    warnings: list = field(default_factory=list)

    def rho_tangent(self) -> np.ndarray:
        """Dρ: the tangent ρ at the first charged site."""
        m = self.ym.site_masses()
        s = int(np.argmax(m > 0)) if np.any(m > 0) else 0
        return self.ym.rho[s]


def _default_radii(ym, spec, x0):
    radii = []
    eps_min = spec.schedule[-min(3, len(spec.schedule))]
    for j in range(0, 12):
        r = 2.0 ** -j
        if r < 2 * float(np.max(ym.omega.widths)):
            break
        if _cube_inside(ym.omega, x0, r) and eps_min / r < DELTA_MAX:
            radii.append(r)
    return radii


def _diagonal_eps(schedule, r, count: int = 3):
    ok = [e for e in schedule if e / r < DELTA_MAX]
    return ok[-count:]


def tangent_young(ym: TwoScaleYoungMeasure, spec, x0, mode: str = "regular", radii=None,
                  resolution: int = None, opts=None, verify: bool = True, frac_tol: float = 1e-3) -> TangentResult:
    """Tangent two-scale* Young measure at x0 on Q = (−1/2, 1/2)^d.

    regular:  (ν_{x0,ξ0+ξ}, λ^ac(x0) L^d, Γ^{ξ0}_# ρ_{x0}, ν∞_{x0,ξ0+ξ})
    singular: (δ_0, Dλ, Γ^{ξ0}_# ρ_{x0}, ν∞_{x0,ξ0+ξ}) with Dλ the
              probability tangent of λ^s at x0.
    With ``verify`` the blow-up family γ_δ (δ = ε/r, 3 smallest ε with
    δ < 0.1) is re-estimated at the smallest radius and diffed."""
    from .compare import ym_diff
    from .estimation import EstimatorOptions, estimate_young_measure, EstimationError
    from .sequences import blowup_sequence
    if mode not in ("regular", "singular"):
        raise ValueError("mode is regular or singular")
    om, tz = ym.omega, ym.torus
    d, N, nz = om.dim, ym.N, tz.size
    x0 = np.atleast_1d(np.asarray(x0, float))
    if not np.all(om.contains(x0[None, :])):
        raise ValueError("x0 must lie in the domain")
    opts = opts or EstimatorOptions(torus_resolution=nz)
    radii = list(radii) if radii is not None else _default_radii(ym, spec, x0)
    if not radii:
        raise LocalizationError("no admissible radius: Q_r(x0) must fit in Ω and ε/r < 0.1 must be reachable")
    xi0, spread = xi0_from_schedule(spec, x0, frac_tol)
    warnings = []
    c = int(om.cell_index(x0[None, :])[0])

    # Lebesgue / density point checks
    rows = []
    for r in radii:
        ac, sg, _ = _lam_in_cube(ym, x0, r)
        rows.append({"r": r, "lambda_ac": ac, "lambda_s": sg})
    if mode == "regular":
        lac = float(ym.lam_density[c])
        scale = max(lac, 1e-12)
        vals = [abs((row["lambda_ac"] + row["lambda_s"]) / row["r"] ** d - lac) / scale for row in rows]
        flags = [v <= REGULAR_RATIO_TOL for v in vals]
    else:
        vals = [(row["r"] ** d + row["lambda_ac"]) / row["lambda_s"] if row["lambda_s"] > 0 else math.inf
                for row in rows]
        flags = [v < SINGULAR_RATIO_TOL for v in vals]
    # largest radius from which every smaller radius passes: keeps δ = ε/r small
    r_fin = None
    for r, ok in zip(reversed(radii), reversed(flags)):
        if not ok:
            break
        r_fin = r
    leb = {"kind": mode, "ratios": vals, "passed": r_fin is not None}
    if r_fin is None:
        r_fin = radii[-1]
        warnings.append(f"x0 failed the {mode} density-point check; the tangent is not certified")
    eps_used = _diagonal_eps(spec.schedule, r_fin)
    if resolution is None:
        if mode == "singular":
            # the atom rule needs a 3^d window below 1/20 of |Q|
            resolution = 128 if d == 1 else 16
        else:
            # each Q cell must hold at least one period δ
            resolution = int(max(2, min(16, math.floor(r_fin / max(eps_used)))))
    Q = unit_cube(d, resolution)
    nq = Q.size

    if mode == "regular":
        src = c
        pts, wts = shift_fibers(ym.nu_points[c], ym.nu_weights[c], tz, xi0)
        nu_pts = np.broadcast_to(pts, (nq,) + pts.shape).copy()
        nu_w = np.broadcast_to(wts, (nq,) + wts.shape).copy()
        lam = np.full(nq, float(ym.lam_density[c]))
        atom_locs = np.zeros((0, d))
        atom_masses = np.zeros(0)
        srcs = [src] * nq
    else:
        _, sg, inside = _lam_in_cube(ym, x0, r_fin)
        if sg <= 0:
            raise LocalizationError("no singular mass of λ near x0")
        nu_pts = np.zeros((nq, nz, 1, N))
        nu_w = np.ones((nq, nz, 1))
        lam = np.zeros(nq)
        atom_locs = (ym.atom_locs[inside] - x0) / r_fin
        atom_masses = ym.atom_masses[inside] / sg
        srcs = [None] * nq + [om.size + int(j) for j in inside]
    S = nq + len(atom_masses)
    rho = np.full((S, nz), 1.0 / nz)
    inf_p, inf_w = [], []
    for s, src in enumerate(srcs):
        if src is None:
            p = np.zeros((nz, 1, N))
            p[..., 0] = 1.0
            w = np.ones((nz, 1))
        else:
            rho[s] = translate_rows(ym.rho[src], tz, xi0)[0]
            p, w = shift_fibers(ym.inf_dirs[src], ym.inf_weights[src], tz, xi0)
        inf_p.append(p)
        inf_w.append(w)
    Ki = max(p.shape[1] for p in inf_p)
    ip = np.zeros((S, nz, Ki, N))
    ip[..., 0] = 1.0
    iw = np.zeros((S, nz, Ki))
    for s, (p, w) in enumerate(zip(inf_p, inf_w)):
        ip[s, :, :p.shape[1]] = p
        iw[s, :, :w.shape[1]] = w
    rho = rho / rho.sum(axis=1, keepdims=True)
    site_mass = np.concatenate([lam * Q.cell_volume, atom_masses])
    tangent = TwoScaleYoungMeasure(Q, tz, nu_pts, nu_w, lam, atom_locs, atom_masses, rho, ip, iw,
                                   site_mass <= 0, {"x0": x0.tolist(), "xi0": list(xi0), "mode": mode})
    res = TangentResult(tangent, xi0, mode, r_fin,
                        {"lebesgue": leb, "frac_spread": spread, "radii": radii}, warnings=warnings)
    if not verify:
        return res
    cst = None
    if mode == "singular":
        _, sg, _ = _lam_in_cube(ym, x0, r_fin)
        cst = 1.0 / sg
    gam = blowup_sequence(spec, x0, r_fin, cst, resolution, eps_used)
    o2 = EstimatorOptions(**{**opts.__dict__, "n_avg": len(eps_used)})
    try:
        est = estimate_young_measure(gam, o2)
    except EstimationError as exc:
        warnings.append(f"re-estimation of the blow-up family failed: {exc}")
        return res
    res.reestimated = est
    res.checks["diagonal_eps"] = list(eps_used)
    res.diff = ym_diff(est, tangent)
    return res
