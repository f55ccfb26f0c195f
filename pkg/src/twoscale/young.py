"""Discrete two-scale Young measures (ν, λ, ρ, ν∞) and their compactified
images on cl Ω × Z × closed unit ball.

Layout
------
* ν: for every macro cell x and torus cell ξ a finite atomic probability
  with support points ``nu_points[x, ξ, k]`` (in E) and weights
  ``nu_weights[x, ξ, k]``.
* λ: density over macro cells plus atoms.
* "sites" index λ's pieces: the macro cells first, then the atoms.
  ``rho[s]`` is a probability on torus cells, ``inf_dirs[s, ξ, k]`` /
  ``inf_weights[s, ξ, k]`` an atomic probability on the unit sphere.
* Sites without λ-mass carry the uniform ρ, flagged in ``rho_free``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from .measures import GridDomain, ScalarMeasure, VectorMeasure
from .integrands import Integrand, NotInE2, transform_T, phi_g_family

__all__ = [
    "TwoScaleYoungMeasure",
    "CompactifiedMeasure",
    "NotAYoungMeasure",
    "pair",
    "pair_bound",
    "pair_compactified",
    "compactify",
    "decompose_compactified",
    "verify_representation_identity",
    "representation_tolerance",
    "embed_measure",
    "elementary",
    "ym_to_json",
    "ym_from_json",
    "ym_max_abs_difference",
]

NORM_TOL = 1e-9


class NotAYoungMeasure(ValueError):
    """The representation identity fails: the measure is not a compactified
    two-scale Young measure."""


def _freeze(obj, **arrays):
    for k, v in arrays.items():
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(obj, k, v)


@dataclass(frozen=True)
class TwoScaleYoungMeasure:
    omega: GridDomain
    torus: GridDomain
    nu_points: np.ndarray
    nu_weights: np.ndarray
    lam_density: np.ndarray
    atom_locs: np.ndarray
    atom_masses: np.ndarray
    rho: np.ndarray
    inf_dirs: np.ndarray
    inf_weights: np.ndarray
    rho_free: np.ndarray = field(default=None)
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nx, nz = self.omega.size, self.torus.size
        pts = np.asarray(self.nu_points, float)
        w = np.asarray(self.nu_weights, float)
        if pts.ndim != 4 or pts.shape[:2] != (nx, nz) or w.shape != pts.shape[:3]:
            raise ValueError("nu arrays must have shapes (nx, nz, K, N) and (nx, nz, K)")
        N = pts.shape[3]
        lam = np.asarray(self.lam_density, float).ravel()
        locs = np.asarray(self.atom_locs, float).reshape(-1, self.omega.dim)
        am = np.asarray(self.atom_masses, float).ravel()
        S = nx + len(am)
        rho = np.asarray(self.rho, float)
        idirs = np.asarray(self.inf_dirs, float)
        iw = np.asarray(self.inf_weights, float)
        if lam.shape != (nx,) or len(locs) != len(am):
            raise ValueError("lambda arrays have the wrong shape")
        if rho.shape != (S, nz):
            raise ValueError("rho must have shape (sites, nz)")
        if idirs.ndim != 4 or idirs.shape[:2] != (S, nz) or idirs.shape[3] != N or iw.shape != idirs.shape[:3]:
            raise ValueError("nu_inf arrays must have shapes (sites, nz, K, N) and (sites, nz, K)")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=2) - 1) > NORM_TOL):
            raise ValueError("every nu fiber is a probability")
        if np.any(lam < 0) or np.any(am < 0):
            raise ValueError("lambda is nonnegative")
        if np.any(rho < 0) or np.any(np.abs(rho.sum(axis=1) - 1) > NORM_TOL):
            raise ValueError("every rho_x is a probability")
        if np.any(iw < 0) or np.any(np.abs(iw.sum(axis=2) - 1) > NORM_TOL):
            raise ValueError("every nu_inf fiber is a probability")
        charged = iw > 0
        if np.any(np.abs(np.linalg.norm(idirs, axis=3)[charged] - 1) > NORM_TOL):
            raise ValueError("nu_inf fibers live on the unit sphere")
        free = np.zeros(S, bool) if self.rho_free is None else np.asarray(self.rho_free, bool)
        _freeze(self, nu_points=pts, nu_weights=w, lam_density=lam, atom_locs=locs, atom_masses=am,
                rho=rho, inf_dirs=idirs, inf_weights=iw, rho_free=free)

    # -- shape helpers
    @property
    def N(self) -> int:
        return self.nu_points.shape[3]

    @property
    def n_sites(self) -> int:
        return self.omega.size + len(self.atom_masses)

    @property
    def lam(self) -> ScalarMeasure:
        return ScalarMeasure(self.omega, self.lam_density, self.atom_locs, self.atom_masses)

    def site_masses(self) -> np.ndarray:
        return np.concatenate([self.lam_density * self.omega.cell_volume, self.atom_masses])

    def site_locs(self) -> np.ndarray:
        return np.concatenate([self.omega.centers(), self.atom_locs])

    def is_atom_site(self) -> np.ndarray:
        return np.arange(self.n_sites) >= self.omega.size

    def l1_norm(self) -> float:
        """∫∫⟨|·|, ν⟩ dξ dx."""
        cv = self.omega.cell_volume * self.torus.cell_volume
        return float(cv * np.sum(self.nu_weights * np.linalg.norm(self.nu_points, axis=3)))


@dataclass(frozen=True)
class CompactifiedMeasure:
    """Positive measure on cl Ω × Z × cl B_E.

    Interior layer: per (x cell, ξ cell) point masses ``int_mass`` at
    ``int_points`` with |ẑ| < 1.  Boundary layer (|ẑ| = 1): per site and
    ξ cell, masses ``bnd_mass`` at unit vectors ``bnd_points``.  Sites are
    the macro cells followed by ``atom_locs``."""

    omega: GridDomain
    torus: GridDomain
    int_points: np.ndarray
    int_mass: np.ndarray
    atom_locs: np.ndarray
    bnd_points: np.ndarray
    bnd_mass: np.ndarray

    def __post_init__(self):
        nx, nz = self.omega.size, self.torus.size
        ip = np.asarray(self.int_points, float)
        im = np.asarray(self.int_mass, float)
        locs = np.asarray(self.atom_locs, float).reshape(-1, self.omega.dim)
        bp = np.asarray(self.bnd_points, float)
        bm = np.asarray(self.bnd_mass, float)
        S = nx + len(locs)
        if ip.ndim != 4 or ip.shape[:2] != (nx, nz) or im.shape != ip.shape[:3]:
            raise ValueError("interior arrays have the wrong shape")
        if bp.ndim != 4 or bp.shape[:2] != (S, nz) or bm.shape != bp.shape[:3]:
            raise ValueError("boundary arrays have the wrong shape")
        if np.any(im < 0) or np.any(bm < 0):
            raise ValueError("compactified measures are nonnegative")
        if np.any(np.linalg.norm(ip, axis=3)[im > 0] >= 1.0):
            raise ValueError("interior points lie strictly inside the ball")
        if np.any(np.abs(np.linalg.norm(bp, axis=3)[bm > 0] - 1.0) > NORM_TOL):
            raise ValueError("boundary points lie on the unit sphere")
        _freeze(self, int_points=ip, int_mass=im, atom_locs=locs, bnd_points=bp, bnd_mass=bm)

    @property
    def n_sites(self) -> int:
        return self.omega.size + len(self.atom_locs)

    def site_locs(self) -> np.ndarray:
        return np.concatenate([self.omega.centers(), self.atom_locs])

    def total_mass(self) -> float:
        return float(self.int_mass.sum() + self.bnd_mass.sum())

    def scaled(self, interior: float = 1.0, boundary: float = 1.0) -> "CompactifiedMeasure":
        return CompactifiedMeasure(self.omega, self.torus, self.int_points, self.int_mass * interior,
                                   self.atom_locs, self.bnd_points, self.bnd_mass * boundary)


# ----------------------------------------------------------------------------
# pairing

def _cell_grid(ym_or_mu):
    xc = ym_or_mu.omega.centers()[:, None, None, :]
    xic = ym_or_mu.torus.centers()[None, :, None, :]
    return xc, xic


def pair(f: Integrand, ym: TwoScaleYoungMeasure, parts: bool = False):
    """⟨⟨f, ν⟩⟩ = ∫∫⟨f, ν_{x,ξ}⟩ dξ dx + ∫∫⟨f∞, ν∞_{x,ξ}⟩ dρ_x dλ by cell
    midpoint quadrature."""
    xc, xic = _cell_grid(ym)
    cv = ym.omega.cell_volume * ym.torus.cell_volume
    vals = f(xc, xic, ym.nu_points)
    w = ym.nu_weights
    inner = float(cv * np.sum(np.where(w > 0, w * vals, 0.0)))
    charge = ym.site_masses()[:, None, None] * ym.rho[:, :, None] * ym.inf_weights
    conc = 0.0
    if np.any(charge > 0):
        idx = np.nonzero(charge > 0)
        locs = ym.site_locs()[idx[0]]
        xis = ym.torus.centers()[idx[1]]
        dirs = ym.inf_dirs[idx]
        try:
            conc = float(np.sum(charge[idx] * f.f_inf(locs, xis, dirs)))
        except NotInE2 as exc:
            raise NotInE2(f"{f.name}: recession needed on charged directions ({exc})") from None
    if parts:
        return inner + conc, inner, conc
    return inner + conc


def pair_bound(f: Integrand, ym: TwoScaleYoungMeasure, n_ball: int = 64) -> float:
    """‖Tf‖_∞ (L^d(Ω) + ∫∫⟨|·|,ν⟩ + λ(cl Ω)), with the sup over a sample."""
    Tf = transform_T(f)
    r = np.linspace(0.0, 1.0, n_ball)
    N = ym.N
    dirs = np.eye(N)
    dirs = np.concatenate([dirs, -dirs])
    zh = (r[:, None, None] * dirs[None, :, :]).reshape(-1, N)
    xc = ym.omega.centers()[:, None, None, :]
    xic = ym.torus.centers()[None, :, None, :]
    sup = float(np.max(np.abs(Tf(xc, xic, zh[None, None, :, :]))))
    return sup * (ym.omega.volume + ym.l1_norm() + float(ym.site_masses().sum()))


def pair_compactified(f: Integrand, mu: CompactifiedMeasure) -> float:
    """⟨Tf, μ⟩."""
    Tf = transform_T(f)
    xc, xic = _cell_grid(mu)
    m = mu.int_mass
    inner = float(np.sum(np.where(m > 0, m * Tf(xc, xic, mu.int_points), 0.0)))
    bm = mu.bnd_mass
    conc = 0.0
    if np.any(bm > 0):
        idx = np.nonzero(bm > 0)
        locs = mu.site_locs()[idx[0]]
        xis = mu.torus.centers()[idx[1]]
        conc = float(np.sum(bm[idx] * Tf(locs, xis, mu.bnd_points[idx])))
    return inner + conc


# ----------------------------------------------------------------------------
# compactify / decompose

def compactify(ym: TwoScaleYoungMeasure) -> CompactifiedMeasure:
    """S*ν: interior points ẑ = z/(1+|z|) with mass (1+|z|)·w·cell volume,
    boundary layer λ ⊗ ρ_x ⊗ ν∞."""
    cv = ym.omega.cell_volume * ym.torus.cell_volume
    n = np.linalg.norm(ym.nu_points, axis=3)
    ip = ym.nu_points / (1.0 + n)[..., None]
    im = cv * ym.nu_weights * (1.0 + n)
    bm = ym.site_masses()[:, None, None] * ym.rho[:, :, None] * ym.inf_weights
    return CompactifiedMeasure(ym.omega, ym.torus, ip, im, ym.atom_locs, ym.inf_dirs, bm)


def representation_tolerance(mu) -> float:
    """τ_rep = max(1e-8, 3 / smallest resolution)."""
    res = min(min(mu.omega.shape), min(mu.torus.shape))
    return max(1e-8, 3.0 / res)


def verify_representation_identity(mu: CompactifiedMeasure, family=None, detail: bool = False):
    """max over (φ, g) of |∫φ g (1−|ẑ|) dμ − ∫φ ∫g| / (‖φ‖∞ ‖g‖∞).

    The boundary layer does not contribute since 1 − |ẑ| = 0 there."""
    if family is None:
        family = phi_g_family(mu.omega.lower, mu.omega.upper)
    xc = mu.omega.centers()
    xic = mu.torus.centers()
    u = np.sum(mu.int_mass * (1.0 - np.linalg.norm(mu.int_points, axis=3)), axis=2)
    devs = []
    for phi, phi_int, g, label in family:
        pv = np.asarray(phi(xc), float)
        gv = np.asarray(g(xic), float)
        lhs = float(pv @ u @ gv)
        scale = max(np.max(np.abs(pv)), 1e-300) * max(np.max(np.abs(gv)), 1e-300)
        devs.append((abs(lhs - phi_int) / scale, label))
    worst = max(devs)
    if detail:
        return worst[0], devs
    return worst[0]


def _normalize_rows(mass, eps=0.0):
    tot = mass.sum(axis=-1, keepdims=True)
    pos = tot[..., 0] > eps
    out = np.where(tot > eps, mass / np.where(tot > eps, tot, 1.0), 0.0)
    return out, pos, tot[..., 0]


def decompose_compactified(mu: CompactifiedMeasure, tol: float = None, check: bool = True) -> TwoScaleYoungMeasure:
    """Inverse of ``compactify`` on its image.

    ν_{x,ξ} is the (1−|ẑ|)-weighted, u-normalized pull-back of the interior
    fiber, λ collects the boundary-layer mass per site, ρ_x is its
    ξ-distribution and ν∞ the normalized boundary fiber.  Raises
    ``NotAYoungMeasure`` when the representation identity fails beyond
    ``tol`` (default τ_rep)."""
    if tol is None:
        tol = representation_tolerance(mu)
    dev = verify_representation_identity(mu)
    if check and dev > tol:
        raise NotAYoungMeasure(f"representation identity violated: deviation {dev:.3e} > {tol:.3e}")
    ip, im = mu.int_points, mu.int_mass
    r = np.linalg.norm(ip, axis=3)
    wt = im * (1.0 - r)
    nu_w, defined, _ = _normalize_rows(wt)
    nu_p = ip / np.where(im > 0, 1.0 - r, 1.0)[..., None]
    nu_p = np.where((im > 0)[..., None], nu_p, 0.0)
    undefined_nu = ~defined
    if np.any(undefined_nu):
        nu_w = nu_w.copy()
        nu_p = nu_p.copy()
        nu_w[undefined_nu] = 0.0
        nu_w[undefined_nu, 0] = 1.0
        nu_p[undefined_nu, 0] = 0.0
    bm = mu.bnd_mass
    per_xi = bm.sum(axis=2)
    site_mass = per_xi.sum(axis=1)
    rho, charged, _ = _normalize_rows(per_xi)
    rho = rho.copy()
    rho[~charged] = 1.0 / mu.torus.size
    infw, infdef, _ = _normalize_rows(bm)
    infw = infw.copy()
    bp = mu.bnd_points.copy()
    e1 = np.zeros(bp.shape[3])
    e1[0] = 1.0
    bad = ~infdef
    infw[bad] = 0.0
    infw[bad, 0] = 1.0
    bp[bad, 0] = e1
    nx = mu.omega.size
    lam_density = site_mass[:nx] / mu.omega.cell_volume
    info = {"representation_deviation": dev, "undefined_nu_cells": int(undefined_nu.sum())}
    return TwoScaleYoungMeasure(mu.omega, mu.torus, nu_p, nu_w, lam_density, mu.atom_locs, site_mass[nx:],
                                rho, bp, infw, ~charged, info)


# ----------------------------------------------------------------------------
# elementary Young measures

def elementary(omega: GridDomain, torus: GridDomain, N: int = 1, nu_point=None,
               lam_density=None, atom_locs=(), atom_masses=(), rho=None, inf_dirs=None) -> TwoScaleYoungMeasure:
    """Build a ym with Dirac fibers.

    ``nu_point``: array (nx, nz, N) or a constant vector (default 0).
    ``rho``: per-site arrays (sites, nz) or None for uniform.
    ``inf_dirs``: unit vectors per site (sites, N) or (sites, nz, N)."""
    nx, nz = omega.size, torus.size
    pts = np.zeros((nx, nz, N)) if nu_point is None else np.broadcast_to(np.asarray(nu_point, float), (nx, nz, N))
    lam = np.zeros(nx) if lam_density is None else np.broadcast_to(np.asarray(lam_density, float), (nx,))
    locs = np.asarray(atom_locs, float).reshape(-1, omega.dim)
    am = np.asarray(atom_masses, float).ravel()
    S = nx + len(am)
    site_mass = np.concatenate([lam * omega.cell_volume, am])
    if rho is None:
        rho = np.full((S, nz), 1.0 / nz)
    rho = np.asarray(rho, float)
    if inf_dirs is None:
        dirs = np.zeros((S, nz, N))
        dirs[..., 0] = 1.0
    else:
        dirs = np.asarray(inf_dirs, float)
        if dirs.ndim == 2:
            dirs = np.broadcast_to(dirs[:, None, :], (S, nz, N))
    free = site_mass <= 0
    rho = rho.copy()
    rho[free] = 1.0 / nz
    return TwoScaleYoungMeasure(
        omega, torus, pts[:, :, None, :].copy(), np.ones((nx, nz, 1)), lam, locs, am,
        rho, dirs[:, :, None, :].copy(), np.ones((S, nz, 1)), free)


def embed_measure(m: VectorMeasure, torus: GridDomain) -> TwoScaleYoungMeasure:
    """(δ_{μ^ac}, |μ^s|, L_Z, δ_{μ_s}) for a vector measure μ."""
    nx, nz, N = m.domain.size, torus.size, m.value_dim
    pts = np.broadcast_to(m.density[:, None, :], (nx, nz, N))
    keep = m.atom_masses > 0
    S = nx + int(keep.sum())
    dirs = np.zeros((S, N))
    dirs[:, 0] = 1.0
    dirs[nx:] = m.atom_dirs[keep]
    return elementary(m.domain, torus, N, pts, None, m.atom_locs[keep], m.atom_masses[keep], None, dirs)


# ----------------------------------------------------------------------------
# serialization

def _flt(a):
    return [float(v) for v in np.asarray(a).ravel()]


def ym_to_json(ym: TwoScaleYoungMeasure) -> dict:
    """JSON document with the four components.  ν is stored sparsely (cells
    whose fiber is exactly δ_0 are omitted), ρ and ν∞ only for charged
    sites."""
    nx, nz = ym.omega.size, ym.torus.size
    K, N = ym.nu_weights.shape[2], ym.N
    w = ym.nu_weights
    nontrivial = (w > 0) & np.any(ym.nu_points != 0, axis=3)
    cell_mask = np.any(nontrivial, axis=2)
    cells, xis = np.nonzero(cell_mask)
    ent_w, ent_p, ent_c, ent_s = [], [], [], []
    for c, x in zip(cells.tolist(), xis.tolist()):
        for k in range(K):
            if w[c, x, k] > 0:
                ent_c.append(c * nz + x)
                ent_s.append(k)
                ent_w.append(float(w[c, x, k]))
                ent_p.extend(_flt(ym.nu_points[c, x, k]))
    masses = ym.site_masses()
    charged = np.nonzero(masses > 0)[0]
    sites = []
    for s in charged.tolist():
        kk = ym.inf_weights[s].shape[1]
        sites.append({
            "site": s,
            "rho": _flt(ym.rho[s]),
            "nu_inf_dirs": _flt(ym.inf_dirs[s]),
            "nu_inf_weights": _flt(ym.inf_weights[s]),
            "K": kk,
        })
    return {
        "format": "two-scale-young-measure/1",
        "omega": ym.omega.to_json(),
        "torus": ym.torus.to_json(),
        "N": N,
        "nu": {"K": K, "default": "delta_0", "cell": ent_c, "slot": ent_s, "points": ent_p, "weights": ent_w},
        "lambda": {"density": _flt(ym.lam_density),
                   "atoms": [{"location": _flt(l), "mass": float(m)} for l, m in zip(ym.atom_locs, ym.atom_masses)]},
        "rho_nu_inf": sites,
    }


def ym_from_json(d: dict) -> TwoScaleYoungMeasure:
    omega = GridDomain.from_json(d["omega"])
    torus = GridDomain.from_json(d["torus"])
    N = int(d["N"])
    nx, nz = omega.size, torus.size
    K = int(d["nu"]["K"])
    pts = np.zeros((nx * nz, K, N))
    w = np.zeros((nx * nz, K))
    w[:, 0] = 1.0
    cells = np.asarray(d["nu"]["cell"], int)
    slots = np.asarray(d["nu"]["slot"], int)
    if len(cells):
        w[np.unique(cells)] = 0.0
        w[cells, slots] = d["nu"]["weights"]
        pts[cells, slots] = np.asarray(d["nu"]["points"], float).reshape(-1, N)
    atoms = d["lambda"]["atoms"]
    locs = np.asarray([a["location"] for a in atoms], float).reshape(-1, omega.dim)
    am = np.asarray([a["mass"] for a in atoms], float)
    S = nx + len(am)
    entries = d["rho_nu_inf"]
    Ki = max([e["K"] for e in entries], default=1)
    rho = np.full((S, nz), 1.0 / nz)
    free = np.ones(S, bool)
    dirs = np.zeros((S, nz, Ki, N))
    dirs[..., 0, 0] = 1.0
    iw = np.zeros((S, nz, Ki))
    iw[..., 0] = 1.0
    for e in entries:
        s, k = e["site"], e["K"]
        rho[s] = e["rho"]
        free[s] = False
        iw[s] = 0.0
        dirs[s] = 0.0
        iw[s, :, :k] = np.asarray(e["nu_inf_weights"]).reshape(nz, k)
        dirs[s, :, :k] = np.asarray(e["nu_inf_dirs"]).reshape(nz, k, N)
    return TwoScaleYoungMeasure(omega, torus, pts.reshape(nx, nz, K, N), w.reshape(nx, nz, K),
                                d["lambda"]["density"], locs, am, rho, dirs, iw, free)


def ym_max_abs_difference(a: TwoScaleYoungMeasure, b: TwoScaleYoungMeasure) -> float:
    """Entrywise sup distance between two ym's sharing one layout.  Fibers
    are compared as measures (slot order and zero-weight slots ignored)."""
    if a.omega != b.omega or a.torus != b.torus or a.n_sites != b.n_sites:
        return np.inf
    d = 0.0
    d = max(d, float(np.max(np.abs(a.lam_density - b.lam_density), initial=0.0)))
    d = max(d, float(np.max(np.abs(a.atom_masses - b.atom_masses), initial=0.0)))
    d = max(d, float(np.max(np.abs(a.atom_locs - b.atom_locs), initial=0.0)))
    d = max(d, float(np.max(np.abs(a.rho - b.rho))))
    d = max(d, _fiber_sup(a.nu_points, a.nu_weights, b.nu_points, b.nu_weights))
    charged = (a.site_masses()[:, None] * a.rho > 0) | (b.site_masses()[:, None] * b.rho > 0)
    if np.any(charged):
        d = max(d, _fiber_sup(a.inf_dirs[charged], a.inf_weights[charged],
                              b.inf_dirs[charged], b.inf_weights[charged]))
    return d


def _fiber_sup(pa, wa, pb, wb) -> float:
    K = max(wa.shape[-1], wb.shape[-1])
    N = pa.shape[-1]
    flat_pa = pa.reshape(-1, pa.shape[-2], N)
    flat_pb = pb.reshape(-1, pb.shape[-2], N)
    flat_wa = wa.reshape(-1, wa.shape[-1])
    flat_wb = wb.reshape(-1, wb.shape[-1])

    def pad(p, w):
        k = w.shape[1]
        if k < K:
            p = np.concatenate([p, np.zeros((len(p), K - k, N))], axis=1)
            w = np.concatenate([w, np.zeros((len(w), K - k))], axis=1)
        p = np.where((w > 0)[..., None], p, 0.0)
        # order slots by weight-positivity, then by point coordinates
        keys = [p[..., j] for j in reversed(range(N))] + [(w <= 0).astype(float)]
        order = np.lexsort(keys, axis=-1)
        return np.take_along_axis(p, order[..., None], 1), np.take_along_axis(w, order, 1)

    pa2, wa2 = pad(flat_pa, flat_wa)
    pb2, wb2 = pad(flat_pb, flat_wb)
    return float(max(np.max(np.abs(pa2 - pb2), initial=0.0), np.max(np.abs(wa2 - wb2), initial=0.0)))


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True)
