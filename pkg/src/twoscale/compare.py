"""Distances between two-scale* Young measures and the closed-form references."""
from __future__ import annotations

import math

import numpy as np

from .measures import GridDomain, interval
from .measures import torus as make_torus
from .young import TwoScaleYoungMeasure, elementary

__all__ = [
    "ym_diff",
    "diff_passes",
    "circular_w1",
    "torus_tv",
    "golden_spike_singular",
    "golden_spike_diffuse",
    "golden_fakir",
    "golden_translated_spike",
    "GOLDEN_TOLERANCES",
]

GOLDEN_TOLERANCES = {"atom_location_cells": 2.0, "atom_mass_rel": 0.02, "tv": 0.02}


# ----------------------------------------------------------------------------
# references

def golden_spike_singular(omega: GridDomain = None, tz: GridDomain = None) -> TwoScaleYoungMeasure:
    """(δ_0, δ_0, δ_⟨0⟩, δ_{+1}): the spike with α > 1."""
    omega = omega or interval(-1.0, 1.0, 4096)
    tz = tz or make_torus(1, 64)
    rho = np.zeros((omega.size + 1, tz.size))
    rho[:, 0] = 1.0
    return elementary(omega, tz, 1, atom_locs=[[0.0]], atom_masses=[1.0], rho=rho,
                      inf_dirs=np.ones((omega.size + 1, 1)))


def golden_spike_diffuse(omega: GridDomain = None, tz: GridDomain = None) -> TwoScaleYoungMeasure:
    """(δ_0, δ_0, L_Z, δ_{+1}): the spike with α ≤ 1."""
    omega = omega or interval(-1.0, 1.0, 4096)
    tz = tz or make_torus(1, 64)
    return elementary(omega, tz, 1, atom_locs=[[0.0]], atom_masses=[1.0],
                      inf_dirs=np.ones((omega.size + 1, 1)))


def golden_fakir(omega: GridDomain = None, tz: GridDomain = None) -> TwoScaleYoungMeasure:
    """(δ_0, L¹↾[0,1/2], δ_⟨0⟩, ½δ_{−1} + ½δ_{+1})."""
    omega = omega or interval(0.0, 1.0, 512)
    tz = tz or make_torus(1, 64)
    nx, nz = omega.size, tz.size
    lam = (omega.centers()[:, 0] < 0.5).astype(float)
    rho = np.zeros((nx, nz))
    rho[:, 0] = 1.0
    base = elementary(omega, tz, 1, lam_density=lam, rho=rho)
    dirs = np.zeros((nx, nz, 2, 1))
    dirs[..., 0, 0], dirs[..., 1, 0] = -1.0, 1.0
    return TwoScaleYoungMeasure(omega, tz, base.nu_points, base.nu_weights, lam, base.atom_locs,
                                base.atom_masses, base.rho, dirs, np.full((nx, nz, 2), 0.5), base.rho_free)


def golden_translated_spike(a: float = 1 / math.sqrt(2), xi: float = 0.3,
                            omega: GridDomain = None, tz: GridDomain = None) -> TwoScaleYoungMeasure:
    """(δ_0, δ_a, δ_ξ, δ_{+1}) with ρ a Dirac in the torus cell of ξ."""
    omega = omega or interval(0.0, 1.0, 4096)
    tz = tz or make_torus(1, 64)
    rho = np.zeros((omega.size + 1, tz.size))
    rho[:, int(tz.cell_index(np.array([[xi]]))[0])] = 1.0
    return elementary(omega, tz, 1, atom_locs=[[a]], atom_masses=[1.0], rho=rho,
                      inf_dirs=np.ones((omega.size + 1, 1)))


# ----------------------------------------------------------------------------
# elementary distances

def torus_tv(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance ½Σ|p − q| of two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def circular_w1(p: np.ndarray, q: np.ndarray, shape) -> float:
    """Wasserstein-1 distance on the discrete torus, in cells: the
    maximum over axes of the circular W1 between axis marginals."""
    p = np.asarray(p, float).reshape(shape)
    q = np.asarray(q, float).reshape(shape)
    out = 0.0
    for a in range(len(shape)):
        ax = tuple(i for i in range(len(shape)) if i != a)
        diff = np.cumsum(p.sum(axis=ax) - q.sum(axis=ax))
        out = max(out, float(np.abs(diff - np.median(diff)).sum()))
    return out


def _sector_hist(dirs, weights, nsec=16):
    """Histogram of a measure on the unit sphere over coarse sectors."""
    N = dirs.shape[-1]
    if N == 1:
        idx = (dirs[..., 0] > 0).astype(int)
        n = 2
    elif N == 2:
        ang = np.mod(np.arctan2(dirs[..., 1], dirs[..., 0]) + np.pi / nsec, 2 * np.pi)
        idx = np.minimum((ang / (2 * np.pi) * nsec).astype(int), nsec - 1)
        n = nsec
    else:
        idx = np.zeros(dirs.shape[:-1], int)
        for j in range(N):
            idx = 2 * idx + (dirs[..., j] > 0)
        n = 2**N
    return idx, n


def _coarse_bins(omega: GridDomain, bins: int) -> np.ndarray:
    """Coarse x-bin index of every cell (``bins`` per axis at most)."""
    idx = np.zeros(omega.size, np.int64)
    mult = 1
    grids = np.indices(omega.shape).reshape(omega.dim, -1)
    for a in reversed(range(omega.dim)):
        nb = min(bins, omega.shape[a])
        b = grids[a] * nb // omega.shape[a]
        idx += b * mult
        mult *= nb
    return idx


def _joint_hist(ym: TwoScaleYoungMeasure, sites, weights):
    """Σ_s w_s ρ_s ⊗ ν∞_s over (ξ cell, sector), normalized to mass 1."""
    idx, n = _sector_hist(ym.inf_dirs[sites], None)
    nz = ym.torus.size
    w = weights[:, None, None] * ym.rho[sites][:, :, None] * ym.inf_weights[sites]
    key = np.arange(nz)[None, :, None] * n + idx
    h = np.bincount(key.ravel(), weights=w.ravel(), minlength=nz * n)
    tot = h.sum()
    return (h / tot if tot > 0 else h).reshape(nz, n)


# ----------------------------------------------------------------------------
# ym_diff

def ym_diff(a: TwoScaleYoungMeasure, b: TwoScaleYoungMeasure, bins: int = 32) -> dict:
    """Component distances of ``a`` from the reference ``b``.

    Both must share Ω and Z grids.  Keys:
      nu_moment          ∫∫ max_j |⟨ψ_j, ν^a⟩ − ⟨ψ_j, ν^b⟩| with ψ = |ẑ|, ẑ_i
      atom_count         (atoms of a, atoms of b) after dropping zero masses
      atom_location_cells  max distance of matched atoms in Ω cells
      atom_mass_rel      max relative mass error of matched atoms
      lambda_ac_tv       coarse-binned TV of λ^ac, relative to the total λ mass
      rho_tv, rho_w1_cells  ρ distance at matched atoms, and λ^ac-weighted per bin
      nu_inf_tv          TV of the (ξ, direction-sector) histograms of ρ ⊗ ν∞
      direction_tv       TV of the ξ-integrated direction histograms"""
    if a.omega != b.omega or a.torus != b.torus:
        raise ValueError("ym_diff needs equal grids")
    om, tz = a.omega, a.torus
    cv = om.cell_volume * tz.cell_volume

    def moments(ym):
        r = np.linalg.norm(ym.nu_points, axis=3, keepdims=True)
        zh = ym.nu_points / (1.0 + r)
        feats = np.concatenate([np.linalg.norm(zh, axis=3, keepdims=True), zh], axis=3)
        return np.einsum("xzk,xzkj->xzj", ym.nu_weights, feats)

    out = {"nu_moment": float(np.max(np.abs(moments(a) - moments(b)), axis=2).sum() * cv)}

    ka, kb = np.nonzero(a.atom_masses > 0)[0], np.nonzero(b.atom_masses > 0)[0]
    out["atom_count"] = [int(len(ka)), int(len(kb))]
    h = float(np.max(om.widths))
    loc_err = mass_err = rho_tv = rho_w1 = 0.0
    used = set()
    for j in kb:
        if len(ka) == 0:
            loc_err = mass_err = rho_tv = rho_w1 = math.inf
            break
        dist = np.linalg.norm(a.atom_locs[ka] - b.atom_locs[j], axis=1)
        i = int(ka[np.argmin(dist)])
        used.add(i)
        loc_err = max(loc_err, float(dist.min()) / h)
        mass_err = max(mass_err, abs(a.atom_masses[i] - b.atom_masses[j]) / b.atom_masses[j])
        sa, sb = om.size + i, om.size + j
        rho_tv = max(rho_tv, torus_tv(a.rho[sa], b.rho[sb]))
        rho_w1 = max(rho_w1, circular_w1(a.rho[sa], b.rho[sb], tz.shape))
    extra = float(sum(a.atom_masses[i] for i in ka if i not in used))
    out.update(atom_location_cells=loc_err, atom_mass_rel=mass_err, extra_atom_mass=extra)

    bidx = _coarse_bins(om, bins)
    nb = int(bidx.max()) + 1
    la = np.bincount(bidx, weights=a.lam_density * om.cell_volume, minlength=nb)
    lb = np.bincount(bidx, weights=b.lam_density * om.cell_volume, minlength=nb)
    scale = max(la.sum() + a.atom_masses.sum(), lb.sum() + b.atom_masses.sum(), 1e-300)
    out["lambda_ac_tv"] = float(np.abs(la - lb).sum() / scale)

    if lb.sum() > 0:
        tv_acc = w1_acc = 0.0
        for k in np.nonzero(lb > 0)[0]:
            cells = np.nonzero(bidx == k)[0]
            ra = (a.lam_density[cells, None] * a.rho[cells]).sum(axis=0)
            rb = (b.lam_density[cells, None] * b.rho[cells]).sum(axis=0)
            if ra.sum() <= 0:
                tv_acc += lb[k]
                w1_acc += lb[k] * tz.size
                continue
            ra, rb = ra / ra.sum(), rb / rb.sum()
            tv_acc += lb[k] * torus_tv(ra, rb)
            w1_acc += lb[k] * circular_w1(ra, rb, tz.shape)
        rho_tv = max(rho_tv, tv_acc / lb.sum())
        rho_w1 = max(rho_w1, w1_acc / lb.sum())
    out.update(rho_tv=rho_tv, rho_w1_cells=rho_w1)

    sa_all = np.arange(a.n_sites)
    sb_all = np.arange(b.n_sites)
    ma, mb = a.site_masses(), b.site_masses()
    if mb.sum() > 0 and ma.sum() > 0:
        ja, jb = _joint_hist(a, sa_all, ma), _joint_hist(b, sb_all, mb)
        out["nu_inf_tv"] = torus_tv(ja, jb)
        out["direction_tv"] = torus_tv(ja.sum(axis=0), jb.sum(axis=0))
    else:
        out["nu_inf_tv"] = out["direction_tv"] = 0.0 if (mb.sum() == 0 and ma.sum() == 0) else 1.0
    return out


def diff_passes(d: dict, tol: dict = GOLDEN_TOLERANCES, nu_tol: float = 1e-3) -> dict:
    """Pass/fail per golden component."""
    ok_atoms = d["atom_count"][0] == d["atom_count"][1]
    return {
        "nu": d["nu_moment"] < nu_tol,
        "atoms": bool(ok_atoms and d["atom_location_cells"] <= tol["atom_location_cells"]
                      and d["atom_mass_rel"] <= tol["atom_mass_rel"]),
        "lambda_ac": d["lambda_ac_tv"] <= tol["tv"],
        "rho": bool(d["rho_tv"] <= tol["tv"] or d["rho_w1_cells"] <= tol["atom_location_cells"]),
        "nu_inf": d["direction_tv"] <= tol["tv"],
    }
