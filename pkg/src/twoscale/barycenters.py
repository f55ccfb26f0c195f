"""First- and second-scale barycenters and the regular/singular partition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import ScalarMeasure, VectorMeasure, GridDomain
from .integrands import Integrand
from .young import TwoScaleYoungMeasure

__all__ = [
    "RegSingPartition",
    "reg_sing_partition",
    "barycenter",
    "SecondScaleBarycenter",
    "second_scale_barycenter",
    "fiber_moments",
]


@dataclass(frozen=True)
class RegSingPartition:
    """Every grid cell is regular; the singular set is the λ atom list."""

    regular_cells: np.ndarray
    singular_points: np.ndarray
    singular_sites: np.ndarray


def reg_sing_partition(ym: TwoScaleYoungMeasure) -> RegSingPartition:
    keep = ym.atom_masses > 0
    nx = ym.omega.size
    return RegSingPartition(np.arange(nx), ym.atom_locs[keep], nx + np.nonzero(keep)[0])


def fiber_moments(ym: TwoScaleYoungMeasure, f: Integrand = None):
    """(⟨f, ν_{x,ξ}⟩ of shape (nx, nz, m), ⟨f∞, ν∞_{s,ξ}⟩ of shape (S, nz, m));
    m = N for the identity and 1 for a scalar integrand.  The recession
    moment is only evaluated where λ ⊗ ρ charges."""
    xc = ym.omega.centers()[:, None, None, :]
    xic = ym.torus.centers()[None, :, None, :]
    charged = (ym.site_masses()[:, None] * ym.rho) > 0
    if f is None:
        inner = np.einsum("xzk,xzkn->xzn", ym.nu_weights, ym.nu_points)
        outer = np.einsum("szk,szkn->szn", ym.inf_weights, ym.inf_dirs)
        return inner, np.where(charged[..., None], outer, 0.0)
    vals = np.where(ym.nu_weights > 0, f(xc, xic, ym.nu_points), 0.0)
    inner = np.sum(ym.nu_weights * vals, axis=2)[..., None]
    outer = np.zeros(ym.rho.shape + (1,))
    if np.any(charged):
        s_idx, z_idx = np.nonzero(charged)
        locs = ym.site_locs()[s_idx][:, None, :]
        xis = ym.torus.centers()[z_idx][:, None, :]
        fv = f.f_inf(locs, xis, ym.inf_dirs[s_idx, z_idx])
        outer[s_idx, z_idx, 0] = np.sum(ym.inf_weights[s_idx, z_idx] * fv, axis=1)
    return inner, outer


def barycenter(ym: TwoScaleYoungMeasure, f: Integrand = None):
    """[f, ν] = (∫_Z⟨f, ν_{x,ξ}⟩dξ) L^d + (∫_Z⟨f∞, ν∞_{x,ξ}⟩dρ_x) λ.

    With f = None this is [ν] as a VectorMeasure (one component per axis
    of E).  A scalar f gives a ScalarMeasure when [f, ν] is nonnegative
    and a VectorMeasure with value dimension 1 otherwise.  λ^ac is absorbed
    in the density; λ atoms become atoms."""
    inner, outer = fiber_moments(ym, f)
    cvz = ym.torus.cell_volume
    nx = ym.omega.size
    per_site = np.einsum("sz,szn->sn", ym.rho, outer)
    dens = inner.sum(axis=1) * cvz + ym.lam_density[:, None] * per_site[:nx]
    vec = ym.atom_masses[:, None] * per_site[nx:]
    if f is not None and np.all(dens >= 0) and np.all(vec >= 0):
        return ScalarMeasure(ym.omega, dens[:, 0], ym.atom_locs, vec[:, 0])
    mass = np.linalg.norm(vec, axis=1)
    dirs = np.where(mass[:, None] > 0, vec / np.where(mass > 0, mass, 1.0)[:, None], 0.0)
    return VectorMeasure(ym.omega, dens, ym.atom_locs, dirs, mass)


@dataclass(frozen=True)
class SecondScaleBarycenter:
    """x ↦ ⟦f, ν⟧_x as densities on torus cells, per site.

    ``density[s, ξ]`` is the density w.r.t. L_Z; ``base_mass[s]`` is the
    (L^d + λ^s) mass of the site (cell volume or atom mass)."""

    torus: GridDomain
    density: np.ndarray
    base_mass: np.ndarray
    is_atom: np.ndarray
    site_locs: np.ndarray

    def total(self) -> np.ndarray:
        """⟦f, ν⟧_x(Z) per site, shape (S, m)."""
        return self.density.sum(axis=1) * self.torus.cell_volume

    def field(self, s: int) -> np.ndarray:
        """The density of site s on the torus grid, shape torus.shape + (m,)."""
        return self.density[s].reshape(self.torus.shape + (self.density.shape[2],))


def second_scale_barycenter(ym: TwoScaleYoungMeasure, f: Integrand = None) -> SecondScaleBarycenter:
    """Regular x: ⟦f,ν⟧_x = ⟨f, ν_{x,·}⟩ L_Z + λ^ac(x) ⟨f∞, ν∞_{x,·}⟩ ρ_x.
    Singular x (λ atoms): ⟦f,ν⟧_x = ⟨f∞, ν∞_{x,·}⟩ ρ_x."""
    inner, outer = fiber_moments(ym, f)
    cvz = ym.torus.cell_volume
    nx = ym.omega.size
    rho_dens = ym.rho / cvz
    conc = outer * rho_dens[..., None]
    dens = np.concatenate([inner + ym.lam_density[:, None, None] * conc[:nx], conc[nx:]], axis=0)
    base = np.concatenate([np.full(nx, ym.omega.cell_volume), ym.atom_masses])
    return SecondScaleBarycenter(ym.torus, dens, base, ym.is_atom_site(), ym.site_locs())
