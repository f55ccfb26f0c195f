"""Constant-coefficient operators, symbols, wave cones and A-free projection.

Symbols use the real convention A(η) = Σ η^α A_α (no (2πi)^k factor);
kernels and wave cones are unaffected by that nonzero scalar."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

__all__ = [
    "DifferentialOperator",
    "parse_operator",
    "symbol",
    "WaveConeResult",
    "wave_cone_test",
    "sphere_grid",
    "span_wave_cone",
    "project_A_free",
    "a_residual",
    "field_residual",
    "StructureReport",
    "structure_check",
]

TAU_CONE = 1e-6
KER_TOL = 1e-10


@dataclass(frozen=True)
class DifferentialOperator:
    """A = Σ_{|α|=k} A_α ∂^α with A_α ∈ Lin(E; F) stored as (F, E) arrays."""

    d: int
    E: int
    F: int
    order: int
    coeffs: dict = field(default_factory=dict)
    sobolev_p: float = None
    name: str = "custom"

    def __post_init__(self):
        if self.order < 1 or self.d < 1:
            raise ValueError("order and dimension must be at least 1")
        cl = {}
        for alpha, mat in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.d or sum(alpha) != self.order or min(alpha) < 0:
                raise ValueError(f"multi-index {alpha} is not of order {self.order} in dimension {self.d}")
            m = np.asarray(mat, float).reshape(self.F, self.E)
            m.setflags(write=False)
            cl[alpha] = m
        object.__setattr__(self, "coeffs", cl)
        if self.sobolev_p is None:
            object.__setattr__(self, "sobolev_p", 1.0 + 0.5 / max(self.d - 1, 1) if self.d > 1 else 1.5)
        if not self.is_zero and self.name == "zero":
            raise ValueError("the zero operator has no coefficients")

    @property
    def is_zero(self) -> bool:
        return all(not np.any(m) for m in self.coeffs.values())

    def to_json(self) -> dict:
        return {"name": self.name, "d": self.d, "E": self.E, "F": self.F, "k": self.order,
                "alpha": {",".join(map(str, a)): m.tolist() for a, m in self.coeffs.items()}}


def _unit(d, i):
    return tuple(int(j == i) for j in range(d))


def parse_operator(text: str, d: int = None, N: int = None) -> DifferentialOperator:
    """Operator literals: ``zero`` (uses d, N of the context), ``ddx``,
    ``grad_scalar:d=2``, ``div:d=2``, ``curl:d=2`` and
    ``custom:{"d":..,"E":..,"F":..,"k":..,"alpha":{"1,0":[[...]]}}``."""
    text = text.strip()
    head, _, rest = text.partition(":")
    kw = {}
    if head != "custom" and rest:
        for part in rest.split(","):
            key, _, val = part.partition("=")
            if key.strip() != "d" or not val.strip().isdigit():
                raise ValueError(f"bad operator parameter {part!r} in {text!r}")
            kw["d"] = int(val)
    if head == "zero":
        dd = kw.get("d", d or 1)
        n = N or 1
        return DifferentialOperator(dd, n, 1, 1, {}, name="zero")
    if head == "ddx":
        return DifferentialOperator(1, 1, 1, 1, {(1,): [[1.0]]}, name="ddx")
    if head == "grad_scalar":
        dd = kw.get("d", d or 2)
        co = {_unit(dd, i): np.eye(dd)[:, [i]] for i in range(dd)}
        return DifferentialOperator(dd, 1, dd, 1, co, name=f"grad_scalar:d={dd}")
    if head == "div":
        dd = kw.get("d", d or 2)
        co = {_unit(dd, i): np.eye(dd)[[i], :] for i in range(dd)}
        return DifferentialOperator(dd, dd, 1, 1, co, name=f"div:d={dd}")
    if head == "curl":
        dd = kw.get("d", d or 2)
        if dd != 2:
            raise ValueError("curl literal is only provided for d=2")
        return DifferentialOperator(2, 2, 1, 1, {(1, 0): [[0.0, 1.0]], (0, 1): [[-1.0, 0.0]]}, name="curl:d=2")
    if head == "custom":
        spec = json.loads(rest)
        co = {tuple(int(t) for t in str(k).split(",")): v for k, v in spec["alpha"].items()}
        return DifferentialOperator(int(spec["d"]), int(spec["E"]), int(spec["F"]), int(spec["k"]), co,
                                    spec.get("p"), name="custom")
    raise ValueError(f"unknown operator literal {text!r}")


def symbol(op: DifferentialOperator, eta) -> np.ndarray:
    """A^k(η) = Σ η^α A_α; η of shape (d,) or (M, d) → (F, E) or (M, F, E)."""
    eta = np.asarray(eta, float)
    single = eta.ndim == 1
    eta = np.atleast_2d(eta)
    out = np.zeros((len(eta), op.F, op.E))
    for alpha, mat in op.coeffs.items():
        out += np.prod(eta ** np.array(alpha), axis=1)[:, None, None] * mat
    return out[0] if single else out


# ----------------------------------------------------------------------------
# wave cone

def _icosphere(level: int) -> np.ndarray:
    t = (1 + 5**0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
             (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5),
             (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    for _ in range(level):
        cache, new = {}, []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts)


def sphere_grid(d: int) -> np.ndarray:
    """Unit directions: 720 in 2D, 2562 in 3D (icosphere), else seeded random."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = np.arange(720) * (2 * np.pi / 720)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if d == 3:
        return _icosphere(4)
    g = np.random.default_rng(0).standard_normal((4000, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _kernel_basis(mats: np.ndarray, E: int) -> np.ndarray:
    """Stacked orthonormal kernel vectors of a batch of (F, E) matrices."""
    _, s, vt = np.linalg.svd(mats, full_matrices=True)
    scale = np.maximum(1.0, s[:, :1] if s.shape[1] else np.ones((len(mats), 1)))
    sv = np.zeros((len(mats), E))
    sv[:, :s.shape[1]] = s
    null = sv <= KER_TOL * scale
    return vt[null]


@dataclass(frozen=True)
class WaveConeResult:
    inside: bool
    distance: float
    eta: np.ndarray
    kernel_distance: float
    span_basis: np.ndarray

    def to_json(self) -> dict:
        return {"inside": self.inside, "distance": self.distance, "eta": self.eta.tolist(),
                "kernel_distance": self.kernel_distance, "span_dim": int(len(self.span_basis))}


_SPAN_CACHE: dict = {}


def span_wave_cone(op: DifferentialOperator) -> np.ndarray:
    """Orthonormal basis (rows) of span Λ_A from the kernels on the η-grid."""
    key = (op.d, op.E, op.F, op.order, tuple(sorted((a, m.tobytes()) for a, m in op.coeffs.items())))
    if key not in _SPAN_CACHE:
        if op.is_zero:
            basis = np.eye(op.E)
        else:
            vecs = _kernel_basis(symbol(op, sphere_grid(op.d)), op.E)
            if len(vecs) == 0:
                basis = np.zeros((0, op.E))
            else:
                _, s, vt = np.linalg.svd(vecs, full_matrices=False)
                basis = vt[s > 1e-8 * max(1.0, s[0])]
        _SPAN_CACHE[key] = basis
    return _SPAN_CACHE[key]


def wave_cone_test(op: DifferentialOperator, z) -> WaveConeResult:
    """Minimize |A(η) z| / |z| over unit η (grid plus local refinement)."""
    z = np.asarray(z, float).ravel()
    if z.size != op.E:
        raise ValueError(f"z has dimension {z.size}, the operator acts on E = R^{op.E}")
    nz = float(np.linalg.norm(z))
    basis = span_wave_cone(op)
    if op.is_zero or nz == 0:
        return WaveConeResult(True, 0.0, np.eye(op.d)[0], 0.0, basis)
    zu = z / nz
    grid = sphere_grid(op.d)
    vals = np.linalg.norm(symbol(op, grid) @ zu, axis=1)
    i = int(np.argmin(vals))
    best_eta, best = grid[i], float(vals[i])

    def obj(eta):
        eta = np.asarray(eta, float)
        return float(np.linalg.norm(symbol(op, eta / np.linalg.norm(eta)) @ zu))
    if op.d == 2:
        th0 = np.arctan2(best_eta[1], best_eta[0])
        step = 2 * np.pi / 720
        r = minimize_scalar(lambda t: obj([np.cos(t), np.sin(t)]), bounds=(th0 - step, th0 + step),
                            method="bounded", options={"xatol": 1e-12})
        if r.fun < best:
            best, best_eta = float(r.fun), np.array([np.cos(r.x), np.sin(r.x)])
    elif op.d > 2:
        r = minimize(obj, best_eta, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        if r.fun < best:
            best, best_eta = float(r.fun), r.x / np.linalg.norm(r.x)
    # distance of z/|z| to the nearest kernel on the grid
    _, s, vt = np.linalg.svd(symbol(op, np.vstack([grid, best_eta])), full_matrices=True)
    kd = 1.0
    for k in range(len(vt)):
        sv = np.zeros(op.E)
        sv[:len(s[k])] = s[k]
        ker = vt[k][sv <= KER_TOL * max(1.0, s[k][0] if len(s[k]) else 1.0)]
        if len(ker):
            kd = min(kd, float(np.linalg.norm(zu - ker.T @ (ker @ zu))))
    return WaveConeResult(best < TAU_CONE, best, best_eta, kd, basis)


# ----------------------------------------------------------------------------
# Fourier projection and residuals

def _frequencies(shape, lengths=None):
    lengths = lengths or (1.0,) * len(shape)
    ks = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) / L for n, L in zip(shape, lengths)], indexing="ij")
    return np.stack([k.ravel() for k in ks], axis=1)


def _as_field(w, op: DifferentialOperator):
    w = np.asarray(w, float)
    if w.ndim == op.d:
        w = w[..., None]
    if w.ndim != op.d + 1 or w.shape[-1] != op.E:
        raise ValueError(f"field must have shape (n_1,…,n_{op.d}, {op.E})")
    return w


_PROJECTORS = {}


def _projector(op: DifferentialOperator, shape: tuple):
    """Per-mode projectors onto ker A(k), with the mean and Nyquist modes
    removed (cached per operator and grid)."""
    key = (json.dumps(op.to_json(), sort_keys=True), tuple(shape))
    if key not in _PROJECTORS:
        k = _frequencies(shape)
        if op.is_zero:
            P = np.broadcast_to(np.eye(op.E), (len(k), op.E, op.E)).copy()
        else:
            A = symbol(op, k)
            P = np.eye(op.E)[None] - np.linalg.pinv(A, rcond=1e-12) @ A
        P[0] = 0.0
        # Nyquist modes have no conjugate partner with the opposite symbol
        for a, n in enumerate(shape):
            if n % 2 == 0:
                P[k[:, a] == -(n // 2)] = 0.0
        if len(_PROJECTORS) >= 16:
            _PROJECTORS.pop(next(iter(_PROJECTORS)))
        _PROJECTORS[key] = P
    return _PROJECTORS[key]


def project_A_free(w, op: DifferentialOperator) -> np.ndarray:
    """Orthogonal L² projection onto mean-zero fields with A w = 0 on the
    unit torus: each nonzero Fourier mode is projected onto ker A(k).
    Nyquist modes of even axes are removed (real output stays exact)."""
    w = _as_field(w, op)
    shape = w.shape[:-1]
    axes = tuple(range(op.d))
    c = np.fft.fftn(w, axes=axes).reshape(-1, op.E)
    c = np.einsum("mij,mj->mi", _projector(op, shape), c)
    return np.real(np.fft.ifftn(c.reshape(shape + (op.E,)), axes=axes))


def field_residual(w, op: DifferentialOperator, lengths=None) -> float:
    """(Σ_k |A(k) ĉ_k|² / (1 + |k|²)^k)^{1/2} with ĉ_k the normalized Fourier
    coefficients of a periodic field on a box of side ``lengths``."""
    w = _as_field(w, op)
    if op.is_zero:
        return 0.0
    shape = w.shape[:-1]
    c = np.fft.fftn(w, axes=tuple(range(op.d))).reshape(-1, op.E) / np.prod(shape)
    k = _frequencies(shape, lengths)
    Ac = np.einsum("mfe,me->mf", symbol(op, k).astype(complex), c)
    wt = (1.0 + np.sum(k**2, axis=1)) ** op.order
    return float(np.sqrt(np.sum(np.abs(Ac) ** 2 / wt[:, None])))


def a_residual(target, op: DifferentialOperator, pad: int = 2) -> float:
    """Residual of a torus field, a VectorMeasure on Ω (zero-extended into a
    periodic box ``pad`` times larger) or a second-scale barycenter family
    (maximum over sites of the residual of ⟦ν⟧_x)."""
    from .barycenters import SecondScaleBarycenter
    from .measures import VectorMeasure
    if op.is_zero:
        return 0.0
    if isinstance(target, SecondScaleBarycenter):
        charged = np.nonzero(target.base_mass > 0)[0]
        return max((field_residual(target.field(int(s)), op) for s in charged), default=0.0)
    if isinstance(target, VectorMeasure):
        dom = target.domain
        dens = target.density.copy()
        if target.n_atoms:
            idx = dom.cell_index(target.atom_locs)
            np.add.at(dens, idx, target.atom_dirs * target.atom_masses[:, None] / dom.cell_volume)
        f = dens.reshape(dom.shape + (target.value_dim,))
        big = np.zeros(tuple(pad * n for n in dom.shape) + (target.value_dim,))
        big[tuple(slice(0, n) for n in dom.shape)] = f
        lengths = tuple(pad * (u - l) for l, u in zip(dom.lower, dom.upper))
        return field_residual(big, op, lengths)
    return field_residual(target, op)


# ----------------------------------------------------------------------------
# structure of A-free Young measures

@dataclass
class StructureReport:
    passed: bool
    polar_violation: float
    support_violation: float
    checked_sites: int
    details: list

    def to_json(self) -> dict:
        return {"passed": self.passed, "polar_violation": self.polar_violation,
                "support_violation": self.support_violation, "checked_sites": self.checked_sites,
                "details": self.details}


def structure_check(ym, op: DifferentialOperator, tol: float = TAU_CONE, rho_atom_factor: float = 20.0) -> StructureReport:
    """(a) at λ atoms and ρ_x-concentrated ξ cells, the polar direction of
    ⟦ν⟧_x lies in Λ_A; (b) ν∞_{x,ξ} charges only span Λ_A ∩ ∂B_E.

    Both checks run at the singular sites (λ atoms); ρ_x-concentrated
    cells are those with ρ mass above ``rho_atom_factor``/nz."""
    if ym.N != op.E:
        raise ValueError(f"the Young measure lives in R^{ym.N}, the operator acts on R^{op.E}")
    basis = span_wave_cone(op)
    nx, nz = ym.omega.size, ym.torus.size
    polar = support = 0.0
    details = []
    sites = [nx + j for j in range(len(ym.atom_masses)) if ym.atom_masses[j] > 0]
    for s in sites:
        rho = ym.rho[s]
        conc = np.nonzero(rho > rho_atom_factor / nz)[0]
        for z in conc:
            v = ym.inf_weights[s, z] @ ym.inf_dirs[s, z]
            if np.linalg.norm(v) <= 1e-12:
                continue
            r = wave_cone_test(op, v)
            polar = max(polar, r.distance)
            details.append({"site": int(s), "xi_cell": int(z), "polar": (v / np.linalg.norm(v)).tolist(),
                            "distance": r.distance, "inside": r.inside})
        charged = rho > 0
        dirs = ym.inf_dirs[s][charged]
        wts = ym.inf_weights[s][charged]
        off = np.linalg.norm(dirs - (dirs @ basis.T) @ basis, axis=-1) if len(basis) else np.linalg.norm(dirs, axis=-1)
        outside = np.sum(rho[charged][:, None] * wts * (off > 1e-6))
        support = max(support, float(outside))
    passed = polar < tol and support < tol
    return StructureReport(bool(passed), float(polar), float(support), len(sites), details)
