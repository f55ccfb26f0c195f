"""Grid measures on the macro domain and the torus.

Everything here is an immutable value.  Densities are stored per cell as
mass per unit volume, flattened in row-major order.  Singular parts are
finite atom lists and are kept separate from densities by construction;
nothing is ever inferred by thresholding a density.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

__all__ = [
    "GridDomain",
    "interval",
    "box",
    "torus",
    "ScalarMeasure",
    "VectorMeasure",
    "ProbabilityField",
    "AffineMap",
    "lebesgue_decompose",
    "push_forward",
    "disintegrate",
    "measure_to_json",
    "measure_from_json",
]

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class GridDomain:
    """Uniform box grid.  ``kind`` is ``"omega"`` (a box in R^d) or
    ``"torus"`` (axes periodic on [0, 1))."""

    kind: str
    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        if self.kind not in ("omega", "torus"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        sh = tuple(int(v) for v in self.shape)
        if not (len(lo) == len(hi) == len(sh)) or len(sh) == 0:
            raise ValueError("lower, upper and shape must have the same length d >= 1")
        if any(n < 2 for n in sh):
            raise ValueError("resolution must be >= 2 per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("empty axis interval")
        if self.kind == "torus" and (any(a != 0.0 for a in lo) or any(b != 1.0 for b in hi)):
            raise ValueError("torus axes live on [0, 1)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", sh)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    def edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.shape[axis] + 1)

    def axis_centers(self, axis: int) -> np.ndarray:
        e = self.edges(axis)
        return 0.5 * (e[1:] + e[:-1])

    def centers(self) -> np.ndarray:
        """Cell centers, shape (size, d), row-major."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def axis_index(self, t, axis: int) -> np.ndarray:
        """Cell index along one axis.  A point on a cell boundary belongs to
        the lower-index cell; torus coordinates are reduced mod 1 first."""
        t = np.asarray(t, dtype=float)
        n = self.shape[axis]
        if self.kind == "torus":
            t = np.mod(t, 1.0)
        s = (t - self.lower[axis]) / self.widths[axis]
        idx = np.ceil(s).astype(np.int64) - 1
        return np.clip(idx, 0, n - 1)

    def cell_index(self, points) -> np.ndarray:
        """Flat cell index of each point, points of shape (..., d)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1 and self.dim == 1:
            p = p[:, None]
        flat = np.zeros(p.shape[:-1], dtype=np.int64)
        for a in range(self.dim):
            flat = flat * self.shape[a] + self.axis_index(p[..., a], a)
        return flat

    def contains(self, points, closed: bool = True) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.array(self.lower), np.array(self.upper)
        eps = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        if closed:
            return np.all((p >= lo - eps) & (p <= hi + eps), axis=-1)
        return np.all((p > lo) & (p < hi), axis=-1)

    def to_json(self) -> dict:
        return {"kind": self.kind, "lower": list(self.lower), "upper": list(self.upper), "shape": list(self.shape)}

    @staticmethod
    def from_json(d: dict) -> "GridDomain":
        return GridDomain(d["kind"], tuple(d["lower"]), tuple(d["upper"]), tuple(d["shape"]))


def interval(a: float, b: float, n: int) -> GridDomain:
    return GridDomain("omega", (a,), (b,), (n,))


def box(lower, upper, shape) -> GridDomain:
    return GridDomain("omega", tuple(lower), tuple(upper), tuple(shape))


def torus(d: int, n) -> GridDomain:
    shape = (n,) * d if np.isscalar(n) else tuple(n)
    return GridDomain("torus", (0.0,) * d, (1.0,) * d, shape)


def _points(arr, d: int) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.size == 0:
        return np.zeros((0, d))
    return a.reshape(-1, d)


@dataclass(frozen=True)
class ScalarMeasure:
    """Nonnegative measure: cell density plus atoms."""

    domain: GridDomain
    density: np.ndarray
    atom_locs: np.ndarray = field(default=None)
    atom_masses: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.domain.dim
        dens = np.asarray(self.density, dtype=float).ravel()
        if dens.size != self.domain.size:
            raise ValueError("density size does not match the grid")
        locs = _points(self.atom_locs if self.atom_locs is not None else [], d)
        mass = np.asarray(self.atom_masses if self.atom_masses is not None else [], dtype=float).ravel()
        if len(locs) != len(mass):
            raise ValueError("atom locations and masses differ in length")
        if np.any(dens < 0) or np.any(mass < 0):
            raise ValueError("scalar measures are nonnegative")
        if len(locs) and not np.all(self.domain.contains(locs)):
            raise ValueError("atoms must lie in the closure of the domain")
        for name, v in (("density", dens), ("atom_locs", locs), ("atom_masses", mass)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n_atoms(self) -> int:
        return len(self.atom_masses)

    def cell_masses(self) -> np.ndarray:
        return self.density * self.domain.cell_volume

    def total_mass(self) -> float:
        return float(self.cell_masses().sum() + self.atom_masses.sum())

    def integrate(self, phi) -> float:
        """∫ φ dm with midpoint rule on the density part."""
        c = self.domain.centers()
        val = float(np.dot(self.cell_masses(), np.asarray(phi(c), dtype=float)))
        if self.n_atoms:
            val += float(np.dot(self.atom_masses, np.asarray(phi(self.atom_locs), dtype=float)))
        return val

    def rasterize(self) -> np.ndarray:
        """Cell masses with atoms dropped into their (lower-index) cells."""
        m = self.cell_masses().copy()
        if self.n_atoms:
            np.add.at(m, self.domain.cell_index(self.atom_locs), self.atom_masses)
        return m


@dataclass(frozen=True)
class VectorMeasure:
    """E-valued measure μ = μ^ac L^d + Σ m_i e_i δ_{x_i} with |e_i| = 1."""

    domain: GridDomain
    density: np.ndarray
    atom_locs: np.ndarray = field(default=None)
    atom_dirs: np.ndarray = field(default=None)
    atom_masses: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.domain.dim
        dens = np.asarray(self.density, dtype=float)
        if dens.ndim == 1:
            dens = dens[:, None]
        dens = dens.reshape(self.domain.size, -1)
        n = dens.shape[1]
        locs = _points(self.atom_locs if self.atom_locs is not None else [], d)
        dirs = _points(self.atom_dirs if self.atom_dirs is not None else [], n)
        mass = np.asarray(self.atom_masses if self.atom_masses is not None else [], dtype=float).ravel()
        if not (len(locs) == len(dirs) == len(mass)):
            raise ValueError("atom arrays differ in length")
        if np.any(mass < 0):
            raise ValueError("atom masses are nonnegative")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any((np.abs(norms - 1.0) > UNIT_TOL) & (norms > 0)):
            raise ValueError("singular directions must be unit vectors")
        if len(locs) and not np.all(self.domain.contains(locs)):
            raise ValueError("atoms must lie in the closure of the domain")
        for name, v in (("density", dens), ("atom_locs", locs), ("atom_dirs", dirs), ("atom_masses", mass)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def value_dim(self) -> int:
        return self.density.shape[1]

    @property
    def n_atoms(self) -> int:
        return len(self.atom_masses)

    def total_variation(self) -> float:
        ac = np.linalg.norm(self.density, axis=1).sum() * self.domain.cell_volume
        return float(ac + self.atom_masses.sum())

    def variation(self) -> ScalarMeasure:
        return ScalarMeasure(self.domain, np.linalg.norm(self.density, axis=1), self.atom_locs, self.atom_masses)

    def integrate(self, phi) -> np.ndarray:
        """∫ φ dμ for scalar φ, a vector in E."""
        c = self.domain.centers()
        w = np.asarray(phi(c), dtype=float) * self.domain.cell_volume
        val = w @ self.density
        if self.n_atoms:
            val = val + (np.asarray(phi(self.atom_locs), dtype=float) * self.atom_masses) @ self.atom_dirs
        return val


@dataclass(frozen=True)
class ProbabilityField:
    """x ↦ p_x for x ranging over base cells followed by extra base atoms.

    ``undefined`` marks sites where the parent measure had no mass; those
    rows hold the uniform distribution by convention."""

    base: GridDomain
    fiber: GridDomain
    table: np.ndarray
    undefined: np.ndarray = field(default=None)
    atom_locs: np.ndarray = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        locs = _points(self.atom_locs if self.atom_locs is not None else [], self.base.dim)
        if t.shape != (self.base.size + len(locs), self.fiber.size):
            raise ValueError("table shape must be (base cells + atoms, fiber cells)")
        if np.any(t < -1e-15) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each fiber distribution must sum to 1")
        und = np.zeros(len(t), bool) if self.undefined is None else np.asarray(self.undefined, bool)
        for name, v in (("table", t), ("undefined", und), ("atom_locs", locs)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class AffineMap:
    """``blowup``: x ↦ (x − x0)/r.  ``translate``: ξ ↦ ξ − ξ0 mod 1."""

    kind: str
    x0: tuple = (0.0,)
    r: float = 1.0

    def __post_init__(self):
        if self.kind not in ("blowup", "translate", "identity"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        if self.kind == "blowup" and not self.r > 0:
            raise ValueError("blow-up radius must be positive")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        x0 = np.array(self.x0)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "blowup":
            return (x - x0) / self.r
        return np.mod(x - x0, 1.0)


def lebesgue_decompose(m: VectorMeasure):
    """Split into (ac, sing, polar).  ``polar`` is a dict with the unit
    directions of the density (``ac_dirs``, zero where the density
    vanishes) and of the atoms (``atom_dirs``)."""
    bad = (m.atom_masses == 0) & (np.linalg.norm(m.atom_dirs, axis=1) > 0)
    if np.any(bad):
        raise ValueError("malformed singular entry: zero mass with a nonzero direction")
    dom = m.domain
    n = m.value_dim
    ac = VectorMeasure(dom, m.density)
    sing = VectorMeasure(dom, np.zeros((dom.size, n)), m.atom_locs, m.atom_dirs, m.atom_masses)
    norms = np.linalg.norm(m.density, axis=1)
    ac_dirs = np.zeros_like(m.density)
    pos = norms > 0
    ac_dirs[pos] = m.density[pos] / norms[pos, None]
    return ac, sing, {"ac_dirs": ac_dirs, "ac_defined": pos, "atom_dirs": m.atom_dirs.copy()}


def _overlap_matrix(src: GridDomain, dst: GridDomain, axis: int, amap: AffineMap) -> np.ndarray:
    """O[j, i] = fraction of source cell i landing in target cell j."""
    e = src.edges(axis)
    if amap.kind == "translate":
        n = src.shape[axis]
        if dst.shape[axis] != n:
            raise ValueError("torus translation keeps the resolution")
        s = amap.x0[axis] * n
        k = math.floor(s)
        f = s - k
        i = np.arange(n)
        o = np.zeros((n, n))
        o[(i - k) % n, i] += 1.0 - f
        o[(i - k - 1) % n, i] += f
        return o
    if amap.kind == "identity":
        a, b = e[:-1], e[1:]
    else:
        a = (e[:-1] - amap.x0[axis]) / amap.r
        b = (e[1:] - amap.x0[axis]) / amap.r
    f = dst.edges(axis)
    lo = np.maximum(a[None, :], f[:-1, None])
    hi = np.minimum(b[None, :], f[1:, None])
    return np.clip(hi - lo, 0.0, None) / (b - a)[None, :]


def _apply_separable(mats, masses: np.ndarray, src_shape) -> np.ndarray:
    t = masses.reshape(src_shape)
    for ax, o in enumerate(mats):
        t = np.moveaxis(np.tensordot(o, np.moveaxis(t, ax, 0), axes=(1, 0)), 0, ax)
    return t.ravel()


def push_forward(m, amap: AffineMap, image: GridDomain):
    """Image measure under an affine map, rasterized on ``image`` by exact
    cell overlaps (density assumed uniform inside each source cell).  Mass
    landing outside ``image`` is dropped; atoms move exactly."""
    src = m.domain
    if image.dim != src.dim:
        raise ValueError("image grid has the wrong dimension")
    mats = [_overlap_matrix(src, image, a, amap) for a in range(src.dim)]
    cv = image.cell_volume
    if isinstance(m, VectorMeasure):
        cols = [_apply_separable(mats, m.density[:, c] * src.cell_volume, src.shape) / cv for c in range(m.value_dim)]
        dens = np.stack(cols, axis=1)
    else:
        dens = _apply_separable(mats, m.cell_masses(), src.shape) / cv
    locs = amap(m.atom_locs) if m.n_atoms else m.atom_locs
    keep = image.contains(locs) if m.n_atoms else np.zeros(0, bool)
    if isinstance(m, VectorMeasure):
        return VectorMeasure(image, dens, locs[keep], m.atom_dirs[keep], m.atom_masses[keep])
    return ScalarMeasure(image, dens, locs[keep], m.atom_masses[keep])


def disintegrate(joint: ScalarMeasure, base: GridDomain, fiber: GridDomain):
    """Disintegrate a measure on base × fiber (joint grid axes are the base
    axes followed by the fiber axes).  Returns (marginal, fibers)."""
    jd = joint.domain
    if jd.shape != base.shape + fiber.shape:
        raise ValueError("joint grid must be the product of base and fiber grids")
    cm = joint.cell_masses().reshape(base.size, fiber.size)
    marg_mass = cm.sum(axis=1)
    table = np.empty_like(cm)
    pos = marg_mass > 0
    table[pos] = cm[pos] / marg_mass[pos, None]
    table[~pos] = 1.0 / fiber.size
    undefined = ~pos
    # joint atoms: group by base location
    db = base.dim
    locs = joint.atom_locs
    uniq = np.zeros((0, db))
    atom_rows = np.zeros((0, fiber.size))
    a_mass = np.zeros(0)
    if joint.n_atoms:
        uniq, inv = np.unique(np.round(locs[:, :db], 15), axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        fidx = fiber.cell_index(locs[:, db:])
        atom_rows = np.zeros((len(uniq), fiber.size))
        np.add.at(atom_rows, (inv, fidx), joint.atom_masses)
        a_mass = atom_rows.sum(axis=1)
        und_a = a_mass <= 0
        atom_rows[~und_a] /= a_mass[~und_a, None]
        atom_rows[und_a] = 1.0 / fiber.size
        undefined = np.concatenate([undefined, und_a])
        table = np.concatenate([table, atom_rows])
    marginal = ScalarMeasure(base, marg_mass / base.cell_volume, uniq, a_mass)
    return marginal, ProbabilityField(base, fiber, table, undefined, uniq)


def _atoms_json(m) -> list:
    out = []
    for i in range(m.n_atoms):
        a = {"location": [float(v) for v in m.atom_locs[i]], "mass": float(m.atom_masses[i])}
        if isinstance(m, VectorMeasure):
            a["direction"] = [float(v) for v in m.atom_dirs[i]]
        out.append(a)
    return out


def measure_to_json(m) -> dict:
    """{kind, domain, value_dim, density (flat row-major), atoms}."""
    vec = isinstance(m, VectorMeasure)
    return {
        "kind": "vector" if vec else "scalar",
        "domain": m.domain.to_json(),
        "value_dim": m.value_dim if vec else 1,
        "density": [float(v) for v in np.asarray(m.density).ravel()],
        "atoms": _atoms_json(m),
    }


def measure_from_json(d: dict):
    dom = GridDomain.from_json(d["domain"])
    atoms = d.get("atoms", [])
    locs = [a["location"] for a in atoms]
    mass = [a["mass"] for a in atoms]
    if d["kind"] == "vector":
        n = int(d["value_dim"])
        dens = np.asarray(d["density"], dtype=float).reshape(dom.size, n)
        dirs = [a["direction"] for a in atoms]
        return VectorMeasure(dom, dens, locs, np.asarray(dirs, float).reshape(-1, n), mass)
    return ScalarMeasure(dom, d["density"], locs, mass)
