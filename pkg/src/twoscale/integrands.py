"""Linear-growth integrands f(x, ξ, z), the compactifying transforms and
recession functions.

Integrands are vectorized: ``f(x, xi, z)`` takes arrays of shapes
(..., d), (..., d), (..., N) that broadcast against each other and returns
an array of shape (...).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional
import itertools

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "Integrand",
    "NotInE2",
    "get_integrand",
    "registry_names",
    "REGISTRY_SAMPLES",
    "FULL_REGISTRY",
    "transform",
    "transform_T",
    "transform_S",
    "recession",
    "T_GRID",
    "TAU_REC",
    "SeparatingTriple",
    "separating_family",
    "coefficient",
]

T_GRID = 10.0 ** np.arange(1, 7)
TAU_REC = 1e-6
TWO_PI = 2.0 * np.pi


class NotInE2(ValueError):
    """Raised when the recession function is needed but does not exist."""


def _norm(z):
    return np.linalg.norm(z, axis=-1)


@dataclass(frozen=True)
class Integrand:
    """f(x, ξ, z) together with what is known about it analytically.

    ``rec`` is the strong recession function evaluated at arbitrary z (it is
    positively 1-homogeneous); ``None`` means no analytic formula is
    registered.  ``superlinear`` marks integrands without linear growth,
    whose recession is +inf."""

    name: str
    fn: Callable
    growth: float
    rec: Optional[Callable] = None
    grad_z: Optional[Callable] = None
    convex: bool = False
    one_homogeneous: bool = False
    superlinear: bool = False
    x_dependent: bool = True
    xi_dependent: bool = True
    tensor: Optional[tuple] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, x, xi, z):
        return self.fn(np.asarray(x, float), np.asarray(xi, float), np.asarray(z, float))

    @property
    def in_E2(self) -> bool:
        return not self.superlinear

    def f_inf(self, x, xi, z):
        """Strong recession f∞(x, ξ, z).  Uses the analytic formula when
        registered, otherwise the numerical strong limit."""
        if self.superlinear:
            raise NotInE2(f"{self.name} has superlinear growth; f∞ = +inf")
        x, xi, z = (np.asarray(v, float) for v in (x, xi, z))
        if self.rec is not None:
            return self.rec(x, xi, z)
        return _numeric_strong(self, x, xi, z)

    def gradient(self, x, xi, z, h: float = 1e-5):
        """∂_z f, analytic when registered, else central differences."""
        z = np.asarray(z, float)
        if self.grad_z is not None:
            return self.grad_z(np.asarray(x, float), np.asarray(xi, float), z)
        g = np.empty(np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1], z.shape[:-1]) + z.shape[-1:])
        for j in range(z.shape[-1]):
            e = np.zeros(z.shape[-1])
            e[j] = h
            g[..., j] = (self(x, xi, z + e) - self(x, xi, z - e)) / (2 * h)
        return g

    def with_name(self, name: str) -> "Integrand":
        return replace(self, name=name)


# ----------------------------------------------------------------------------
# factor registries for tensor integrands φ(x) g(ξ) h(z)

def _bump(x):
    return np.prod(np.clip(1.0 - x**2, 0.0, None) ** 2, axis=-1)


PHI = {
    "one": lambda x: np.ones(x.shape[:-1]),
    "x1": lambda x: x[..., 0],
    "cosx": lambda x: np.cos(np.pi * x[..., 0]),
    "expx": lambda x: np.exp(x[..., 0]),
    "bump": _bump,
}

G = {
    "one": lambda xi: np.ones(xi.shape[:-1]),
    "cos1": lambda xi: 1.0 + np.cos(TWO_PI * xi[..., 0]),
    "sin1": lambda xi: 1.0 + np.sin(TWO_PI * xi[..., 0]),
    "cos2": lambda xi: 1.0 + np.cos(2 * TWO_PI * xi[..., 0]),
    "halfcos": lambda xi: 1.0 + 0.5 * np.cos(TWO_PI * xi[..., 0]),
    "diag": lambda xi: 1.0 + np.sin(TWO_PI * xi.sum(axis=-1)),
    "a": lambda xi: 2.0 + np.sin(TWO_PI * xi[..., 0]),
}


def _e1(z):
    return z[..., 0]


def _hfactor(name):
    """(h, h∞, ∂h, convex, 1-homogeneous, superlinear, growth)."""
    if name == "one":
        return (lambda z: np.ones(z.shape[:-1]), lambda z: np.zeros(z.shape[:-1]),
                lambda z: np.zeros_like(z), True, False, False, 1.0)
    if name == "abs":
        def grad(z):
            n = _norm(z)[..., None]
            return np.where(n > 0, z / np.where(n > 0, n, 1.0), 0.0)
        return (_norm, _norm, grad, True, True, False, 1.0)
    if name == "sqrt1pz2":
        return (lambda z: np.sqrt(1.0 + np.sum(z**2, axis=-1)), _norm,
                lambda z: z / np.sqrt(1.0 + np.sum(z**2, axis=-1))[..., None], True, False, False, 1.0)
    if name in ("pos", "neg"):
        s = 1.0 if name == "pos" else -1.0

        def h(z):
            return _norm(z) + s * _e1(z)

        def grad(z):
            n = _norm(z)[..., None]
            g = np.where(n > 0, z / np.where(n > 0, n, 1.0), 0.0)
            g[..., 0] += s
            return g
        return (h, h, grad, True, True, False, 2.0)
    if name == "shift":
        def h(z):
            w = z.copy()
            w[..., 0] -= 1.0
            return np.sqrt(1.0 + np.sum(w**2, axis=-1))

        def grad(z):
            w = z.copy()
            w[..., 0] -= 1.0
            return w / np.sqrt(1.0 + np.sum(w**2, axis=-1))[..., None]
        return (h, _norm, grad, True, False, False, 2.0)
    if name == "z1":
        def grad(z):
            g = np.zeros_like(z)
            g[..., 0] = 1.0
            return g
        return (_e1, _e1, grad, True, True, False, 1.0)
    if name == "sinpz":
        return (lambda z: np.sin(z[..., 0]) + z[..., 0], _e1, None, False, False, False, 2.0)
    if name == "sq":
        return (lambda z: np.sum(z**2, axis=-1), None, lambda z: 2 * z, True, False, True, np.inf)
    raise KeyError(f"unknown z-factor {name!r}")


H_NAMES = ("one", "abs", "sqrt1pz2", "pos", "neg", "shift", "z1", "sinpz", "sq")


def coefficient(spec: str) -> Callable:
    """Named periodic coefficient a(ξ) for ``aniso_quad:<a>``."""
    if spec in ("", "2+sin"):
        return lambda xi: 2.0 + np.sin(TWO_PI * xi[..., 0])
    if spec == "2+cos":
        return lambda xi: 2.0 + np.cos(TWO_PI * xi[..., 0])
    if spec.startswith("const="):
        c = float(spec.split("=", 1)[1])
        return lambda xi: np.full(xi.shape[:-1], c)
    if spec in G:
        return G[spec]
    raise KeyError(f"unknown coefficient {spec!r}")


def _tensor(name, phi_name, g_name, h_name) -> Integrand:
    if phi_name not in PHI:
        raise KeyError(f"unknown x-factor {phi_name!r}")
    if g_name not in G:
        raise KeyError(f"unknown ξ-factor {g_name!r}")
    phi, g = PHI[phi_name], G[g_name]
    h, hinf, dh, convex, homog, superlin, growth = _hfactor(h_name)

    def fn(x, xi, z):
        return phi(x) * g(xi) * h(z)

    rec = None if hinf is None else (lambda x, xi, z: phi(x) * g(xi) * hinf(z))
    grad = None if dh is None else (lambda x, xi, z: (phi(x) * g(xi))[..., None] * dh(z))
    nonneg_weight = phi_name in ("one", "expx", "bump")
    gmax = 3.0 if g_name == "a" else 2.0 if g_name != "one" else 1.0
    pmax = {"one": 1.0, "x1": 1.0, "cosx": 1.0, "expx": np.e, "bump": 1.0}[phi_name]
    return Integrand(
        name=name, fn=fn, growth=growth * gmax * pmax, rec=rec, grad_z=grad,
        convex=convex and nonneg_weight, one_homogeneous=homog, superlinear=superlin,
        x_dependent=phi_name != "one", xi_dependent=g_name != "one",
        tensor=(phi_name, g_name, h_name),
    )


def get_integrand(name: str) -> Integrand:
    """Resolve a registry name.

    ``abs``, ``one``, ``sqrt1pz2`` (and the other z-factor names) are
    x- and ξ-independent; ``tensor:<phi>:<g>:<h>`` is φ(x)g(ξ)h(z);
    ``aniso_quad[:<a>]`` is a(ξ)|z|², quadratic and hence outside E²."""
    if name.startswith("tensor:"):
        parts = name.split(":")
        if len(parts) != 4:
            raise KeyError(f"tensor integrand needs three factors: {name!r}")
        return _tensor(name, *parts[1:])
    if name.startswith("aniso_quad"):
        spec = name.split(":", 1)[1] if ":" in name else ""
        a = coefficient(spec)
        return Integrand(
            name=name,
            fn=lambda x, xi, z: a(xi) * np.sum(z**2, axis=-1),
            growth=np.inf,
            grad_z=lambda x, xi, z: 2.0 * a(xi)[..., None] * z,
            convex=True, superlinear=True, x_dependent=False,
            meta={"coefficient": spec or "2+sin"},
        )
    if name in H_NAMES:
        return _tensor(name, "one", "one", name)
    raise KeyError(f"unknown integrand {name!r}")


def registry_names() -> list:
    return ["abs", "one", "sqrt1pz2", "tensor:<phi>:<g>:<h>", "aniso_quad:<a>"]


# The concrete registry instances exercised by the batch checks.
REGISTRY_SAMPLES = (
    "abs",
    "one",
    "sqrt1pz2",
    "tensor:one:halfcos:abs",
    "tensor:one:a:sqrt1pz2",
    "tensor:one:sin1:pos",
    "tensor:expx:cos1:shift",
    "aniso_quad:2+sin",
)

# Every z-factor appears at least once, plus x- and 2D-ξ-dependent tensors.
FULL_REGISTRY = REGISTRY_SAMPLES + (
    "pos", "neg", "shift", "z1", "sinpz", "sq",
    "tensor:bump:cos2:neg",
    "tensor:one:diag:z1",
)


# ----------------------------------------------------------------------------
# transforms

def transform_T(f: Integrand) -> Callable:
    """(Tf)(x, ξ, ẑ) = (1 − |ẑ|) f(x, ξ, ẑ/(1 − |ẑ|)), and f∞ on |ẑ| = 1."""

    def Tf(x, xi, zh):
        x, xi, zh = (np.asarray(v, float) for v in (x, xi, zh))
        r = _norm(zh)
        if np.any(r > 1.0 + 1e-12):
            raise ValueError("T f is defined on the closed unit ball")
        bnd = r >= 1.0 - 1e-15
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1], zh.shape[:-1])
        out = np.zeros(shape)
        xb, xib, zb = (np.broadcast_to(v, shape + v.shape[-1:]) for v in (x, xi, zh))
        bndb = np.broadcast_to(bnd, shape)
        inner = ~bndb
        if np.any(inner):
            s = (1.0 - np.broadcast_to(r, shape)[inner])
            out[inner] = s * f(xb[inner], xib[inner], zb[inner] / s[:, None])
        if np.any(bndb):
            if f.superlinear:
                i = np.argwhere(bndb)[0]
                raise NotInE2(f"{f.name} is not in E2: no recession at (x, ξ, ẑ) = "
                              f"({xb[tuple(i)]}, {xib[tuple(i)]}, {zb[tuple(i)]})")
            try:
                out[bndb] = f.f_inf(xb[bndb], xib[bndb], zb[bndb])
            except NotInE2 as exc:
                i = np.argwhere(bndb)[0]
                raise NotInE2(f"{f.name} is not in E2 at (x, ξ, ẑ) = "
                              f"({xb[tuple(i)]}, {xib[tuple(i)]}, {zb[tuple(i)]}): {exc}") from None
        return out

    return Tf


def transform_S(g: Callable, name: str = "S(g)") -> Integrand:
    """(Sg)(x, ξ, z) = (1 + |z|) g(x, ξ, z/(1 + |z|)) with recession g on the sphere."""

    def fn(x, xi, z):
        n = _norm(z)
        return (1.0 + n) * g(x, xi, z / (1.0 + n)[..., None])

    def rec(x, xi, z):
        n = _norm(z)
        safe = np.where(n > 0, n, 1.0)[..., None]
        return np.where(n > 0, n * g(x, xi, z / safe), 0.0)

    return Integrand(name=name, fn=fn, growth=np.inf, rec=rec)


def transform(f, direction: str):
    """``T`` maps an integrand to a function on the closed ball, ``S`` back."""
    if direction == "T":
        return transform_T(f)
    if direction == "S":
        return transform_S(f)
    raise ValueError("direction is T or S")


# ----------------------------------------------------------------------------
# recession

def _stencil(d: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=d)))


def _recession_samples(f: Integrand, x, xi, zdir, hx, hxi, tgrid):
    """f(x', ξ', t z)/t over the last two t values and the perturbation
    stencil.  The stencil radius is one grid cell times (t_1/t)²."""
    x = np.atleast_1d(np.asarray(x, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    zdir = np.atleast_1d(np.asarray(zdir, float))
    sx, sxi = _stencil(x.shape[-1]), _stencil(xi.shape[-1])
    vals = []
    for t in tgrid[-2:]:
        rad = (tgrid[0] / t) ** 2
        xs = x[..., None, None, :] + rad * hx * sx[:, None, :]
        xis = xi[..., None, None, :] + rad * hxi * sxi[None, :, :]
        v = f(xs, xis, t * zdir[..., None, None, :]) / t
        vals.append(v.reshape(v.shape[:-2] + (-1,)))
    return np.concatenate(vals, axis=-1)


def _numeric_strong(f: Integrand, x, xi, z, hx=1e-2, hxi=1e-2):
    n = _norm(z)
    safe = np.where(n > 0, n, 1.0)[..., None]
    u = z / safe
    s = _recession_samples(f, x, xi, u, hx, hxi, T_GRID)
    hi, lo = s.max(axis=-1), s.min(axis=-1)
    mid = 0.5 * (hi + lo)
    if np.any(hi - lo > TAU_REC * np.maximum(1.0, np.abs(mid))):
        raise NotInE2(f"strong recession of {f.name} does not exist at some sampled direction")
    return np.where(n > 0, n * mid, 0.0)


def recession(f: Integrand, mode: str, x, xi, z, hx: float = 1e-2, hxi: float = 1e-2,
              tgrid=T_GRID, tol: float = TAU_REC):
    """Numerical recession of f at (x, ξ) in direction z.

    Returns a float for ``upper``/``lower``; for ``strong`` returns the value
    or ``None`` when upper and lower differ by more than ``tol`` (relative).
    Every mode is positively 1-homogeneous in z."""
    if mode not in ("strong", "upper", "lower"):
        raise ValueError("mode is strong, upper or lower")
    z = np.atleast_1d(np.asarray(z, float))
    n = float(np.linalg.norm(z))
    if n == 0:
        return 0.0
    if f.superlinear:
        return np.inf
    s = _recession_samples(f, x, xi, z / n, hx, hxi, np.asarray(tgrid, float))
    hi, lo = float(s.max()), float(s.min())
    if mode == "upper":
        return n * hi
    if mode == "lower":
        return n * lo
    mid = 0.5 * (hi + lo)
    if hi - lo > tol * max(1.0, abs(mid)):
        return None
    return n * mid


# ----------------------------------------------------------------------------
# separating family

@dataclass(frozen=True)
class SeparatingTriple:
    phi: Callable
    phi_integral: float
    g: Callable
    h: Callable
    h_inf: Callable
    label: str

    def integrand(self) -> Integrand:
        phi, g, h, hinf = self.phi, self.g, self.h, self.h_inf
        return Integrand(
            name=self.label,
            fn=lambda x, xi, z: phi(x) * g(xi) * h(z),
            growth=np.inf,
            rec=lambda x, xi, z: phi(x) * g(xi) * hinf(z),
        )


def _bspline_bumps(lower, upper, count=4):
    """Tensor cubic B-spline bumps on a box, with exact integrals."""
    out = []
    d = len(lower)
    for j in range(count):
        elems = []
        integral = 1.0
        for a in range(d):
            L = upper[a] - lower[a]
            knots = lower[a] + L * (j + np.arange(5)) / (count + 3)
            b = BSpline.basis_element(knots, extrapolate=False)
            elems.append(b)
            integral *= float(b.integrate(knots[0], knots[-1]))

        def phi(x, elems=elems):
            v = np.ones(x.shape[:-1])
            for a, b in enumerate(elems):
                v = v * np.nan_to_num(b(x[..., a]), nan=0.0)
            return v
        out.append((phi, integral, f"bspline{j}"))
    return out


def _g_modes(d):
    modes = [
        (lambda xi: np.ones(xi.shape[:-1]), "1"),
        (lambda xi: 1.0 + np.cos(TWO_PI * xi[..., 0]), "1+cos"),
        (lambda xi: 1.0 + np.sin(TWO_PI * xi[..., 0]), "1+sin"),
        (lambda xi: 1.0 + np.cos(TWO_PI * xi.sum(axis=-1)), "1+cos(sum)"),
        (lambda xi: 1.0 + np.sin(2 * TWO_PI * xi[..., -1]), "1+sin2"),
    ]
    return modes


def _h_list(N):
    names = ("one", "abs", "pos", "neg", "shift")
    out = []
    for nm in names:
        h, hinf = _hfactor(nm)[:2]
        out.append((h, hinf, nm))
    return out


def separating_family(lower, upper, N: int = 1, size: int = 125) -> list:
    """Fixed finite family of nonnegative tensor test integrands φ⊗g⊗h.

    φ: the constant plus cubic B-spline bumps on the box; g: 1 and
    1+cos / 1+sin torus modes (each with integral 1); h: 1, |z|, |z|±z_1 and
    √(1+|z−e_1|²).  The first ``size`` triples in lexicographic order are
    returned (default: all 5×5×5)."""
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    vol = float(np.prod(np.array(upper) - np.array(lower)))
    phis = [(lambda x: np.ones(x.shape[:-1]), vol, "1")] + _bspline_bumps(lower, upper)
    gs = _g_modes(len(lower))
    hs = _h_list(N)
    fam = []
    for (phi, pint, pl), (g, gl), (h, hinf, hl) in itertools.product(phis, gs, hs):
        fam.append(SeparatingTriple(phi, pint, g, h, hinf, f"{pl}|{gl}|{hl}"))
    return fam[:size]


def phi_g_family(lower, upper):
    """The (φ, ∫φ, g) pairs underlying the separating family (g has integral 1)."""
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    vol = float(np.prod(np.array(upper) - np.array(lower)))
    phis = [(lambda x: np.ones(x.shape[:-1]), vol, "1")] + _bspline_bumps(lower, upper)
    return [(p, pi, g, f"{pl}|{gl}") for (p, pi, pl), (g, gl) in itertools.product(phis, _g_modes(len(lower)))]
