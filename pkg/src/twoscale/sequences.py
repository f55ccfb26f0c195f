"""Oscillating and concentrating sequences u_ε and their ε-schedules.

Step-function sequences (spikes, Fakir carpet) expose their exact pieces
so the estimator can deposit them without resolving sub-cell spikes; smooth
sequences are evaluated pointwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import re
from typing import Callable, Optional

import numpy as np

from .measures import GridDomain, VectorMeasure, interval, box

__all__ = [
    "SequenceSpec",
    "ResolutionError",
    "parse_schedule",
    "make_sequence",
    "SEQUENCE_KINDS",
    "stream_field",
    "blowup_sequence",
]

TWO_PI = 2.0 * np.pi
STEP_KINDS = ("spike", "fakir", "translated_spike", "spike2d", "zero")
SMOOTH_KINDS = ("sine", "divfree2d", "osc1d", "custom")
SEQUENCE_KINDS = STEP_KINDS + SMOOTH_KINDS + ("blowup",)


class ResolutionError(ValueError):
    """The grid cannot resolve the requested member of the sequence."""


_SAFE = {"sqrt": math.sqrt, "pi": math.pi, "exp": math.exp, "log": math.log, "floor": math.floor}


def parse_schedule(text, params: Optional[dict] = None) -> tuple:
    """Parse an ε-schedule.

    Accepted forms: a list of numbers; ``"0.1,0.05,0.01"``;
    ``"<expr>,<var>=<a>..<b>"`` (integer range, inclusive) and
    ``"<expr>,<var>=<v1>|<v2>|..."``.  ``^`` means power; parameters of
    the sequence (``a``, ``b``, ``alpha``) may appear in the expression."""
    if isinstance(text, (list, tuple, np.ndarray)):
        vals = [float(v) for v in text]
    else:
        s = str(text).strip()
        m = re.fullmatch(r"(.+),\s*([A-Za-z_]\w*)\s*=\s*(-?\d+)\s*\.\.\s*(-?\d+)", s)
        m2 = re.fullmatch(r"(.+),\s*([A-Za-z_]\w*)\s*=\s*([-\d.|\s]+)", s)
        if m or (m2 and "|" in m2.group(3)):
            expr, var = (m or m2).group(1), (m or m2).group(2)
            if m:
                lo, hi = int(m.group(3)), int(m.group(4))
                rng = range(lo, hi + 1) if hi >= lo else range(lo, hi - 1, -1)
                values = list(rng)
            else:
                values = [float(v) if "." in v else int(v) for v in m2.group(3).split("|")]
            code = expr.replace("^", "**")
            ns = dict(_SAFE)
            ns.update(params or {})
            vals = []
            for v in values:
                ns[var] = v
                vals.append(float(eval(code, {"__builtins__": {}}, ns)))
        else:
            vals = [float(eval(p.replace("^", "**"), {"__builtins__": {}}, dict(_SAFE, **(params or {}))))
                    for p in s.split(",") if p.strip()]
    vals = [v for v in vals]
    if not vals or any(v <= 0 for v in vals):
        raise ValueError("ε-schedule must be nonempty and positive")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ValueError("ε-schedule must be strictly decreasing")
    return tuple(vals)


def stream_field(xi: np.ndarray, amplitude: float = 1.0) -> np.ndarray:
    """w = ∇⊥ψ with ψ(ξ) = |sin πξ₁|³ sin 2πξ₂ / (2π): a divergence-free,
    mean-zero, C² (not C³) periodic field on the 2-torus."""
    x1, x2 = xi[..., 0], xi[..., 1]
    s = np.sin(np.pi * x1)
    dpsi1 = 3.0 * np.abs(s) * s * np.pi * np.cos(np.pi * x1) * np.sin(TWO_PI * x2) / TWO_PI
    dpsi2 = np.abs(s) ** 3 * np.cos(TWO_PI * x2)
    return amplitude * np.stack([-dpsi2, dpsi1], axis=-1)


@dataclass(frozen=True)
class SequenceSpec:
    """A named sequence u_ε on the grid ``domain`` with ε-schedule.

    Kinds and parameters:
      spike(alpha)             u = ε^{-α} χ_(0, ε^α) on (−1, 1)
      fakir                    u = k Σ_{i=0}^{k/2} (−1)^i χ_[i/k, i/k + 1/k²], ε = 1/k, on (0, 1)
      translated_spike(a, b)   u = ε^{-2} χ_(a+bε, a+bε+ε²) on (0, 1)
      spike2d(alpha, scalar)   u = e₁ ε^{-2α} χ_(0, ε^α)² on (−1, 1)² (scalar: drop e₁)
      zero                     u = 0
      sine(alpha)              u = sin(2π x/ε^α) on (0, 1)
      divfree2d(amplitude, z0) u = z0 + w(x/ε), w a divergence-free stream field
      osc1d(z0, coef)          u = z0 / (a(x/ε) ∫1/a), the minimizing oscillation of a(ξ)|z|²
      custom(sampler)          u = sampler(x, ε)
      blowup(base, x0, r, c)   γ_δ(y) = c r^d u_{δr}(x0 + r y) on Q = (−1/2, 1/2)^d"""

    kind: str
    schedule: tuple
    domain: GridDomain
    params: dict = field(default_factory=dict)
    sampler: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in SEQUENCE_KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        sch = tuple(float(e) for e in self.schedule)
        if any(b >= a for a, b in zip(sch, sch[1:])) or any(e <= 0 for e in sch):
            raise ValueError("ε-schedule must be positive and strictly decreasing")
        object.__setattr__(self, "schedule", sch)
        if self.kind == "custom" and self.sampler is None:
            raise ValueError("custom sequences need a sampler")

    # ------------------------------------------------------------------
    @property
    def N(self) -> int:
        if self.kind == "blowup":
            return self.params["base"].N
        if self.kind == "spike2d":
            return 1 if self.params.get("scalar") else 2
        if self.kind == "divfree2d":
            return 2
        return int(self.params.get("N", 1))

    @property
    def is_step(self) -> bool:
        if self.kind == "blowup":
            return self.params["base"].is_step
        return self.kind in STEP_KINDS

    def _blowup_parts(self):
        base = self.params["base"]
        x0 = np.atleast_1d(np.asarray(self.params["x0"], float))
        r = float(self.params["r"])
        return base, x0, r, float(self.params.get("c", r ** -len(x0))) * r ** len(x0)

    def p(self, name, default=None):
        return self.params.get(name, default)

    def pieces(self, eps: float):
        """Disjoint boxes (lower (P, d), upper (P, d), values (P, N)) on which
        u_ε is constant; u_ε = 0 elsewhere."""
        d, N = self.domain.dim, self.N
        if self.kind == "blowup":
            base, x0, r, scale = self._blowup_parts()
            lo, hi, val = base.pieces(eps * r)
            return (lo - x0) / r, (hi - x0) / r, val * scale
        if self.kind == "zero":
            return np.zeros((0, d)), np.zeros((0, d)), np.zeros((0, N))
        if self.kind == "spike":
            a = float(self.p("alpha", 2.0))
            w = eps**a
            return np.array([[0.0]]), np.array([[w]]), np.array([[1.0 / w]])
        if self.kind == "fakir":
            k = int(round(1.0 / eps))
            if k % 2 or abs(k * eps - 1.0) > 1e-9:
                raise ValueError("the Fakir carpet needs ε = 1/k with k even")
            i = np.arange(k // 2 + 1)
            lo = (i / k)[:, None]
            hi = lo + 1.0 / k**2
            val = (k * (-1.0) ** i)[:, None]
            return lo, hi, val
        if self.kind == "translated_spike":
            a, b = float(self.p("a", 1 / math.sqrt(2))), float(self.p("b", 0.3))
            lo = a + b * eps
            return np.array([[lo]]), np.array([[lo + eps**2]]), np.array([[eps**-2]])
        if self.kind == "spike2d":
            a = float(self.p("alpha", 2.0))
            w = eps**a
            val = [[w**-2]] if self.N == 1 else [[w**-2, 0.0]]
            return np.zeros((1, 2)), np.full((1, 2), w), np.array(val)
        raise ValueError(f"{self.kind} is not a step sequence")

    def __call__(self, x, eps: float) -> np.ndarray:
        """Pointwise values u_ε(x), shape (..., N)."""
        x = np.asarray(x, float)
        if x.ndim == 1 and self.domain.dim == 1:
            x = x[:, None]
        shape = x.shape[:-1]
        if self.is_step:
            lo, hi, val = self.pieces(eps)
            out = np.zeros(shape + (self.N,))
            for l, h, v in zip(lo, hi, val):
                inside = np.all((x >= l) & (x < h), axis=-1)
                out[inside] = v
            return out
        if self.kind == "blowup":
            base, x0, r, scale = self._blowup_parts()
            return scale * base(x0 + r * x, eps * r)
        if self.kind == "sine":
            a = float(self.p("alpha", 1.0))
            return np.sin(TWO_PI * x[..., :1] / eps**a)
        if self.kind == "divfree2d":
            z0 = np.asarray(self.p("z0", [0.0, 0.0]), float)
            return z0 + stream_field(np.mod(x / eps, 1.0), float(self.p("amplitude", 1.0)))
        if self.kind == "osc1d":
            from .integrands import coefficient
            from scipy.integrate import quad
            a = coefficient(self.p("coef", "2+sin"))
            harm = 1.0 / quad(lambda t: 1.0 / a(np.array([[t]]))[0], 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)[0]
            z0 = np.asarray(self.p("z0", [1.0]), float)
            xi = np.mod(x / eps, 1.0)
            return z0 * (harm / a(xi))[..., None]
        if self.kind == "custom":
            v = np.asarray(self.sampler(x, eps), float)
            return v.reshape(shape + (self.N,))
        raise AssertionError

    # ------------------------------------------------------------------
    def total_variation(self, eps: float) -> float:
        """Exact |u_ε L^d|(Ω) for step kinds, fine quadrature otherwise."""
        if self.is_step:
            lo, hi, val = self.pieces(eps)
            dlo, dhi = np.array(self.domain.lower), np.array(self.domain.upper)
            vol = np.prod(np.clip(np.minimum(hi, dhi) - np.maximum(lo, dlo), 0, None), axis=1)
            return float(np.sum(vol * np.linalg.norm(val, axis=1)))
        dom = self.domain
        n = [max(8 * s, int(64 * (u - l) / eps)) for s, l, u in zip(dom.shape, dom.lower, dom.upper)]
        n = [min(v, 4096 if dom.dim == 1 else 1024) for v in n]
        fine = GridDomain("omega", dom.lower, dom.upper, n)
        vals = self(fine.centers(), eps)
        return float(np.linalg.norm(vals, axis=-1).sum() * fine.cell_volume)

    def generate(self, eps: float) -> VectorMeasure:
        """u_ε L^d rasterized as cell averages on the grid.  Refuses when a
        constant piece is narrower than one cell."""
        dom = self.domain
        cv = dom.cell_volume
        if self.is_step:
            lo, hi, val = self.pieces(eps)
            h = dom.widths
            if len(lo) and np.any((hi - lo) < h[None, :] * (1 - 1e-12)):
                raise ResolutionError(
                    f"resolution insufficient: a piece of width {float(np.min(hi - lo)):.3e} "
                    f"is narrower than a cell ({float(np.min(h)):.3e})")
            dens = np.zeros((dom.size, self.N))
            for l, u, v in zip(lo, hi, val):
                ov = np.ones(dom.size)
                mats = []
                for a in range(dom.dim):
                    e = dom.edges(a)
                    mats.append(np.clip(np.minimum(u[a], e[1:]) - np.maximum(l[a], e[:-1]), 0, None))
                ov = mats[0]
                for m in mats[1:]:
                    ov = np.multiply.outer(ov, m)
                dens += ov.ravel()[:, None] * v[None, :] / cv
            m = VectorMeasure(dom, dens)
        else:
            s = 8
            sub = GridDomain("omega", dom.lower, dom.upper, tuple(n * s for n in dom.shape))
            vals = self(sub.centers(), eps).reshape(tuple(n * s for n in dom.shape) + (self.N,))
            for a in range(dom.dim):
                sh = list(vals.shape)
                sh[a:a + 1] = [dom.shape[a], s]
                vals = vals.reshape(sh).mean(axis=a + 1)
            m = VectorMeasure(dom, vals.reshape(dom.size, self.N))
        tv = self.total_variation(eps)
        sup = float(np.max(np.linalg.norm(m.density, axis=1), initial=0.0))
        if self.is_step:
            tol = (np.max(np.linalg.norm(self.pieces(eps)[2], axis=1), initial=0.0) * cv * max(1, len(self.pieces(eps)[0])))
        else:
            tol = 0.05 * tv + sup * cv
        if abs(m.total_variation() - tv) > tol + 1e-12:
            raise ResolutionError("rasterized total variation deviates from the analytic value by more than a cell")
        return m

    def with_schedule(self, schedule) -> "SequenceSpec":
        return SequenceSpec(self.kind, tuple(schedule), self.domain, dict(self.params), self.sampler)

    def with_domain(self, domain: GridDomain) -> "SequenceSpec":
        return SequenceSpec(self.kind, self.schedule, domain, dict(self.params), self.sampler)


DEFAULT_DOMAINS = {
    "spike": ((-1.0,), (1.0,)),
    "fakir": ((0.0,), (1.0,)),
    "translated_spike": ((0.0,), (1.0,)),
    "spike2d": ((-1.0, -1.0), (1.0, 1.0)),
    "zero": ((0.0,), (1.0,)),
    "sine": ((0.0,), (1.0,)),
    "divfree2d": ((0.0, 0.0), (1.0, 1.0)),
    "osc1d": ((0.0,), (1.0,)),
    "custom": ((0.0,), (1.0,)),
}


def blowup_sequence(base: SequenceSpec, x0, r: float, c: float = None, resolution: int = 16,
                    eps_list=None) -> SequenceSpec:
    """The blown-up family γ_δ = c T^{(x0,r)}_# (u_ε L^d), δ = ε/r, on Q.
    ``c`` defaults to the regular normalization r^{-d}."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    d = len(x0)
    c = float(r ** -d if c is None else c)
    dom = GridDomain("omega", (-0.5,) * d, (0.5,) * d, (resolution,) * d)
    sch = tuple(e / r for e in (eps_list if eps_list is not None else base.schedule))
    return SequenceSpec("blowup", sch, dom, {"base": base, "x0": x0.tolist(), "r": float(r), "c": c})


def make_sequence(kind: str, schedule, resolution=None, lower=None, upper=None, sampler=None, **params) -> SequenceSpec:
    """Convenience constructor with the default macro domain of each kind."""
    lo, hi = DEFAULT_DOMAINS[kind]
    lo = tuple(lower) if lower is not None else lo
    hi = tuple(upper) if upper is not None else hi
    d = len(lo)
    if resolution is None:
        resolution = 4096 if d == 1 else 32
    shape = (resolution,) * d if np.isscalar(resolution) else tuple(resolution)
    dom = GridDomain("omega", lo, hi, shape)
    sch = parse_schedule(schedule, params) if not isinstance(schedule, tuple) else schedule
    return SequenceSpec(kind, sch, dom, params, sampler)
