"""Shared fixtures: seeded analytic two-scale Young measures."""
import math

import numpy as np
import pytest

from twoscale.measures import interval, box, torus
from twoscale.young import TwoScaleYoungMeasure


def analytic_ym(seed: int, d: int = None, N: int = None, K: int = 2, n: int = None) -> TwoScaleYoungMeasure:
    """A ym whose fibers are trigonometric in (x, ξ) with random
    coefficients, an absolutely continuous λ, one or two atoms and
    smooth ρ_x and ν∞ families."""
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(1, 3))
    N = N or int(rng.integers(1, 3))
    n = n or (32 if d == 1 else 8)
    om = interval(0.0, 1.0, n) if d == 1 else box((0.0, 0.0), (1.0, 1.0), (n, n))
    tz = torus(d, 16 if d == 1 else 8)
    x = om.centers()
    xi = tz.centers()
    nx, nz = om.size, tz.size
    c = rng.normal(size=(K, N, 3))
    phase = (2 * math.pi * x.sum(axis=1))[:, None, None, None]
    psi = (2 * math.pi * xi.sum(axis=1))[None, :, None, None]
    pts = (c[None, None, :, :, 0] + c[None, None, :, :, 1] * np.sin(phase)
           + c[None, None, :, :, 2] * np.cos(psi + phase))
    w = 1.0 + 0.5 * np.sin(phase[..., 0] + (np.arange(K) + 1) * psi[..., 0])
    w = w / w.sum(axis=2, keepdims=True)
    lam = 0.5 + 0.4 * np.cos(2 * math.pi * x[:, 0]) * rng.uniform()
    n_atoms = int(rng.integers(1, 3))
    locs = rng.uniform(0.1, 0.9, size=(n_atoms, d))
    am = rng.uniform(0.2, 1.0, size=n_atoms)
    S = nx + n_atoms
    shift = rng.uniform(size=S)[:, None]
    rho = 1.0 + 0.8 * np.cos(2 * math.pi * (xi[None, :, 0] - shift))
    rho = rho / rho.sum(axis=1, keepdims=True)
    th = rng.uniform(0, 2 * math.pi, size=(S, 1, K))
    if N == 1:
        dirs = np.sign(np.cos(th + 2 * math.pi * xi[None, :, 0, None]))[..., None]
        dirs[dirs == 0] = 1.0
    else:
        ang = th + 2 * math.pi * xi[None, :, 0, None]
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    iw = np.full((S, nz, K), 1.0 / K)
    return TwoScaleYoungMeasure(om, tz, pts, w, lam, locs, am, rho, dirs, iw)


@pytest.fixture
def make_ym():
    return analytic_ym


_CRITERIA = {}


def record_criterion(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    _CRITERIA[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
