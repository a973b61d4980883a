"""Deterministic generators for test immersions.

Closed forms cover circles, product tori, great circles and flat graph
patches.  Abresch-Langer curves (closed, non-circular self-shrinking plane
curves with H = -x^perp / 2) are produced by shooting on the arclength ODE

    x' = T,  T' = k JT,  k = -<x, JT> / 2,

started at a radial maximum (r0, 0) with T = (0, 1).  The curve is symmetric
about each radial extremum, so it closes after q radial periods exactly when
the polar angle swept between consecutive extrema equals pi p / q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .background import SolitonBackground
from .immersion import Immersion, ParamGrid

SQRT2 = math.sqrt(2.0)


class ShootingError(RuntimeError):
    def __init__(self, message: str, best_gap: float = float("nan")):
        super().__init__(message)
        self.best_gap = best_gap


@dataclass(frozen=True)
class ExampleSpec:
    kind: str
    params: dict = field(default_factory=dict)
    sizes: tuple[int, ...] = (256,)
    seed: int = 0


def _grid(n) -> ParamGrid:
    return ParamGrid(tuple(n) if isinstance(n, (tuple, list)) else (int(n),))


def circle(r: float, n: int = 512, center=(0.0, 0.0), noise: float = 0.0, seed: int = 0,
           modes: int = 8) -> Immersion:
    """Circle of radius r in C^1; ``noise`` adds smooth relative radial noise."""
    grid = _grid(n)
    th = grid.axes()[0]
    rad = r * (1.0 + smooth_noise(th, noise, seed, modes))
    pts = np.stack([center[0] + rad * np.cos(th), center[1] + rad * np.sin(th)], axis=-1)
    return Immersion(grid, pts, SolitonBackground.flat(1))


def smooth_noise(theta: np.ndarray, amplitude: float, seed: int, modes: int = 8) -> np.ndarray:
    """Random trigonometric polynomial with sup norm ``amplitude`` (zero if amplitude is 0)."""
    if amplitude == 0.0:
        return np.zeros_like(theta)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=modes) / np.arange(1, modes + 1)
    b = rng.uniform(0.0, 2.0 * math.pi, size=modes)
    k = np.arange(1, modes + 1)
    w = np.sum(a[:, None] * np.cos(k[:, None] * theta[None, :] + b[:, None]), axis=0)
    return amplitude * w / np.max(np.abs(w))


def curve_points(theta: np.ndarray, radius: float, amp: float = 0.0, mode: int = 0,
                 phase: float = 0.0) -> np.ndarray:
    rad = radius * (1.0 + amp * np.cos(mode * theta + phase))
    return np.stack([rad * np.cos(theta), rad * np.sin(theta)], axis=-1)


def product_torus(radii=(SQRT2, SQRT2), n=64, amps=(0.0, 0.0), modes=(0, 0),
                  phases=(0.0, 0.0)) -> Immersion:
    """Product of two (radially perturbed) circles in orthogonal complex lines of C^2.

    Every such product is exactly Lagrangian.
    """
    sizes = (n, n) if np.isscalar(n) else tuple(n)
    grid = ParamGrid(sizes)
    t1, t2 = grid.axes()
    c1 = curve_points(t1, radii[0], amps[0], modes[0], phases[0])
    c2 = curve_points(t2, radii[1], amps[1], modes[1], phases[1])
    return product_of_curves(c1, c2, grid)


def product_of_curves(c1: np.ndarray, c2: np.ndarray, grid: ParamGrid | None = None) -> Immersion:
    grid = grid or ParamGrid((len(c1), len(c2)))
    pts = np.empty(grid.sizes + (4,))
    pts[..., 0:2] = c1[:, None, :]
    pts[..., 2:4] = c2[None, :, :]
    return Immersion(grid, pts, SolitonBackground.flat(2))


def random_lagrangian_torus(seed: int, n=48, rotate: bool = True) -> Immersion:
    """Product of two random smooth star-shaped curves, optionally unitarily rotated."""
    rng = np.random.default_rng(seed)
    sizes = (n, n) if np.isscalar(n) else tuple(n)
    grid = ParamGrid(sizes)
    curves = []
    for k, th in enumerate(grid.axes()):
        r = rng.uniform(0.6, 1.8)
        rad = r * (1.0 + smooth_noise(th, rng.uniform(0.02, 0.12), seed * 7 + k, modes=3))
        curves.append(np.stack([rad * np.cos(th), rad * np.sin(th)], axis=-1))
    F = product_of_curves(curves[0], curves[1], grid)
    if rotate:
        F = rotated(F, unitary_matrix(2, seed))
    return F


def great_circle(n: int = 256, f0: float = 1.0, tilt: float = 0.0) -> Immersion:
    """Equator of the unit sphere, tilted by ``tilt`` about the x-axis."""
    grid = _grid(n)
    th = grid.axes()[0]
    c, s = math.cos(tilt), math.sin(tilt)
    pts = np.stack([np.cos(th), c * np.sin(th), s * np.sin(th)], axis=-1)
    return Immersion(grid, pts, SolitonBackground.sphere(f0))


def sphere_curve(n: int = 256, f0: float = 1.0, amp: float = 0.2, mode: int = 2) -> Immersion:
    """A non-geodesic closed curve on the unit sphere (latitude wobble)."""
    grid = _grid(n)
    th = grid.axes()[0]
    lat = amp * np.cos(mode * th) + 0.1
    pts = np.stack([np.cos(lat) * np.cos(th), np.cos(lat) * np.sin(th), np.sin(lat)], axis=-1)
    return Immersion(grid, pts, SolitonBackground.sphere(f0))


def plane_patch(n: int = 32) -> Immersion:
    """The Lagrangian plane R^2 in C^2 as a periodic graph of the zero function."""
    grid = ParamGrid((n, n))
    coords = grid.coords()
    pts = np.zeros(grid.sizes + (4,))
    pts[..., 0] = coords[..., 0]
    pts[..., 2] = coords[..., 1]
    shifts = np.array([[2 * math.pi, 0, 0, 0], [0, 0, 2 * math.pi, 0]])
    return Immersion(grid, pts, SolitonBackground.flat(2), shifts=shifts)


def line_patch(n: int = 64) -> Immersion:
    """A straight line in C^1 closed up by a period shift."""
    grid = ParamGrid((n,))
    th = grid.axes()[0]
    pts = np.stack([th, np.full_like(th, 0.3)], axis=-1)
    return Immersion(grid, pts, SolitonBackground.flat(1), shifts=np.array([[2 * math.pi, 0.0]]))


def unitary_matrix(m: int, seed: int) -> np.ndarray:
    """Real 2m x 2m matrix of a random unitary map of C^m (interleaved coordinates)."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    M = np.zeros((2 * m, 2 * m))
    for a in range(m):
        for b in range(m):
            u = Q[a, b]
            M[2 * a, 2 * b], M[2 * a, 2 * b + 1] = u.real, -u.imag
            M[2 * a + 1, 2 * b], M[2 * a + 1, 2 * b + 1] = u.imag, u.real
    return M


def rotated(F: Immersion, M: np.ndarray) -> Immersion:
    if F.background.kind != "flat":
        raise ValueError("unitary rotations are defined on the flat background")
    pts = np.einsum("ab,...b->...a", M, F.points)
    return F.with_points(pts)


def normal_frame(F: Immersion, geo=None) -> np.ndarray:
    """Orthonormal frame of the normal bundle, shape (S, c, D).

    Uses J e_a (normal for Lagrangians) where it spans the normal space well,
    falling back to an eigenbasis of the normal projector elsewhere.
    """
    geo = geo or F.extrinsic
    bg = F.background
    codim = bg.ambient_dimension - F.m
    G = geo.ambient_metric
    Je = np.einsum("...ab,...jb->...ja", bg.J_matrix(F.points), geo.frame_vectors)
    cand = np.einsum("...ab,...jb->...ja", geo.normal_projector, Je)
    frame = np.zeros(F.grid.sizes + (codim, bg.coord_dimension))
    ok = np.ones(F.grid.sizes, dtype=bool)
    if codim == F.m:
        for a in range(codim):
            v = cand[..., a, :].copy()
            for b in range(a):
                v -= np.einsum("...,...d->...d", np.einsum("...a,...ab,...b->...", frame[..., b, :], G, v), frame[..., b, :])
            nrm = np.sqrt(np.einsum("...a,...ab,...b->...", v, G, v))
            ok &= nrm > 0.3
            frame[..., a, :] = v / np.maximum(nrm, 1e-300)[..., None]
    else:
        ok[...] = False
    if not np.all(ok):
        w, vecs = np.linalg.eigh(geo.normal_projector[~ok])
        frame[~ok] = np.swapaxes(vecs[..., -codim:], -1, -2)
    return frame


def perturbed(base: Immersion, amp: float, mode: int, seed: int = 0) -> Immersion:
    """base + amp * (normal field with Fourier mode ``mode``)."""
    rng = np.random.default_rng(seed)
    nu = normal_frame(base)
    coords = base.grid.coords()
    V = np.zeros_like(base.points)
    for c in range(nu.shape[-2]):
        kvec = rng.integers(-mode, mode + 1, size=base.m)
        if not np.any(kvec):
            kvec[0] = mode
        phase = rng.uniform(0, 2 * math.pi)
        a = np.cos(coords @ kvec + phase)
        V += a[..., None] * nu[..., c, :]
    pts = base.points + amp * V
    if base.background.kind == "sphere":
        pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    return base.with_points(pts)


# -- Abresch-Langer shooting ------------------------------------------------


def _shrinker_rhs(_s, y):
    x1, x2, t1, t2 = y
    k = 0.5 * (x1 * t2 - x2 * t1)
    return [t1, t2, -k * t2, k * t1]


def _half_period(r0: float):
    """Arclength and polar angle from the radial maximum r0 to the next minimum."""

    def event(_s, y):
        return y[0] * y[2] + y[1] * y[3]

    event.terminal = True
    event.direction = 1.0
    sol = solve_ivp(_shrinker_rhs, (0.0, 200.0), [r0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=1e-13, atol=1e-14, events=event)
    if not sol.t_events[0].size:
        raise ShootingError(f"no radial minimum found from r0={r0}")
    s_half = float(sol.t_events[0][0])
    y = sol.y_events[0][0]
    return s_half, math.atan2(y[1], y[0])


def check_window(p: int, q: int) -> None:
    if p <= 0 or q <= 0 or math.gcd(p, q) != 1:
        raise ValueError(f"(p, q) = ({p}, {q}) must be coprime positive integers")
    if not 0.5 < p / q < 1.0 / SQRT2:
        raise ValueError(f"p/q = {p}/{q} outside the window (1/2, 1/sqrt 2)")


def shoot_abresch_langer(p: int, q: int, n: int = 2048, max_iter: int = 200):
    """Closed self-shrinking curve with rotation index p and q lobes.

    Returns (immersion, info) where info holds r_max, length and closure gap.
    """
    check_window(p, q)
    target = math.pi * p / q
    lo = SQRT2 * (1.0 + 1e-3)
    if _half_period(lo)[1] <= target:
        raise ShootingError("near-circle half angle already below target")
    hi = lo
    for _ in range(200):
        hi += 0.1
        if _half_period(hi)[1] < target:
            break
    else:
        raise ShootingError("could not bracket the closing radius")
    try:
        r0 = brentq(lambda r: _half_period(r)[1] - target, lo, hi, xtol=1e-15, rtol=1e-15,
                    maxiter=max_iter)
    except RuntimeError as exc:
        raise ShootingError(f"root search did not converge: {exc}") from exc
    s_half, _ = _half_period(r0)
    length = 2.0 * q * s_half
    s_eval = np.arange(n + 1) * (length / n)
    # short steps keep dense-output noise below what second differences amplify
    sol = solve_ivp(_shrinker_rhs, (0.0, length), [r0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=2.3e-14, atol=1e-15, t_eval=s_eval, max_step=length / n)
    pts = sol.y[:2].T
    gap = float(np.linalg.norm(pts[-1] - pts[0]))
    if gap > 1e-10:
        raise ShootingError(f"closure gap {gap:.2e} exceeds 1e-10", best_gap=gap)
    F = Immersion(ParamGrid((n,)), pts[:-1], SolitonBackground.flat(1))
    return F, {"r_max": r0, "length": length, "closure_gap": gap}


def abresch_langer(p: int = 2, q: int = 3, n: int = 2048) -> Immersion:
    return shoot_abresch_langer(p, q, n)[0]


def al_times_circle(p: int = 2, q: int = 3, n1: int = 512, n2: int = 32) -> Immersion:
    """Abresch-Langer curve times the sqrt 2 circle: a Lagrangian shrinker in C^2."""
    al = abresch_langer(p, q, n1).points
    th = ParamGrid((n2,)).axes()[0]
    return product_of_curves(al, curve_points(th, SQRT2))


def make(spec: ExampleSpec) -> Immersion:
    """Dispatch an ExampleSpec to its generator."""
    P = dict(spec.params)
    n = spec.sizes if len(spec.sizes) > 1 else spec.sizes[0]
    kind = spec.kind
    if kind == "circle":
        return circle(P.get("r", SQRT2), n, noise=P.get("noise", 0.0), seed=spec.seed)
    if kind == "product-torus":
        return product_torus(P.get("radii", (SQRT2, SQRT2)), n, P.get("amps", (0.0, 0.0)),
                             P.get("modes", (0, 0)))
    if kind == "great-circle":
        return great_circle(n, P.get("f0", 1.0), P.get("tilt", 0.0))
    if kind == "abresch-langer":
        return abresch_langer(P.get("p", 2), P.get("q", 3), n)
    if kind == "random-torus":
        return random_lagrangian_torus(spec.seed, n)
    if kind == "perturbed":
        return perturbed(P["base"], P.get("amp", 0.05), P.get("mode", 3), spec.seed)
    if kind == "rotated":
        return rotated(P["base"], unitary_matrix(P["base"].m, spec.seed))
    raise ValueError(f"unknown example kind {kind!r}")
