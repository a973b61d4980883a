"""Closed-form gradient shrinking Kähler-Ricci soliton backgrounds.

Two ambients are available:

* ``flat:<m>`` -- C^m with the Gaussian potential f(x) = |x|^2 / 2. Points are
  stored as real vectors (x1, y1, ..., xm, ym) with z^k = x_k + i y_k.
* ``sphere:<f0>`` -- the unit 2-sphere (CP^1 with the round metric) with the
  constant potential f = f0. Points are stored through the unit embedding in
  R^3 and tangent vectors are R^3 vectors orthogonal to the base point.

All quantities are supplied in closed form and vectorised over leading axes:
an argument of shape (..., D) produces fields of shape (...), (..., D) or
(..., D, D).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SPHERE_TOL = 1e-10


class BackgroundError(ValueError):
    """Raised for points outside a chart or inconsistent dimensions."""


@dataclass(frozen=True)
class SolitonBackground:
    kind: str
    m: int = 1
    f0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("flat", "sphere"):
            raise BackgroundError(f"unknown background kind {self.kind!r}")
        if self.m < 1:
            raise BackgroundError("complex dimension must be positive")
        if self.kind == "sphere" and self.m != 1:
            raise BackgroundError("the round sphere background has m = 1")

    @classmethod
    def flat(cls, m: int) -> "SolitonBackground":
        return cls("flat", m=m)

    @classmethod
    def sphere(cls, f0: float = 1.0) -> "SolitonBackground":
        return cls("sphere", m=1, f0=float(f0))

    @classmethod
    def parse(cls, ident: str) -> "SolitonBackground":
        """Build a background from ``flat:<m>`` or ``sphere:<f0>``."""
        kind, _, arg = ident.strip().partition(":")
        try:
            if kind == "flat":
                return cls.flat(int(arg) if arg else 1)
            if kind == "sphere":
                return cls.sphere(float(arg) if arg else 1.0)
        except ValueError as exc:
            raise BackgroundError(f"malformed background id {ident!r}") from exc
        raise BackgroundError(f"unknown background id {ident!r}")

    @property
    def ident(self) -> str:
        if self.kind == "flat":
            return f"flat:{self.m}"
        return f"sphere:{self.f0!r}"

    @property
    def ambient_dimension(self) -> int:
        """Real dimension 2m of N."""
        return 2 * self.m

    @property
    def coord_dimension(self) -> int:
        """Length of the coordinate vectors used to store points."""
        return 3 if self.kind == "sphere" else 2 * self.m

    @property
    def scalar_curvature(self) -> float:
        return 0.0 if self.kind == "flat" else 2.0

    @property
    def C0(self) -> float:
        # R + |grad f|^2 - 2f is 0 + |x|^2 - |x|^2 on flat, 2 - 2 f0 on the sphere
        return 0.0 if self.kind == "flat" else 2.0 - 2.0 * self.f0

    @property
    def K0(self) -> float:
        """Exact global bound on |sectional curvature|."""
        return 0.0 if self.kind == "flat" else 1.0

    # -- point checks -------------------------------------------------------

    def check_points(self, p, tol: float = SPHERE_TOL) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.coord_dimension:
            raise BackgroundError(
                f"{self.ident}: expected {self.coord_dimension} coordinates, got {p.shape[-1]}"
            )
        if self.kind == "sphere":
            dev = np.abs(np.linalg.norm(p, axis=-1) - 1.0)
            if np.any(dev > tol):
                raise BackgroundError(
                    f"point off the unit sphere (|p| - 1 = {float(np.max(dev)):.3e})"
                )
        return p

    # -- closed-form fields -------------------------------------------------

    def potential(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            return 0.5 * np.sum(p * p, axis=-1)
        return np.full(p.shape[:-1], self.f0)

    def grad_f(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            return p.copy()
        return np.zeros_like(p)

    def metric(self, p) -> np.ndarray:
        """Ambient metric as a (D, D) form; on the sphere, the tangential projector."""
        p = np.asarray(p, dtype=float)
        D = self.coord_dimension
        eye = np.broadcast_to(np.eye(D), p.shape[:-1] + (D, D))
        if self.kind == "flat":
            return eye.copy()
        return eye - p[..., :, None] * p[..., None, :]

    def tangent_projector(self, p) -> np.ndarray:
        """Orthogonal projector of R^D onto T_pN."""
        return self.metric(p)

    def hess_f(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            return self.metric(p)
        D = self.coord_dimension
        return np.zeros(p.shape[:-1] + (D, D))

    def ricci(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            D = self.coord_dimension
            return np.zeros(p.shape[:-1] + (D, D))
        return self.metric(p)

    def J_matrix(self, p) -> np.ndarray:
        """Matrix of the complex structure acting on (tangent) coordinate vectors."""
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            D = self.coord_dimension
            J = np.zeros((D, D))
            for k in range(self.m):
                J[2 * k + 1, 2 * k] = 1.0
                J[2 * k, 2 * k + 1] = -1.0
            return np.broadcast_to(J, p.shape[:-1] + (D, D)).copy()
        # v -> p x v rotates T_pS^2 by +90 degrees
        J = np.zeros(p.shape[:-1] + (3, 3))
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        J[..., 0, 1], J[..., 0, 2] = -z, y
        J[..., 1, 0], J[..., 1, 2] = z, -x
        J[..., 2, 0], J[..., 2, 1] = -y, x
        return J

    def J(self, p, v) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.J_matrix(p), v)

    def omega(self, p, v, w) -> np.ndarray:
        """Kähler form omega(v, w) = g(Jv, w)."""
        return inner(self.metric(p), self.J(p, v), w)

    def riemann(self, p, X, Y, Z, W) -> np.ndarray:
        """Rm(X, Y, Z, W) normalised so that Rm(X, e, X, e) is a sectional curvature."""
        p = np.asarray(p, dtype=float)
        if self.kind == "flat":
            return np.zeros(np.broadcast_shapes(p.shape[:-1], np.shape(X)[:-1]))
        G = self.metric(p)
        return inner(G, X, Z) * inner(G, Y, W) - inner(G, X, W) * inner(G, Y, Z)

    def soliton_residual(self, p) -> np.ndarray:
        """Ric + Hess f - g at each point."""
        return self.ricci(p) + self.hess_f(p) - self.metric(p)


def inner(G, v, w) -> np.ndarray:
    return np.einsum("...a,...ab,...b->...", v, G, w)


@dataclass(frozen=True)
class BackgroundJet:
    point: np.ndarray
    f: float
    grad_f: np.ndarray
    hess_f: np.ndarray
    ric: np.ndarray
    scalar_R: float
    riemann: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], float]
    J_action: np.ndarray
    metric: np.ndarray

    def omega(self, v, w) -> float:
        return float(inner(self.metric, self.J_action @ v, w))


def evaluate_background(bg: SolitonBackground, p) -> BackgroundJet:
    """Closed-form jet of the soliton data at a single point ``p``."""
    p = bg.check_points(np.asarray(p, dtype=float))
    if p.ndim != 1:
        raise BackgroundError("evaluate_background takes a single point")

    def riemann(X, Y, Z, W):
        return float(bg.riemann(p, np.asarray(X), np.asarray(Y), np.asarray(Z), np.asarray(W)))

    return BackgroundJet(
        point=p,
        f=float(bg.potential(p)),
        grad_f=bg.grad_f(p),
        hess_f=bg.hess_f(p),
        ric=bg.ricci(p),
        scalar_R=bg.scalar_curvature,
        riemann=riemann,
        J_action=bg.J_matrix(p),
        metric=bg.metric(p),
    )


def c0_survey(bg: SolitonBackground, sample) -> tuple[float, float]:
    """Mean and max deviation of R + |grad f|^2 - 2f over sample points."""
    pts = np.asarray(sample, dtype=float)
    if pts.size == 0:
        raise BackgroundError("empty sample")
    pts = bg.check_points(np.atleast_2d(pts))
    if pts.shape[0] < 2:
        raise BackgroundError("c0_survey needs at least two points")
    g = bg.grad_f(pts)
    values = bg.scalar_curvature + inner(bg.metric(pts), g, g) - 2.0 * bg.potential(pts)
    mean = float(np.mean(values))
    return mean, float(np.max(np.abs(values - mean)))


def random_points(bg: SolitonBackground, count: int, rng: np.random.Generator, scale: float = 2.0):
    """In-chart sample points (Gaussian on flat, uniform on the sphere)."""
    pts = rng.normal(scale=scale, size=(count, bg.coord_dimension))
    if bg.kind == "sphere":
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    return pts
