"""Immersions of flat tori sampled on periodic grids, and their geometry.

An immersion F: T^m -> N is stored as ambient coordinates at the nodes of a
uniform periodic grid on [0, 2pi)^m.  Geometry uses fourth-order central
differences with periodic index wrap; ``spectral_tangents`` provides Fourier
derivatives for quadrature of the volume form.  Conventions:

* A(X, Y) = (D_X Y)^perp and H = tr A, so a circle of radius r has inward
  mean curvature of length 1/r.
* ``perp`` and ``top`` are orthogonal projections inside T_pN, taken with the
  ambient metric of the background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .background import SolitonBackground, inner

IMMERSIVITY_FLOOR = 1e-8
SPHERE_POINT_TOL = 1e-8


class DegenerateImmersionError(ValueError):
    """The induced metric is degenerate or non-finite somewhere on the grid."""


class ImmersionFileError(ValueError):
    pass


@dataclass(frozen=True)
class ParamGrid:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) not in (1, 2):
            raise ValueError("intrinsic dimension must be 1 or 2")
        if any(n < 16 for n in sizes):
            raise ValueError(f"every grid size must be >= 16, got {sizes}")

    @property
    def m(self) -> int:
        return len(self.sizes)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(2.0 * math.pi / n for n in self.sizes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axes(self) -> list[np.ndarray]:
        return [np.arange(n) * h for n, h in zip(self.sizes, self.spacings)]

    def coords(self) -> np.ndarray:
        """Parameter coordinates, shape (*sizes, m)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def refine(self, factor: int = 2) -> "ParamGrid":
        return ParamGrid(tuple(n * factor for n in self.sizes))


STENCIL_REACH = 2


def _padded(a: np.ndarray, axis: int):
    b = np.moveaxis(a, axis, 0)
    n = b.shape[0]
    return b[np.arange(-STENCIL_REACH, n + STENCIL_REACH) % n], n


def d1(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order periodic first derivative along ``axis``."""
    p, n = _padded(a, axis)
    out = (p[0:n] - 8.0 * p[1 : n + 1] + 8.0 * p[3 : n + 3] - p[4 : n + 4]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def d2(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order periodic second derivative along ``axis``."""
    p, n = _padded(a, axis)
    out = (
        -p[0:n] + 16.0 * p[1 : n + 1] - 30.0 * p[2 : n + 2] + 16.0 * p[3 : n + 3] - p[4 : n + 4]
    ) / (12.0 * h * h)
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class Immersion:
    """Discrete immersion: node coordinates on a periodic grid in a background.

    ``shifts`` (shape (m, D)) lets a direction close up to an ambient
    translation, F(theta + 2pi e_i) = F(theta) + shifts[i]; it is only used
    for periodic graph patches in the flat chart.
    """

    grid: ParamGrid
    points: np.ndarray
    background: SolitonBackground
    shifts: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        bg = self.background
        if pts.shape != self.grid.sizes + (bg.coord_dimension,):
            raise ValueError(
                f"points have shape {pts.shape}, expected {self.grid.sizes + (bg.coord_dimension,)}"
            )
        if self.grid.m != bg.m:
            raise ValueError(
                f"dimension mismatch: {self.grid.m}-dimensional source in {bg.ident}"
            )
        if not np.all(np.isfinite(pts)):
            raise DegenerateImmersionError("non-finite point coordinates")
        if bg.kind == "sphere":
            dev = np.max(np.abs(np.linalg.norm(pts, axis=-1) - 1.0))
            if dev > SPHERE_POINT_TOL:
                raise ValueError(f"points leave the unit sphere (max ||p|-1| = {dev:.2e})")
        if self.shifts is not None:
            sh = np.array(self.shifts, dtype=float).reshape(self.grid.m, bg.coord_dimension)
            sh.setflags(write=False)
            object.__setattr__(self, "shifts", sh if np.any(sh) else None)

    @property
    def m(self) -> int:
        return self.grid.m

    def with_points(self, points) -> "Immersion":
        return Immersion(self.grid, points, self.background, self.shifts)

    @cached_property
    def geometry(self) -> "InducedGeometry":
        return induced_geometry(self)

    @cached_property
    def extrinsic(self) -> "InducedGeometry":
        return induced_geometry(self, intrinsic=False)

    def potential(self) -> np.ndarray:
        return self.background.potential(self.points)


@dataclass(frozen=True, eq=False)
class InducedGeometry:
    """Per-node geometry of an immersion.

    Shapes use ``S`` for the grid shape, ``m`` for intrinsic and ``D`` for
    coordinate dimension.
    """

    tangents: np.ndarray  # (S, m, D)
    second: np.ndarray  # (S, m, m, D) raw second derivatives
    ambient_metric: np.ndarray  # (S, D, D)
    induced_metric: np.ndarray  # (S, m, m)
    inverse_metric: np.ndarray  # (S, m, m)
    sqrt_det: np.ndarray  # (S,)
    tangent_projector: np.ndarray  # (S, D, D)
    normal_projector: np.ndarray  # (S, D, D)
    second_fundamental: np.ndarray  # (S, m, m, D)
    mean_curvature: np.ndarray  # (S, D)
    A_norm_sq: np.ndarray  # (S,)
    frame: np.ndarray  # (S, m, m): e_a = sum_j frame[a, j] d_j
    christoffels: np.ndarray | None = None  # (S, k, i, j)
    intrinsic_ricci: np.ndarray | None = None  # (S, m, m)
    intrinsic_riemann: np.ndarray | None = None  # (S,) R_1212 for m = 2
    gauss_curvature: np.ndarray | None = None  # (S,) for m = 2
    lagrangian_defect: np.ndarray | None = None  # (S, m, m)

    @property
    def sup_A(self) -> float:
        return float(np.sqrt(np.max(self.A_norm_sq)))

    @property
    def frame_vectors(self) -> np.ndarray:
        """Orthonormal tangent frame as ambient vectors, shape (S, m, D)."""
        return np.einsum("...aj,...jd->...ad", self.frame, self.tangents)

    def perp(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.normal_projector, v)

    def top(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.tangent_projector, v)

    def ambient_norm(self, v: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(inner(self.ambient_metric, v, v), 0.0))

    def laplacian(self, u: np.ndarray, hs) -> np.ndarray:
        """Intrinsic Laplace-Beltrami g^{ij}(u_ij - Gamma^k_ij u_k) of a nodal scalar."""
        return hessian(self, u, hs, trace=True)


def _derivatives(F: Immersion):
    grid = F.grid
    hs = grid.spacings
    Q = np.asarray(F.points)
    if F.shifts is not None:
        coords = grid.coords()
        Q = Q - np.einsum("...i,id->...d", coords, F.shifts) / (2.0 * math.pi)
    m = grid.m
    first = []
    for i in range(m):
        Fi = d1(Q, i, hs[i])
        if F.shifts is not None:
            Fi = Fi + F.shifts[i] / (2.0 * math.pi)
        first.append(Fi)
    tangents = np.stack(first, axis=-2)
    second = np.empty(grid.sizes + (m, m, Q.shape[-1]))
    for i in range(m):
        second[..., i, i, :] = d2(Q, i, hs[i])
        for j in range(i + 1, m):
            mixed = d1(d1(Q, i, hs[i]), j, hs[j])
            second[..., i, j, :] = mixed
            second[..., j, i, :] = mixed
    return tangents, second


def induced_geometry(F: Immersion, intrinsic: bool = True) -> InducedGeometry:
    """First and second fundamental quantities at every node.

    Raises DegenerateImmersionError when the induced metric has an
    eigenvalue below ``IMMERSIVITY_FLOOR`` or contains NaNs.
    """
    bg = F.background
    hs = F.grid.spacings
    m = F.m
    tangents, second = _derivatives(F)
    G = bg.metric(F.points)
    Pamb = bg.tangent_projector(F.points)
    GF = np.einsum("...ab,...jb->...ja", G, tangents)
    g = np.einsum("...id,...jd->...ij", tangents, GF)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    if not np.all(np.isfinite(g)):
        raise DegenerateImmersionError("NaN in induced metric (overlapping points?)")
    eig_min = np.linalg.eigvalsh(g)[..., 0]
    if np.min(eig_min) < IMMERSIVITY_FLOOR:
        idx = np.unravel_index(int(np.argmin(eig_min)), eig_min.shape)
        raise DegenerateImmersionError(
            f"induced metric eigenvalue {float(np.min(eig_min)):.3e} below floor at node {idx}"
        )
    ginv = np.linalg.inv(g)
    sqrt_det = np.sqrt(np.linalg.det(g))
    Pt = np.einsum("...ia,...ij,...jb->...ab", tangents, ginv, GF)
    Pn = Pamb - Pt
    A = np.einsum("...ab,...ijb->...ija", Pn, second)
    H = np.einsum("...ij,...ija->...a", ginv, A)
    GA = np.einsum("...ab,...klb->...kla", G, A)
    A_sq = np.einsum("...ik,...jl,...ija,...kla->...", ginv, ginv, A, GA)
    L = np.linalg.cholesky(g)
    frame = np.linalg.inv(L)
    geo = dict(
        tangents=tangents,
        second=second,
        ambient_metric=G,
        induced_metric=g,
        inverse_metric=ginv,
        sqrt_det=sqrt_det,
        tangent_projector=Pt,
        normal_projector=Pn,
        second_fundamental=A,
        mean_curvature=H,
        A_norm_sq=A_sq,
        frame=frame,
    )
    if not intrinsic:
        return InducedGeometry(**geo)

    dg = np.stack([d1(g, k, hs[k]) for k in range(m)], axis=-3)  # (S, k, i, j) = d_k g_ij
    # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    lowered = 0.5 * (
        np.einsum("...ijl->...ijl", dg)
        + np.einsum("...jil->...ijl", dg)
        - np.einsum("...lij->...ijl", dg)
    )
    chris = np.einsum("...kl,...ijl->...kij", ginv, lowered)
    ric = np.zeros(F.grid.sizes + (m, m))
    riem = None
    K = None
    if m == 2:
        dchris = np.stack([d1(chris, a, hs[a]) for a in range(m)], axis=-4)  # (S, a, l, j, k)
        # R(d_i, d_j) d_k = R_ijk^l d_l,
        # R_ijk^l = d_i G^l_jk - d_j G^l_ik + G^p_jk G^l_ip - G^p_ik G^l_jp
        R = (
            np.einsum("...iljk->...ijkl", dchris)
            - np.einsum("...jlik->...ijkl", dchris)
            + np.einsum("...pjk,...lip->...ijkl", chris, chris)
            - np.einsum("...pik,...ljp->...ijkl", chris, chris)
        )
        riem = np.einsum("...l,...l->...", g[..., 0, :], R[..., 0, 1, 1, :])
        K = riem / np.linalg.det(g)
        ric = K[..., None, None] * g
    JF = np.einsum("...ab,...jb->...ja", bg.J_matrix(F.points), tangents)
    defect = np.einsum("...ia,...ab,...jb->...ij", JF, G, tangents)
    if m == 1:
        defect = np.zeros_like(defect)
    return InducedGeometry(
        **geo,
        christoffels=chris,
        intrinsic_ricci=ric,
        intrinsic_riemann=riem,
        gauss_curvature=K,
        lagrangian_defect=defect,
    )


def flat_mean_curvature(F: Immersion) -> tuple[np.ndarray, float, float]:
    """(H, sup|A|, smallest metric eigenvalue) on the flat background, without the full geometry.

    Used by time stepping; raises DegenerateImmersionError like induced_geometry.
    """
    tangents, second = _derivatives(F)
    g = (tangents[..., :, None, :] * tangents[..., None, :, :]).sum(-1)
    if F.m == 1:
        g11 = g[..., 0, 0]
        lam_min = float(np.min(g11)) if np.all(np.isfinite(g11)) else float("nan")
        if not lam_min >= IMMERSIVITY_FLOOR:
            raise DegenerateImmersionError(f"induced metric eigenvalue {lam_min:.3e} below floor")
        T = tangents[..., 0, :]
        acc = second[..., 0, 0, :]
        A = acc - (np.sum(acc * T, axis=-1) / g11)[..., None] * T
        H = A / g11[..., None]
        supA = float(np.sqrt(np.max(np.sum(H * H, axis=-1))))
        return H, supA, lam_min
    a, b, c = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    eig = 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)
    lam_min = float(np.min(eig)) if np.all(np.isfinite(eig)) else float("nan")
    if not lam_min >= IMMERSIVITY_FLOOR:
        raise DegenerateImmersionError(f"induced metric eigenvalue {lam_min:.3e} below floor")
    det = a * c - b * b
    ginv = np.stack([np.stack([c, -b], -1), np.stack([-b, a], -1)], -2) / det[..., None, None]
    # A_ij = F_ij - g^{kl} <F_ij, F_l> F_k, written with broadcasting (einsum is slow on tiny axes)
    dots = (second[..., :, :, None, :] * tangents[..., None, None, :, :]).sum(-1)
    coef = (dots[..., :, :, :, None] * ginv[..., None, None, :, :]).sum(-2)
    A = second - (coef[..., None] * tangents[..., None, None, :, :]).sum(-2)
    H = (ginv[..., None] * A).sum((-3, -2))
    GA = (ginv[..., :, :, None, None] * A[..., None, :, :, :]).sum(-3)
    A_sq = (GA * np.swapaxes(GA, -3, -2)).sum((-3, -2, -1))
    return H, float(np.sqrt(np.max(A_sq))), lam_min


def hessian(geo: InducedGeometry, u: np.ndarray, hs, trace: bool = False) -> np.ndarray:
    """Covariant Hessian u_ij - Gamma^k_ij u_k of a nodal scalar (or its trace)."""
    m = len(hs)
    du = np.stack([d1(u, i, hs[i]) for i in range(m)], axis=-1)
    ddu = np.empty(u.shape + (m, m))
    for i in range(m):
        ddu[..., i, i] = d2(u, i, hs[i])
        for j in range(i + 1, m):
            ddu[..., i, j] = ddu[..., j, i] = d1(d1(u, i, hs[i]), j, hs[j])
    hess = ddu - np.einsum("...kij,...k->...ij", geo.christoffels, du)
    if trace:
        return np.einsum("...ij,...ij->...", geo.inverse_metric, hess)
    return hess


def divergence_laplacian(F: Immersion, u: np.ndarray, geo: InducedGeometry | None = None) -> np.ndarray:
    """Conservative Laplace-Beltrami (1/sqrt g) d_i(sqrt g g^{ij} d_j u).

    Central differences telescope on the periodic grid, so the trapezoidal
    integral of the result vanishes up to rounding.
    """
    geo = geo or F.extrinsic
    hs = F.grid.spacings
    m = F.m
    du = np.stack([d1(u, j, hs[j]) for j in range(m)], axis=-1)
    flux = geo.sqrt_det[..., None] * np.einsum("...ij,...j->...i", geo.inverse_metric, du)
    div = sum(d1(flux[..., i], i, hs[i]) for i in range(m))
    return div / geo.sqrt_det


def gradient_norm_sq(geo: InducedGeometry, u: np.ndarray, hs) -> np.ndarray:
    du = np.stack([d1(u, i, hs[i]) for i in range(len(hs))], axis=-1)
    return np.einsum("...i,...ij,...j->...", du, geo.inverse_metric, du)


def integrate(F: Immersion, values: np.ndarray, geo: InducedGeometry | None = None) -> float:
    """Periodic trapezoidal quadrature of a nodal field against d mu(F*g)."""
    geo = geo or F.extrinsic
    return float(np.sum(values * geo.sqrt_det) * F.grid.cell_volume)


def spectral_tangents(F: Immersion) -> np.ndarray:
    """Coordinate tangents from Fourier differentiation, shape (S, m, D).

    Period shifts are removed as a linear ramp before transforming.
    """
    P = np.asarray(F.points)
    out = []
    for i, n in enumerate(F.grid.sizes):
        slope = 0.0 if F.shifts is None else F.shifts[i] / (2.0 * math.pi)
        theta = F.grid.axes()[i]
        ramp = np.expand_dims(theta, tuple(j for j in range(F.m) if j != i) + (F.m,)) * slope
        k = np.fft.rfftfreq(n, 1.0 / n)
        if n % 2 == 0:
            k[-1] = 0.0  # Nyquist mode has no real derivative
        shape = [1] * (F.m + 1)
        shape[i] = k.size
        spec = np.fft.rfft(P - ramp, axis=i) * (1j * k.reshape(shape))
        out.append(np.fft.irfft(spec, n=n, axis=i) + slope)
    return np.stack(out, axis=F.m)


def spectral_metric(F: Immersion) -> np.ndarray:
    """Induced metric F*g from spectrally accurate tangents, shape (S, m, m)."""
    T = spectral_tangents(F)
    G = F.background.metric(F.points)
    return np.einsum("...ia,...ab,...jb->...ij", T, G, T)


def lagrangian_defect_norm(F: Immersion) -> float:
    if F.m == 1:
        return 0.0
    return float(np.max(np.abs(F.geometry.lagrangian_defect)))


@dataclass(frozen=True)
class SelfSimilarResidual:
    field: np.ndarray
    sup_norm: float
    l2_norm: float


def self_similar_residual(F: Immersion, lam: float) -> SelfSimilarResidual:
    """H - lam (grad f)^perp at every node, with sup and L2(d mu) norms."""
    geo = F.extrinsic
    res = geo.mean_curvature - lam * geo.perp(F.background.grad_f(F.points))
    norms = geo.ambient_norm(res)
    l2 = math.sqrt(max(integrate(F, norms**2, geo), 0.0))
    return SelfSimilarResidual(res, float(np.max(norms)), l2)


def conformal_mean_curvature(F: Immersion, lam: float) -> float:
    """Sup of |H| for the ambient metric exp(2 lam f / m) g.

    The conformal connection D^_X Y = D_X Y + ds(X) Y + ds(Y) X - g(X, Y) grad s
    (s = lam f / m) is applied to the coordinate fields; the normal space is
    unchanged by a conformal factor.
    """
    geo = F.extrinsic
    bg = F.background
    m = F.m
    sigma = lam * bg.potential(F.points) / m
    grad_sigma = (lam / m) * bg.grad_f(F.points)
    G = geo.ambient_metric
    ds = np.einsum("...ia,...ab,...b->...i", geo.tangents, G, grad_sigma)
    conn = (
        geo.second
        + ds[..., :, None, None] * geo.tangents[..., None, :, :]
        + ds[..., None, :, None] * geo.tangents[..., :, None, :]
        - geo.induced_metric[..., None] * grad_sigma[..., None, None, :]
    )
    A_hat = np.einsum("...ab,...ijb->...ija", geo.normal_projector, conn)
    weight = np.exp(-2.0 * sigma)
    H_hat = weight[..., None] * np.einsum("...ij,...ija->...a", geo.inverse_metric, A_hat)
    # length in the conformal metric
    norm_hat = np.exp(sigma) * geo.ambient_norm(H_hat)
    return float(np.max(norm_hat))


def gauss_consistency(F: Immersion) -> float:
    """Max difference between intrinsic Ric(X, X) and its Gauss-equation value.

    X ranges over the coordinate directions; returns 0 for curves.
    """
    if F.m == 1:
        return 0.0
    direct, gauss = gauss_ricci_pair(F)
    return float(np.max(np.abs(direct - gauss)))


def gauss_ricci_pair(F: Immersion, frame_rotation: float = 0.0):
    """(intrinsic, Gauss-equation) values of Ric(d_k, d_k), shape (S, m) each.

    ``frame_rotation`` rotates the orthonormal frame before the frame sums,
    which must not change the result.
    """
    geo = F.geometry
    bg = F.background
    m = F.m
    E = geo.frame_vectors
    C = geo.frame
    if frame_rotation:
        c, s = math.cos(frame_rotation), math.sin(frame_rotation)
        Rot = np.array([[c, -s], [s, c]])
        E = np.einsum("ab,...bd->...ad", Rot, E)
        C = np.einsum("ab,...bj->...aj", Rot, C)
    G = geo.ambient_metric
    direct = np.stack(
        [geo.intrinsic_ricci[..., k, k] for k in range(m)], axis=-1
    )
    gauss = np.empty_like(direct)
    A = geo.second_fundamental
    for k in range(m):
        X = geo.tangents[..., k, :]
        total = inner(G, A[..., k, k, :], geo.mean_curvature)
        for a in range(m):
            ea = E[..., a, :]
            total = total + bg.riemann(F.points, X, ea, X, ea)
            A_Xe = np.einsum("...j,...jd->...d", C[..., a, :], A[..., k, :, :])
            total = total - inner(G, A_Xe, A_Xe)
        gauss[..., k] = total
    return direct, gauss


# -- file format -------------------------------------------------------------


def write_immersion(F: Immersion, path) -> None:
    """Text format: header lines m=, grid=, background=, then row-major nodes."""
    if F.shifts is not None:
        raise ValueError("immersions with period shifts cannot be written to file")
    lines = [
        f"m={F.m}",
        "grid=" + ",".join(str(n) for n in F.grid.sizes),
        f"background={F.background.ident}",
    ]
    params = F.grid.coords().reshape(-1, F.m)
    pts = F.points.reshape(-1, F.points.shape[-1])
    for th, x in zip(params, pts):
        lines.append(" ".join(repr(float(v)) for v in (*th, *x)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_immersion(path) -> Immersion:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if len(text) < 3:
        raise ImmersionFileError(f"{path}: missing header lines")

    def header(k, key):
        name, sep, value = text[k].partition("=")
        if not sep or name.strip() != key:
            raise ImmersionFileError(f"{path}:{k + 1}: expected '{key}=...'")
        return value.strip()

    try:
        m = int(header(0, "m"))
        sizes = tuple(int(v) for v in header(1, "grid").split(","))
    except ValueError as exc:
        raise ImmersionFileError(f"{path}: malformed header ({exc})") from exc
    if len(sizes) != m:
        raise ImmersionFileError(f"{path}:2: grid has {len(sizes)} sizes but m={m}")
    bg = SolitonBackground.parse(header(2, "background"))
    grid = ParamGrid(sizes)
    width = m + bg.coord_dimension
    body = [ln for ln in text[3:] if ln.strip()]
    if len(body) != grid.n_nodes:
        raise ImmersionFileError(f"{path}: expected {grid.n_nodes} node lines, found {len(body)}")
    data = np.empty((grid.n_nodes, width))
    for k, ln in enumerate(body):
        fields = ln.split()
        if len(fields) != width:
            raise ImmersionFileError(f"{path}:{k + 4}: expected {width} fields, got {len(fields)}")
        try:
            data[k] = [float(v) for v in fields]
        except ValueError as exc:
            raise ImmersionFileError(f"{path}:{k + 4}: {exc}") from exc
    points = data[:, m:].reshape(sizes + (bg.coord_dimension,))
    return Immersion(grid, points, bg)
