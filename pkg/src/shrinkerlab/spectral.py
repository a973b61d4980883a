"""Drift Laplacian, Bakry-Emery tensor and the diameter estimate for shrinkers.

The weighted Laplacian L u = Delta u - <grad phi, grad u> with phi = (f o F)/2
is self-adjoint for exp(-phi) d mu.  It is discretised in weak form,

    <-L u, v> = int <grad u, grad v> exp(-phi) d mu,

as a symmetric stiffness matrix K against the diagonal weighted mass M, so
-L has the real spectrum of K v = mu M v.  Diagonal metric terms use
fourth-order staggered differences (no spurious odd-even kernel); the
off-diagonal g^{12} term uses collocated central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import eigsh

from .immersion import Immersion, hessian, self_similar_residual

DENSE_LIMIT = 1200
DIAM_TOL = 0.02
DEGENERATE_TOL = 1e-8


def _periodic(n: int, stencil: dict[int, float]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k, c in stencil.items():
        rows.append(np.arange(n))
        cols.append((np.arange(n) + k) % n)
        vals.append(np.full(n, c))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _staggered(n: int, h: float) -> sp.csr_matrix:
    # row j: derivative at j + 1/2
    return _periodic(n, {-1: 1 / 24, 0: -27 / 24, 1: 27 / 24, 2: -1 / 24}) / h


def _central(n: int, h: float) -> sp.csr_matrix:
    return _periodic(n, {-2: 1 / 12, -1: -2 / 3, 1: 2 / 3, 2: -1 / 12}) / h


def _to_half(a: np.ndarray, axis: int) -> np.ndarray:
    """Fourth-order interpolation of a periodic nodal field to j + 1/2."""
    return (
        -np.roll(a, 1, axis) + 9 * a + 9 * np.roll(a, -1, axis) - np.roll(a, -2, axis)
    ) / 16.0


def _along(op: sp.spmatrix, axis: int, sizes) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr") for n in sizes]
    mats[axis] = op
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return out


@dataclass(frozen=True, eq=False)
class DriftOperator:
    immersion: Immersion
    phi: np.ndarray
    stiffness: sp.csr_matrix
    mass: np.ndarray  # diagonal of the weighted mass matrix
    symmetric: bool

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Delta_phi u at the nodes."""
        flat = np.asarray(u, dtype=float).ravel()
        return (-(self.stiffness @ flat) / self.mass).reshape(np.shape(u))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(np.ravel(u) * np.ravel(v) * self.mass))


def assemble_drift(F: Immersion) -> DriftOperator:
    geo = F.extrinsic
    sizes, hs = F.grid.sizes, F.grid.spacings
    cell = F.grid.cell_volume
    phi = 0.5 * F.potential()
    weight = np.exp(-phi)
    coef = (geo.sqrt_det * weight)[..., None, None] * geo.inverse_metric
    K = None
    for a in range(F.m):
        Ds = _along(_staggered(sizes[a], hs[a]), a, sizes)
        c_half = _to_half(coef[..., a, a], a).ravel() * cell
        term = Ds.T @ sp.diags(c_half) @ Ds
        K = term if K is None else K + term
    if F.m == 2:
        D1 = _along(_central(sizes[0], hs[0]), 0, sizes)
        D2 = _along(_central(sizes[1], hs[1]), 1, sizes)
        cross = D1.T @ sp.diags(coef[..., 0, 1].ravel() * cell) @ D2
        K = K + cross + cross.T
    K = sp.csr_matrix(K)
    asym = abs(K - K.T).max() if K.nnz else 0.0
    K = sp.csr_matrix(0.5 * (K + K.T))
    mass = (geo.sqrt_det * weight).ravel() * cell
    scale = abs(K).max()
    return DriftOperator(F, phi, K, mass, bool(asym <= 1e-12 * max(scale, 1.0)))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # (n_nodes, k), M-orthonormal
    closest_to_one: float
    alignment: float
    eigenspace_dim: int


def identity_eigenfunction(F: Immersion) -> np.ndarray:
    """(m/2 - C0/4) - phi, the candidate eigenfunction for eigenvalue 1."""
    bg = F.background
    return (F.m / 2.0 - bg.C0 / 4.0) - 0.5 * F.potential()


def _eigenpairs(S: sp.spmatrix, k: int, sigma: float):
    n = S.shape[0]
    v0 = np.ones(n) / math.sqrt(n)
    vals, vecs = eigsh(S.tocsc(), k=k, sigma=sigma, which="LM", v0=v0, maxiter=10000)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def spectrum(op: DriftOperator, k: int = 12, target: float = 1.0, cluster_tol: float = 1e-6) -> SpectrumReport:
    """k smallest eigenpairs of -Delta_phi, plus the match to eigenvalue ``target``.

    The match is taken from a separate shift-invert solve near ``target`` so
    that it does not depend on k.
    """
    n = op.mass.size
    if k > n:
        raise ValueError(f"k={k} exceeds the node count {n}")
    s = 1.0 / np.sqrt(op.mass)
    S = sp.diags(s) @ op.stiffness @ sp.diags(s)
    if n <= DENSE_LIMIT:
        all_vals, all_vecs = sla.eigh(S.toarray())
        vals, vecs = all_vals[:k], all_vecs[:, :k]
        near_vals, near_vecs = all_vals, all_vecs
    else:
        vals, vecs = _eigenpairs(S, k, -1e-3)
        near_vals, near_vecs = _eigenpairs(S, min(8, n - 2), target - 1e-3)
    funcs = vecs * s[:, None]
    near_funcs = near_vecs * s[:, None]
    u = identity_eigenfunction(op.immersion).ravel()
    j = int(np.argmin(np.abs(near_vals - target)))
    cluster = np.abs(near_vals - near_vals[j]) <= cluster_tol * max(1.0, abs(near_vals[j]))
    unorm = math.sqrt(op.inner(u, u))
    if np.max(np.abs(u)) >= DEGENERATE_TOL:
        coeffs = (near_funcs[:, cluster] * op.mass[:, None]).T @ u
        alignment = float(np.linalg.norm(coeffs) / unorm)
    else:
        alignment = float("nan")
    return SpectrumReport(vals, funcs, float(near_vals[j]), alignment, int(np.count_nonzero(cluster)))


@dataclass(frozen=True)
class EigenIdentity:
    residual_sup: float
    is_degenerate: bool
    u_sup: float
    shrinker_residual: float


def eigen_identity_check(F: Immersion, op: DriftOperator | None = None) -> EigenIdentity:
    """sup |Delta_phi u + u| for u = (m/2 - C0/4) - phi."""
    op = op or assemble_drift(F)
    u = identity_eigenfunction(F)
    r = op.apply(u) + u
    u_sup = float(np.max(np.abs(u)))
    return EigenIdentity(
        float(np.max(np.abs(r))),
        u_sup < DEGENERATE_TOL,
        u_sup,
        self_similar_residual(F, -0.5).sup_norm,
    )


@dataclass(frozen=True)
class BakryEmery:
    kappa_actual: float
    tensor: np.ndarray  # (S, m, m)
    hessian_intrinsic: np.ndarray
    hessian_chain: np.ndarray
    cross_check: float


def bakry_emery(F: Immersion) -> BakryEmery:
    """Smallest eigenvalue of Ric(F*g) + Hess phi relative to F*g, minimised over nodes."""
    geo = F.geometry
    bg = F.background
    hs = F.grid.spacings
    phi = 0.5 * F.potential()
    hess = hessian(geo, phi, hs)
    # proof chain: Hess(f o F)(X, Y) = Hess_g f(F_*X, F_*Y) + g(A(X, Y), grad f)
    Hf = bg.hess_f(F.points)
    gradf = bg.grad_f(F.points)
    chain = 0.5 * (
        np.einsum("...ia,...ab,...jb->...ij", geo.tangents, Hf, geo.tangents)
        + np.einsum("...ija,...ab,...b->...ij", geo.second_fundamental, geo.ambient_metric, gradf)
    )
    T = geo.intrinsic_ricci + hess
    T = 0.5 * (T + np.swapaxes(T, -1, -2))
    Linv = geo.frame  # L^{-1} with g = L L^T
    reduced = np.einsum("...ai,...ij,...bj->...ab", Linv, T, Linv)
    kappa = float(np.min(np.linalg.eigvalsh(reduced)[..., 0]))
    return BakryEmery(kappa, T, hess, chain, float(np.max(np.abs(hess - chain))))


def kappa_bound(m: int, K0: float, A0: float) -> float:
    return 0.5 - m * (K0 + A0**2)


def diameter_bound(m: int, K0: float, A0: float) -> float:
    return math.pi / math.sqrt(0.75 + 0.5 * m * (K0 + A0**2))


def fll_value(s, d: float, kappa: float):
    return 4.0 * s * (1.0 - s) * math.pi**2 / d**2 + s * kappa


def fll_sup(d: float, kappa: float, ds: float = 1e-4) -> float:
    s = np.arange(1, int(round(1.0 / ds))) * ds
    return float(np.max(fll_value(s, d, kappa)))


_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2))


def diameter(F: Immersion, max_sources: int = 256) -> float:
    """Intrinsic diameter of (L, F*g).

    Curves: half the length.  Surfaces: shortest paths on the graph joining
    each node to its 5x5 neighbourhood (primitive directions), edge lengths
    from the induced metric at both ends; overestimates by at most ~2-3%.
    """
    geo = F.extrinsic
    if F.m == 1:
        return 0.5 * float(np.sum(geo.sqrt_det) * F.grid.cell_volume)
    n1, n2 = F.grid.sizes
    h1, h2 = F.grid.spacings
    g = geo.induced_metric
    idx = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, vals = [], [], []
    for a, b in _DIRECTIONS:
        step = np.array([a * h1, b * h2])
        length = np.sqrt(np.einsum("i,...ij,j->...", step, g, step))
        other = np.roll(np.roll(length, -a, 0), -b, 1)
        rows.append(idx.ravel())
        cols.append(np.roll(np.roll(idx, -a, 0), -b, 1).ravel())
        vals.append((0.5 * (length + other)).ravel())
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n1 * n2, n1 * n2))
    stride = 1
    while (math.ceil(n1 / stride) * math.ceil(n2 / stride)) > max_sources:
        stride += 1
    sources = idx[::stride, ::stride].ravel()
    dist = dijkstra(W, directed=False, indices=sources)
    return float(np.max(dist))


@dataclass(frozen=True)
class DiameterAudit:
    bound: float
    diam: float
    fll_sup: float
    kappa_floor: float
    kappa_actual: float
    K0: float
    A0: float
    degenerate: bool
    shrinker_residual: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "bound": self.bound,
            "diam": self.diam,
            "fll_sup": self.fll_sup,
            "kappa_actual": self.kappa_actual,
            "kappa_floor": self.kappa_floor,
            "K0": self.K0,
            "A0": self.A0,
            "degenerate": self.degenerate,
            "shrinker_residual": self.shrinker_residual,
            "pass": self.passed,
        }


def diameter_bound_audit(F: Immersion, diam_tol: float = DIAM_TOL) -> DiameterAudit:
    """Check diam >= pi / sqrt(3/4 + (m/2)(K0 + A0^2)) and sup_s FLL <= 1.

    K0 is the background's exact sectional bound and A0 the computed sup|A|.
    """
    m = F.m
    K0 = F.background.K0
    A0 = F.geometry.sup_A
    kappa = kappa_bound(m, K0, A0)
    bound = diameter_bound(m, K0, A0)
    d = diameter(F)
    sup = fll_sup(d, kappa)
    u = identity_eigenfunction(F)
    ok = d >= bound * (1.0 - diam_tol) and sup <= 1.0 + 1e-6
    return DiameterAudit(
        bound=bound,
        diam=d,
        fll_sup=sup,
        kappa_floor=kappa,
        kappa_actual=bakry_emery(F).kappa_actual,
        K0=K0,
        A0=A0,
        degenerate=bool(np.max(np.abs(u)) < DEGENERATE_TOL),
        shrinker_residual=self_similar_residual(F, -0.5).sup_norm,
        passed=bool(ok),
    )
