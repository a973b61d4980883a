"""Weighted volume F_lam(F) = int_L exp(lam f) d mu(F*g) and its critical points.

Critical points of F_lam are exactly the self-similar solutions
H = lam (grad f)^perp.  For lam < 0 these are saddle points (the dilation and
translation directions are unstable for the normal gradient flow), so the
default minimiser drives the residual H - lam (grad f)^perp to zero with a
damped Gauss-Newton iteration over normal displacements instead of following
the gradient of F_lam.  The plain normal gradient descent is kept as
``method="gradient"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .immersion import (
    DegenerateImmersionError,
    STENCIL_REACH,
    Immersion,
    integrate,
    lagrangian_defect_norm,
    self_similar_residual,
    spectral_metric,
)
from .examples import normal_frame


class DescentError(RuntimeError):
    """Descent aborted; ``result`` holds the last valid state."""

    def __init__(self, message: str, result: "DescentResult"):
        super().__init__(message)
        self.result = result


def weighted_volume(F: Immersion, lam: float) -> float:
    """int exp(lam f) d mu(F*g).

    The volume density comes from Fourier-differentiated tangents, so on
    smooth periodic data the quadrature is spectrally accurate.
    """
    density = np.sqrt(np.linalg.det(spectral_metric(F)))
    return float(np.sum(np.exp(lam * F.potential()) * density) * F.grid.cell_volume)


def conformal_volume_identity(F: Immersion, lam: float) -> float:
    """Relative gap between int exp(lam f) d mu(F*g) and the volume of F*(exp(2 lam f/m) g)."""
    lhs = weighted_volume(F, lam)
    factor = np.exp(2.0 * lam * F.potential() / F.m)
    g_conf = factor[..., None, None] * spectral_metric(F)
    rhs = float(np.sum(np.sqrt(np.linalg.det(g_conf))) * F.grid.cell_volume)
    return abs(lhs - rhs) / abs(lhs)


def _displace(F: Immersion, V: np.ndarray, s: float) -> Immersion:
    pts = F.points + s * V
    if F.background.kind == "sphere":
        pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    return F.with_points(pts)


@dataclass(frozen=True)
class FirstVariation:
    analytic: float
    numeric: float
    projection_norm: float
    agree: bool


def first_variation(F: Immersion, lam: float, V: np.ndarray, step: float = 1e-5) -> FirstVariation:
    """d/ds F_lam(F + sV) at s = 0, analytically and by central differences.

    V is projected onto the normal bundle first; ``projection_norm`` is the
    sup of the removed tangential part.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != F.points.shape:
        raise ValueError(f"variation field has shape {V.shape}, expected {F.points.shape}")
    geo = F.extrinsic
    Vn = geo.perp(V)
    proj = float(np.max(geo.ambient_norm(V - Vn))) if V.size else 0.0
    res = self_similar_residual(F, lam).field
    weight = np.exp(lam * F.potential())
    pairing = np.einsum("...a,...ab,...b->...", res, geo.ambient_metric, Vn)
    analytic = -integrate(F, pairing * weight, geo)
    if not np.any(Vn):
        return FirstVariation(analytic, 0.0, proj, True)
    plus = weighted_volume(_displace(F, Vn, step), lam)
    minus = weighted_volume(_displace(F, Vn, -step), lam)
    numeric = (plus - minus) / (2.0 * step)
    scale = max(abs(analytic), abs(numeric), integrate(F, geo.ambient_norm(Vn) * weight, geo))
    return FirstVariation(analytic, numeric, proj, abs(analytic - numeric) <= 1e-6 * scale)


def random_normal_fields(F: Immersion, count: int, seed: int, modes: int = 3) -> list[np.ndarray]:
    """Smooth random normal fields with unit L2(d mu) norm."""
    nu = normal_frame(F)
    geo = F.extrinsic
    rng = np.random.default_rng(seed)
    coords = F.grid.coords()
    fields = []
    for _ in range(count):
        V = np.zeros_like(F.points)
        for c in range(nu.shape[-2]):
            coef = np.full(F.grid.sizes, rng.normal())
            for _k in range(modes):
                kvec = rng.integers(-modes, modes + 1, size=F.m)
                coef += 0.5 * rng.normal() * np.cos(coords @ kvec + rng.uniform(0, 2 * math.pi))
            V += coef[..., None] * nu[..., c, :]
        norm = math.sqrt(integrate(F, geo.ambient_norm(V) ** 2, geo))
        fields.append(V / norm)
    return fields


@dataclass(frozen=True)
class DescentConfig:
    step_size: float = 0.1
    max_iters: int = 5000
    stop_tol: float = 1e-4
    line_search: bool = True
    method: str = "gauss-newton"

    def __post_init__(self):
        if self.step_size <= 0 or self.max_iters < 0 or self.stop_tol <= 0:
            raise ValueError("invalid DescentConfig")
        if self.method not in ("gauss-newton", "gradient"):
            raise ValueError(f"unknown descent method {self.method!r}")


@dataclass
class DescentResult:
    immersion: Immersion
    history: list[tuple[int, float, float]] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    converged: bool = False
    lagrangian_defect: float = float("nan")
    status: str = ""

    def history_csv(self) -> str:
        rows = ["iter,F_lambda,residual_sup"]
        rows += [f"{i},{fl!r},{r!r}" for i, fl, r in self.history]
        return "\n".join(rows) + "\n"


def _color_period(n: int, reach: int = STENCIL_REACH) -> int:
    need = 2 * reach + 1
    for p in range(need, n + 1):
        if n % p == 0:
            return p
    return n


def _residual_vector(F: Immersion, lam: float) -> np.ndarray:
    return self_similar_residual(F, lam).field.ravel()


def residual_jacobian(F: Immersion, lam: float, nu: np.ndarray, eps: float = 1e-6) -> sp.csr_matrix:
    """Sparse Jacobian of the residual field with respect to normal displacements.

    Built by central differences with a periodic colouring; the residual at a
    node only sees points within ``STENCIL_REACH`` grid steps.
    """
    sizes = F.grid.sizes
    D = F.points.shape[-1]
    codim = nu.shape[-2]
    periods = [_color_period(n) for n in sizes]
    index = np.arange(F.grid.n_nodes).reshape(sizes)
    rows, cols, vals = [], [], []
    r = STENCIL_REACH
    offsets = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * F.m, indexing="ij"), axis=-1).reshape(-1, F.m)
    for color in np.ndindex(*periods):
        mask = np.ones(sizes, dtype=bool)
        for ax, (c, p) in enumerate(zip(color, periods)):
            sel = (np.arange(sizes[ax]) % p) == c
            shape = [1] * F.m
            shape[ax] = sizes[ax]
            mask &= sel.reshape(shape)
        nodes = np.argwhere(mask)
        for c in range(codim):
            V = np.zeros_like(F.points)
            V[mask] = nu[mask][:, c, :]
            rp = self_similar_residual(_displace(F, V, eps), lam).field
            rm = self_similar_residual(_displace(F, V, -eps), lam).field
            dr = (rp - rm) / (2.0 * eps)
            for off in offsets:
                tgt = (nodes + off) % np.array(sizes)
                tgt_t = tuple(tgt.T)
                src_idx = index[tuple(nodes.T)]
                tgt_idx = index[tgt_t]
                block = dr[tgt_t]  # (k, D)
                for d in range(D):
                    rows.append(tgt_idx * D + d)
                    cols.append(src_idx * codim + c)
                    vals.append(block[:, d])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    shape = (F.grid.n_nodes * D, F.grid.n_nodes * codim)
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def minimize(F0: Immersion, lam: float, cfg: DescentConfig = DescentConfig()) -> DescentResult:
    """Drive F0 to a self-similar solution with parameter lam.

    Stops when sup |H - lam (grad f)^perp| < cfg.stop_tol.  ``objective``
    records the quantity the line search controls (half the squared residual
    for Gauss-Newton, F_lam for gradient descent); it never increases when
    ``line_search`` is on.
    """
    if cfg.method == "gradient":
        return _gradient_descent(F0, lam, cfg)
    F = F0
    result = DescentResult(F)
    mu = 1e-6
    rejects = 0
    for it in range(cfg.max_iters + 1):
        res = self_similar_residual(F, lam)
        r = res.field.ravel()
        energy = 0.5 * float(r @ r)
        result.immersion = F
        result.history.append((it, weighted_volume(F, lam), res.sup_norm))
        result.objective.append(energy)
        if res.sup_norm < cfg.stop_tol:
            result.converged = True
            result.status = "converged"
            break
        if it == cfg.max_iters:
            result.status = "max-iters"
            break
        nu = normal_frame(F)
        J = residual_jacobian(F, lam, nu)
        JtJ = (J.T @ J).tocsc()
        grad = J.T @ r
        scale = float(JtJ.diagonal().mean())
        eye = sp.identity(JtJ.shape[0], format="csc")
        while True:
            delta = spsolve(JtJ + (mu * scale) * eye, -grad)
            step = delta.reshape(F.grid.sizes + (nu.shape[-2],))
            big = float(np.max(np.abs(step)))
            if big > cfg.step_size:
                step *= cfg.step_size / big
            V = np.einsum("...c,...cd->...d", step, nu)
            try:
                trial = _displace(F, V, 1.0)
                r_trial = _residual_vector(trial, lam)
            except DegenerateImmersionError:
                trial, r_trial = None, None
            if trial is not None and (not cfg.line_search or 0.5 * float(r_trial @ r_trial) < energy):
                F = trial
                mu = max(mu / 3.0, 1e-12)
                rejects = 0
                break
            mu *= 4.0
            rejects += 1
            if rejects >= 10 and trial is None:
                result.status = "immersivity-loss"
                raise DescentError("immersivity lost during descent", result)
            if rejects >= 30:
                result.status = "diverged"
                raise DescentError("line search failed to reduce the residual", result)
    result.lagrangian_defect = lagrangian_defect_norm(result.immersion)
    return result


def _gradient_descent(F0: Immersion, lam: float, cfg: DescentConfig) -> DescentResult:
    """Normal gradient descent of F_lam: F <- F + dt (H - lam grad f^perp)."""
    F = F0
    result = DescentResult(F)
    increases = 0
    h_min = min(F.grid.spacings)
    for it in range(cfg.max_iters + 1):
        geo = F.extrinsic
        res = self_similar_residual(F, lam)
        value = weighted_volume(F, lam)
        result.immersion = F
        result.history.append((it, value, res.sup_norm))
        result.objective.append(value)
        if res.sup_norm < cfg.stop_tol:
            result.converged = True
            result.status = "converged"
            break
        if it == cfg.max_iters:
            result.status = "max-iters"
            break
        lam_min = float(np.min(np.linalg.eigvalsh(geo.induced_metric)[..., 0]))
        dt = min(cfg.step_size, 0.25 * h_min**2 * lam_min / max(geo.sup_A, 1e-12))
        while True:
            try:
                trial = _displace(F, res.field, dt)
                new_value = weighted_volume(trial, lam)
            except DegenerateImmersionError as exc:
                result.status = "immersivity-loss"
                raise DescentError(str(exc), result) from exc
            if not cfg.line_search or new_value <= value or dt < 1e-14:
                break
            dt *= 0.5
        increases = increases + 1 if new_value > value else 0
        if increases >= 10:
            result.status = "diverged"
            raise DescentError("F_lambda increased 10 consecutive steps", result)
        F = trial
    result.lagrangian_defect = lagrangian_defect_norm(result.immersion)
    return result
