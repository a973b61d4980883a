"""Auditors for the trace identities, the shrinker certificate and the expander obstruction.

Each auditor returns an :class:`AuditReport`: a list of named checks with a
residual (or margin), a tolerance and a verdict.  Checks whose preconditions
fail are kept in the report with ``applicable=False`` so that nothing is
silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .background import inner
from .immersion import Immersion, divergence_laplacian, integrate, lagrangian_defect_norm, self_similar_residual
from .spectral import (
    DEGENERATE_TOL,
    DIAM_TOL,
    assemble_drift,
    diameter_bound_audit,
    eigen_identity_check,
    identity_eigenfunction,
    spectrum,
)

SHRINKER_LAMBDA = -0.5
TOL_LAG = 1e-6
TOL_RESIDUAL = 1e-4
EIG_TOL = 2e-2
TOL_IDENTITY = 1e-3
TOL_INTEGRAL = 1e-5
TOL_JSPLIT = 1e-8

# formula strings attached to each check
ANCHOR_LAPLACIAN_TRACE = "Delta(f o F) = tr^T Hess_g f + g(grad f, H)"
ANCHOR_HESSIAN_TRACE = "tr^T Hess_g f = m - tr^T Ric(g)"
ANCHOR_RICCI_TRACE = "tr^T Ric(g) = R(g)/2 (Lagrangian)"
ANCHOR_JSPLIT = "tr^T Ric = 1/2 sum Ric(e_i, e_i) + 1/2 sum Ric(J e_i, J e_i)"
ANCHOR_LAG = "F^* omega = 0"
ANCHOR_SHRINKER = "H = -1/2 (grad f)^perp"
ANCHOR_DEGENERATE = "F(L) not contained in {f = m - C0/2}"
ANCHOR_EIGEN = "L u = -u for u = (m/2 - C0/4) - phi, L = Delta - grad phi . grad"
ANCHOR_EIGENVALUE = "1 is an eigenvalue of -L"
ANCHOR_DIAM = "diam(L, F^*g) >= pi / sqrt(3/4 + (m/2)(K0 + A0^2))"
ANCHOR_FLL = "1 >= sup_s 4s(1-s) pi^2/d^2 + s kappa"
ANCHOR_DIVERGENCE = "0 = int_L Delta(f o F) d mu"
ANCHOR_EXPANDER_ID = "Delta(f o F) = m - R/2 + g(grad f, H)"
ANCHOR_MARGIN = "m - R/2 + |H|^2 / lambda > 0 when R < 2m"
ANCHOR_EXPANDER = "H = lambda (grad f)^perp, lambda > 0"


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    value: float
    tolerance: float
    passed: bool
    applicable: bool = True
    required: bool = True
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "value": _json_float(self.value),
            "tolerance": _json_float(self.tolerance),
            "pass": bool(self.passed),
            "applicable": bool(self.applicable),
            "required": bool(self.required),
            "note": self.note,
        }


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass
class AuditReport:
    title: str
    checks: list[Check] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """True when every applicable required check passes."""
        return all(c.passed for c in self.checks if c.applicable and c.required)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, *args, **kwargs) -> Check:
        c = Check(*args, **kwargs)
        self.checks.append(c)
        return c

    def as_dict(self) -> dict:
        return {
            "title": self.title,
            "pass": self.passed,
            "metadata": self.metadata,
            "checks": [c.as_dict() for c in self.checks],
        }


def _metadata(F: Immersion, lam: float | None) -> dict:
    meta = {"grid": list(F.grid.sizes), "background": F.background.ident, "m": F.m}
    if lam is not None:
        meta["lambda"] = lam
    return meta


def _tangential_trace(geo, tensor: np.ndarray, frame: np.ndarray | None = None) -> np.ndarray:
    E = geo.frame_vectors if frame is None else frame
    return np.einsum("...ad,...de,...ae->...", E, tensor, E)


def laplacian_of_potential(F: Immersion) -> np.ndarray:
    return F.geometry.laplacian(F.potential(), F.grid.spacings)


def trace_identities(F: Immersion) -> dict[str, np.ndarray]:
    """Nodewise residuals of the three trace identities plus the J-frame split."""
    geo = F.geometry
    bg = F.background
    P = F.points
    lap = laplacian_of_potential(F)
    Hf = bg.hess_f(P)
    Ric = bg.ricci(P)
    tr_hess = _tangential_trace(geo, Hf)
    tr_ric = _tangential_trace(geo, Ric)
    gH = inner(geo.ambient_metric, bg.grad_f(P), geo.mean_curvature)
    E = geo.frame_vectors
    JE = np.einsum("...de,...ae->...ad", bg.J_matrix(P), E)
    split = 0.5 * tr_ric + 0.5 * _tangential_trace(geo, Ric, JE)
    return {
        "laplacian-trace": lap - (tr_hess + gH),
        "hessian-trace": tr_hess - (F.m - tr_ric),
        "ricci-trace": tr_ric - 0.5 * bg.scalar_curvature,
        "jsplit": split - tr_ric,
    }


def trace_identity_audit(F: Immersion, tol: float = TOL_IDENTITY, tol_lag: float = TOL_LAG) -> AuditReport:
    """Nodewise check of the trace-identity chain leading to Delta(f o F) = m - R/2 + g(grad f, H)."""
    rep = AuditReport("trace-identities", metadata=_metadata(F, None))
    res = trace_identities(F)
    sup = {k: float(np.max(np.abs(v))) for k, v in res.items()}
    defect = lagrangian_defect_norm(F)
    lag = defect < tol_lag
    rep.metadata["lagrangian_defect"] = defect
    rep.add("laplacian-trace", ANCHOR_LAPLACIAN_TRACE, sup["laplacian-trace"], tol, sup["laplacian-trace"] < tol)
    rep.add("hessian-trace", ANCHOR_HESSIAN_TRACE, sup["hessian-trace"], tol, sup["hessian-trace"] < tol)
    note = "" if lag else f"skipped: not Lagrangian (defect {defect:.3e} >= {tol_lag:.1e})"
    rep.add("ricci-trace", ANCHOR_RICCI_TRACE, sup["ricci-trace"], tol, lag and sup["ricci-trace"] < tol, applicable=lag, note=note)
    rep.add("ricci-trace-jframe", ANCHOR_JSPLIT, sup["jsplit"], TOL_JSPLIT, lag and sup["jsplit"] < TOL_JSPLIT,
            applicable=lag, note=note)
    return rep


def shrinker_certificate(
    F: Immersion,
    tol_lag: float = TOL_LAG,
    tol_residual: float = TOL_RESIDUAL,
    eig_tol: float = EIG_TOL,
    diam_tol: float = DIAM_TOL,
) -> AuditReport:
    """Hypotheses and conclusions of the diameter theorem for lambda = -1/2 shrinkers.

    Failing the Lagrangian or shrinker hypothesis skips the downstream
    checks.  Membership of the degenerate set {f = m - C0/2} is recorded as a
    flag (``theorem_applies`` false) and the eigenvalue-one check is then not
    applicable; the diameter bound is still audited.
    """
    rep = AuditReport("shrinker-certificate", metadata=_metadata(F, SHRINKER_LAMBDA))
    bg = F.background
    defect = lagrangian_defect_norm(F)
    residual = self_similar_residual(F, SHRINKER_LAMBDA).sup_norm
    level = F.m - 0.5 * bg.C0
    deviation = float(np.max(np.abs(F.potential() - level)))
    degenerate = deviation < DEGENERATE_TOL
    rep.add("lagrangian", ANCHOR_LAG, defect, tol_lag, defect < tol_lag)
    rep.add("shrinker-residual", ANCHOR_SHRINKER, residual, tol_residual, residual < tol_residual)
    rep.add("non-degenerate", ANCHOR_DEGENERATE, deviation, DEGENERATE_TOL, not degenerate, required=False,
            note="degenerate: inside the excluded level set" if degenerate else "")
    hypotheses = defect < tol_lag and residual < tol_residual
    rep.metadata["degenerate"] = degenerate
    rep.metadata["theorem_applies"] = bool(hypotheses and not degenerate)
    skip = "" if hypotheses else "skipped: hypotheses fail"
    h2 = max(F.grid.spacings) ** 2
    eig_applicable = hypotheses and not degenerate
    if hypotheses:
        op = assemble_drift(F)
        ident = eigen_identity_check(F, op)
        eig_res_tol = 10.0 * (h2 + residual)
        rep.add("eigen-identity", ANCHOR_EIGEN, ident.residual_sup, eig_res_tol,
                ident.residual_sup < eig_res_tol)
        if eig_applicable:
            spec = spectrum(op, k=12, target=1.0)
            gap = abs(spec.closest_to_one - 1.0)
            ok = gap < eig_tol and spec.alignment >= 0.999
            rep.add("eigenvalue-one", ANCHOR_EIGENVALUE, gap, eig_tol, ok,
                    note=f"eigenvalue {spec.closest_to_one!r}, alignment {spec.alignment!r}")
        else:
            rep.add("eigenvalue-one", ANCHOR_EIGENVALUE, math.nan, eig_tol, False, applicable=False,
                    note="degenerate: u = (m/2 - C0/4) - phi vanishes identically")
        audit = diameter_bound_audit(F, diam_tol)
        rep.add("diameter-bound", ANCHOR_DIAM, audit.diam - audit.bound * (1.0 - diam_tol), 0.0,
                audit.diam >= audit.bound * (1.0 - diam_tol),
                note=f"diam {audit.diam!r}, bound {audit.bound!r}")
        rep.add("fll", ANCHOR_FLL, audit.fll_sup, 1.0 + 1e-6, audit.fll_sup <= 1.0 + 1e-6)
        rep.metadata["diameter_audit"] = audit.as_dict()
    else:
        for name, anchor in (("eigen-identity", ANCHOR_EIGEN), ("eigenvalue-one", ANCHOR_EIGENVALUE),
                             ("diameter-bound", ANCHOR_DIAM), ("fll", ANCHOR_FLL)):
            rep.add(name, anchor, math.nan, math.nan, False, applicable=False, note=skip)
    return rep


@dataclass(frozen=True)
class ExpanderQuantities:
    integral: float
    integral_covariant: float
    pointwise: np.ndarray
    integrand: np.ndarray
    margin: float
    hypothesis_violated: bool
    expander_residual: float


def expander_quantities(F: Immersion, lam: float) -> ExpanderQuantities:
    if not lam > 0:
        raise ValueError(f"expander audit needs lambda > 0, got {lam}")
    geo = F.geometry
    bg = F.background
    lap = divergence_laplacian(F, F.potential(), geo)
    R = bg.scalar_curvature
    gH = inner(geo.ambient_metric, bg.grad_f(F.points), geo.mean_curvature)
    H2 = inner(geo.ambient_metric, geo.mean_curvature, geo.mean_curvature)
    integrand = F.m - 0.5 * R + H2 / lam
    return ExpanderQuantities(
        integral=integrate(F, lap, geo),
        integral_covariant=integrate(F, laplacian_of_potential(F), geo),
        pointwise=lap - (F.m - 0.5 * R + gH),
        integrand=integrand,
        margin=float(np.min(integrand)),
        hypothesis_violated=not R < 2 * F.m,
        expander_residual=self_similar_residual(F, lam).sup_norm,
    )


def expander_audit(F: Immersion, lam: float, tol: float = TOL_IDENTITY, tol_integral: float = TOL_INTEGRAL,
                   tol_lag: float = TOL_LAG) -> AuditReport:
    """Infeasibility certificate for compact Lagrangian expanders.

    If F were an expander, Delta(f o F) would equal m - R/2 + |H|^2/lambda,
    which is positive when R < 2m, while its integral over a closed L
    vanishes.  A positive margin together with a vanishing integral rules the
    expander equation out.
    """
    q = expander_quantities(F, lam)
    rep = AuditReport("expander-obstruction", metadata=_metadata(F, lam))
    defect = lagrangian_defect_norm(F)
    lag = defect < tol_lag
    rep.add("lagrangian", ANCHOR_LAG, defect, tol_lag, lag)
    rep.add("divergence-integral", ANCHOR_DIVERGENCE, abs(q.integral), tol_integral,
            abs(q.integral) < tol_integral)
    point = float(np.max(np.abs(q.pointwise)))
    rep.add("pointwise-identity", ANCHOR_EXPANDER_ID, point, tol, lag and point < tol, applicable=lag,
            note="" if lag else "skipped: not Lagrangian")
    if q.hypothesis_violated:
        rep.add("margin", ANCHOR_MARGIN, q.margin, 0.0, False, applicable=False,
                note="hypothesis-violation: R >= 2m, no contradiction")
    else:
        rep.add("margin", ANCHOR_MARGIN, q.margin, 0.0, q.margin > 0.0)
    rep.add("not-an-expander", ANCHOR_EXPANDER, q.expander_residual, TOL_RESIDUAL,
            q.expander_residual >= TOL_RESIDUAL, required=False)
    contradiction = (not q.hypothesis_violated) and q.margin > 0 and abs(q.integral) < tol_integral
    rep.metadata.update(
        margin=q.margin,
        integral=q.integral,
        integral_covariant=q.integral_covariant,
        hypothesis_violation=q.hypothesis_violated,
        contradiction=contradiction,
        explanation=(
            "positive margin and vanishing integral: the expander equation cannot hold"
            if contradiction
            else "R >= 2m: the obstruction does not apply"
            if q.hypothesis_violated
            else "no contradiction established"
        ),
    )
    return rep


def divergence_integrals(F: Immersion, count: int = 5, seed: int = 0, covariant: bool = False) -> list[float]:
    """|int Delta u d mu| for u = f o F and ``count`` random trigonometric fields.

    ``covariant`` selects the Christoffel form of the Laplacian, whose
    integral vanishes only up to truncation error.
    """
    geo = F.geometry
    hs = F.grid.spacings
    rng = np.random.default_rng(seed)
    coords = F.grid.coords()
    fields = [F.potential()]
    for _ in range(count):
        k = rng.integers(-3, 4, size=F.m)
        fields.append(np.cos(coords @ k + rng.uniform(0, 2 * math.pi)) + 0.3 * np.sin(coords @ (2 * k)))
    lap = (lambda u: geo.laplacian(u, hs)) if covariant else (lambda u: divergence_laplacian(F, u, geo))
    return [abs(integrate(F, lap(u), geo)) for u in fields]


def degenerate_deviation(F: Immersion) -> float:
    return float(np.max(np.abs(identity_eigenfunction(F))))
