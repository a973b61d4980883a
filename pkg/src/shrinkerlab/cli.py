"""Command-line entry point ``shrinkerlab``.

Exit codes: 0 when every applicable check passes, 1 when a check fails,
2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import audit, examples
from .background import BackgroundError, SolitonBackground
from .flow import FlowError, FlowState, convergence_monitor, monitor_csv, run_to_singularity
from .functional import DescentConfig, DescentError, minimize
from .immersion import (
    DegenerateImmersionError,
    ImmersionFileError,
    conformal_mean_curvature,
    gauss_consistency,
    lagrangian_defect_norm,
    read_immersion,
    self_similar_residual,
    write_immersion,
)
from .spectral import assemble_drift, bakry_emery, diameter_bound_audit, spectrum
from .suite import SuiteConfig, run_suite, suite_json, suite_markdown

THREADS_ENV = "SHRINKERLAB_THREADS"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    tol_lag: float = audit.TOL_LAG
    tol_residual: float = audit.TOL_RESIDUAL
    eig_tol: float = audit.EIG_TOL
    diam_tol: float = 0.02
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("tol_lag", "tol_residual", "eig_tol", "diam_tol"):
            if not getattr(self, name) > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.threads < 1:
            raise UsageError("thread count must be >= 1")


def _dump(doc, path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read(path: str):
    try:
        return read_immersion(path)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read {path}: no such file") from exc
    except (ImmersionFileError, BackgroundError) as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


# -- commands ----------------------------------------------------------------


def cmd_make(args, cfg: RunConfig) -> int:
    kind = args.kind
    if kind == "circle":
        F = examples.circle(args.r, args.n, noise=args.noise, seed=cfg.seed)
    elif kind == "torus":
        radii = _floats(args.radii)
        if len(radii) != 2:
            raise UsageError("--radii takes two values a,b")
        F = examples.product_torus(radii, args.n)
    elif kind == "al":
        try:
            F = examples.abresch_langer(args.p, args.q, args.n)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    elif kind == "al-circle":
        F = examples.al_times_circle(args.p, args.q, args.n, args.n2)
    elif kind == "great-circle":
        F = examples.great_circle(args.n, args.f0, args.tilt)
    elif kind == "random":
        F = examples.random_lagrangian_torus(cfg.seed, args.n)
    elif kind == "perturb":
        if not args.input:
            raise UsageError("make perturb needs --in")
        F = examples.perturbed(_read(args.input), args.amp, args.mode, seed=cfg.seed)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(kind)
    write_immersion(F, args.out)
    return EXIT_OK


def cmd_geometry(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    geo = F.geometry
    Hn = geo.ambient_norm(geo.mean_curvature)
    doc = {
        "grid": list(F.grid.sizes),
        "background": F.background.ident,
        "sup_A": geo.sup_A,
        "H_min": float(np.min(Hn)),
        "H_max": float(np.max(Hn)),
        "lagrangian_defect": lagrangian_defect_norm(F),
        "gauss_consistency": gauss_consistency(F),
        "shrinker_residual": self_similar_residual(F, -0.5).sup_norm,
        "conformal_H": conformal_mean_curvature(F, -0.5),
        "metric_min_eigenvalue": float(np.min(np.linalg.eigvalsh(geo.induced_metric)[..., 0])),
    }
    _dump(doc, args.out)
    return EXIT_OK


def cmd_audit(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    reports = [
        audit.trace_identity_audit(F, tol_lag=cfg.tol_lag),
        audit.shrinker_certificate(F, cfg.tol_lag, cfg.tol_residual, cfg.eig_tol, cfg.diam_tol),
    ]
    if args.expander_lambda is not None:
        if not args.expander_lambda > 0:
            raise UsageError("--expander-lambda must be positive")
        reports.append(audit.expander_audit(F, args.expander_lambda, tol_lag=cfg.tol_lag))
    ok = all(r.passed for r in reports)
    _dump({"pass": ok, "reports": [r.as_dict() for r in reports]}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_minimize(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    dcfg = DescentConfig(step_size=args.step, max_iters=args.max_iters, stop_tol=args.tol,
                         method=args.method)
    try:
        result = minimize(F, args.lam, dcfg)
        status = 0
    except DescentError as exc:
        result = exc.result
        print(f"descent aborted: {exc}", file=sys.stderr)
        status = 1
    write_immersion(result.immersion, args.out)
    if args.history:
        Path(args.history).write_text(result.history_csv(), encoding="utf-8")
    else:
        sys.stdout.write(result.history_csv())
    return EXIT_OK if (status == 0 and result.converged) else EXIT_FAIL


def cmd_flow(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    if F.background.kind != "flat":
        raise UsageError("flow runs on the flat background only")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        run = run_to_singularity(FlowState(F), stop_A=args.stop_A, sample_every=args.sample_every)
    except FlowError as exc:
        print(f"flow: {exc}", file=sys.stderr)
        return EXIT_FAIL
    residuals = dict(convergence_monitor(run.states, run.T_est))
    index = ["file,t"]
    for k, st in enumerate(run.states):
        name = f"state_{k:05d}.imm"
        write_immersion(st.immersion, out / name)
        index.append(f"{name},{st.t!r}")
    (out / "states.csv").write_text("\n".join(index) + "\n", encoding="utf-8")
    (out / "monitor.csv").write_text(monitor_csv(run, residuals), encoding="utf-8")
    _dump({"T_est": run.T_est, "typeI_sup": run.typeI_sup, "samples": len(run.states),
           "steps": len(run.monitor) - 1}, None)
    return EXIT_OK


def cmd_spectrum(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    if args.k < 1:
        raise UsageError("-k must be positive")
    try:
        rep = spectrum(assemble_drift(F), k=args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = ["index,eigenvalue"] + [f"{i},{float(v)!r}" for i, v in enumerate(rep.eigenvalues)]
    csv = "\n".join(rows) + "\n"
    if args.csv:
        Path(args.csv).write_text(csv, encoding="utf-8")
    else:
        sys.stdout.write(csv)
    alignment = rep.alignment if math.isfinite(rep.alignment) else None
    doc = {"target_match": {"target": 1.0, "eigenvalue": rep.closest_to_one, "alignment": alignment,
                            "eigenspace_dim": rep.eigenspace_dim}}
    _dump(doc, args.out)
    return EXIT_OK


def cmd_diameter_audit(args, cfg: RunConfig) -> int:
    F = _read(args.input)
    a = diameter_bound_audit(F, cfg.diam_tol)
    doc = a.as_dict()
    doc["bakry_emery_cross_check"] = bakry_emery(F).cross_check
    _dump(doc, args.out)
    return EXIT_OK if a.passed else EXIT_FAIL


def cmd_theorem_suite(args, cfg: RunConfig) -> int:
    bg = None
    if args.background:
        try:
            bg = SolitonBackground.parse(args.background)
        except (BackgroundError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    scfg = SuiteConfig(seed=cfg.seed, quick=args.quick, background=bg)

    def log(r):
        print(f"row {r.row:2d} {'PASS' if r.passed else 'FAIL'} {r.title} ({r.seconds:.1f} s)",
              file=sys.stderr)

    results = run_suite(scfg, log=log)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(suite_json(results, scfg), encoding="utf-8")
    (out / "summary.md").write_text(suite_markdown(results, scfg), encoding="utf-8")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="shrinkerlab",
        description="Lagrangian self-similar solutions in Kaehler-Ricci solitons: generate, flow, audit.",
        epilog=f"Thread count: --threads or the {THREADS_ENV} environment variable (default 1).",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--tol-lag", type=float, default=audit.TOL_LAG)
    p.add_argument("--tol-residual", type=float, default=audit.TOL_RESIDUAL)
    p.add_argument("--eig-tol", type=float, default=audit.EIG_TOL)
    p.add_argument("--diam-tol", type=float, default=0.02)
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("make", help="generate an immersion file")
    m.add_argument("kind", choices=["circle", "torus", "al", "al-circle", "great-circle", "random", "perturb"])
    m.add_argument("-o", "--out", required=True)
    m.add_argument("-n", type=int, default=256, help="grid size per direction")
    m.add_argument("--r", type=float, default=math.sqrt(2.0))
    m.add_argument("--noise", type=float, default=0.0, help="relative smooth radial noise")
    m.add_argument("--radii", default="1.4142135623730951,1.4142135623730951")
    m.add_argument("--p", type=int, default=2)
    m.add_argument("--q", type=int, default=3)
    m.add_argument("--n2", type=int, default=32, help="circle factor size for al-circle")
    m.add_argument("--f0", type=float, default=1.0)
    m.add_argument("--tilt", type=float, default=0.0)
    m.add_argument("--in", dest="input")
    m.add_argument("--amp", type=float, default=0.05)
    m.add_argument("--mode", type=int, default=2)
    m.set_defaults(func=cmd_make)

    g = sub.add_parser("geometry", help="summary of the induced geometry (JSON)")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--out")
    g.set_defaults(func=cmd_geometry)

    a = sub.add_parser("audit", help="trace identities and shrinker certificate (JSON)")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--expander-lambda", type=float)
    a.add_argument("--out")
    a.set_defaults(func=cmd_audit)

    mi = sub.add_parser("minimize", help="drive an immersion to a self-similar solution",
                        description="History CSV columns: iter, F_lambda, residual_sup.")
    mi.add_argument("--in", dest="input", required=True)
    mi.add_argument("--out", required=True)
    mi.add_argument("--lambda", dest="lam", type=float, default=-0.5)
    mi.add_argument("--tol", type=float, default=1e-4)
    mi.add_argument("--max-iters", type=int, default=5000)
    mi.add_argument("--step", type=float, default=0.1)
    mi.add_argument("--method", choices=["gauss-newton", "gradient"], default="gauss-newton")
    mi.add_argument("--history", help="CSV path (default: stdout)")
    mi.set_defaults(func=cmd_minimize)

    f = sub.add_parser("flow", help="mean curvature flow to the first singularity",
                       description="monitor.csv columns: t, maxA, typeI, rescaled_residual. "
                                   "states.csv maps sampled immersion files to times.")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--stop-A", dest="stop_A", type=float)
    f.add_argument("--sample-every", type=int, default=50)
    f.add_argument("--out-dir", default="flow_out")
    f.set_defaults(func=cmd_flow)

    s = sub.add_parser("spectrum", help="eigenvalues of the drift Laplacian",
                       description="CSV columns: index, eigenvalue (of -Delta_phi, ascending).")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("-k", type=int, default=12)
    s.add_argument("--csv")
    s.add_argument("--out", help="JSON target_match path (default: stdout)")
    s.set_defaults(func=cmd_spectrum)

    d = sub.add_parser("diameter-audit", help="diameter lower bound audit (JSON)")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diameter_audit)

    t = sub.add_parser("theorem-suite", help="run the acceptance matrix",
                       description="Writes summary.json and summary.md to --out-dir.")
    t.add_argument("--quick", action="store_true")
    t.add_argument("--background")
    t.add_argument("--out-dir", default="suite_out")
    t.set_defaults(func=cmd_theorem_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, "1"))
        cfg = RunConfig(args.command, args.tol_lag, args.tol_residual, args.eig_tol, args.diam_tol,
                        args.seed, threads)
        with threadpool_limits(limits=cfg.threads):
            return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if isinstance(exc, DegenerateImmersionError):
            print(f"error: degenerate immersion: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
