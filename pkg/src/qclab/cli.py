"""Command-line driver for the chain experiments.

Subcommands: profile | bands | fracture | continue | plan.  All outputs go
under --out with fixed filenames (bands_alpha_{n}_{d}.csv, plan.csv,
trace_q{q}.csv, report.json, plus rendered PNG figures unless
--no-figures).  Exit codes: 0 success for the command's semantics, 2
hypothesis or admissibility violation, 3 fracture where none was expected,
4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from qclab.config import ConfigError, ExperimentConfig
from qclab.continuation import (
    ExecutionAborted,
    LoadPath,
    LoadPlan,
    PlanError,
    QcContractionProfile,
    StallError,
    band_table,
    is_admissible,
    plan_endpoint,
    plan_uniform,
    run_plan,
    staircase_table,
    supersolution,
)
from qclab.potential import LennardJones, compute_profile, verify_assumptions
from qclab.qc import QcMesh
from qclab.solver import solve_at_load

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_FRACTURE = 3
EXIT_CONFIG = 4

BAND_RATES = (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2), Fraction(8, 9))


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # usage problems are configuration errors
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qclab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("profile", "potential landmarks and shape-assumption report"),
        ("bands", "contraction-window band tables around the loading response"),
        ("fracture", "single-step full-load experiment (fracture demo)"),
        ("continue", "plan and execute a continuation run"),
        ("plan", "plan a continuation run without executing it"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--M", type=int, help="atom half-count")
        p.add_argument("--N", type=int, help="repatom half-count")
        p.add_argument("--K", type=int, help="atomistic half-width")
        p.add_argument("--scale", type=float, help="load path scale Phi(s) = scale * s")
        p.add_argument("--alpha", type=str, help="contraction rate, e.g. 8/9")
        p.add_argument("--epsilon", type=float, help="target tolerance")
        p.add_argument("--planner", type=str, choices=("endpoint", "uniform", "single-step"),
                       help="continuation planner")
        p.add_argument("--seed", type=int, help="seed recorded with the experiment")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.override(M=args.M, N=args.N, K=args.K, scale=args.scale,
                        alpha=args.alpha, epsilon=args.epsilon,
                        planner=args.planner, seed=args.seed)


def _setup(cfg: ExperimentConfig):
    pot = LennardJones()
    prof = compute_profile(pot)
    return pot, prof


def _write_report(out: Path, cfg: ExperimentConfig, command: str, results: dict) -> None:
    payload = {
        "command": command,
        "config": cfg.as_dict(),
        "config_sha256": cfg.sha256(),
        "results": results,
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def cmd_profile(cfg: ExperimentConfig, out: Path, figures: bool) -> int:
    pot, prof = _setup(cfg)
    report = verify_assumptions(pot, prof)
    print(f"a0       = {prof.a0:.12f}")
    print(f"r1       = {prof.r_tilde_1:.12f}")
    print(f"r2       = {prof.r_tilde_2:.12f}")
    print(f"D~       = {prof.d_tilde:.12f}")
    print(f"r*       = {prof.r_star:.12f}")
    print(f"load max = {prof.phi_max:.12f}")
    for c in report.checks:
        print(f"[{'pass' if c.passed else 'FAIL'}] {c.name}" + (f"  ({c.detail})" if c.detail else ""))
    results = {
        "a0": prof.a0, "r_tilde_1": prof.r_tilde_1, "r_tilde_2": prof.r_tilde_2,
        "d_tilde": prof.d_tilde, "r_star": prof.r_star, "phi_max": prof.phi_max,
        "assumptions": {c.name: c.passed for c in report.checks},
        "all_assumptions_pass": report.all_passed,
    }
    _write_report(out, cfg, "profile", results)
    if figures:
        from qclab.figures import render_potential
        render_potential(out / "potential.png", pot, prof)
    return EXIT_OK if report.all_passed else EXIT_HYPOTHESIS


def cmd_bands(cfg: ExperimentConfig, out: Path, figures: bool) -> int:
    pot, prof = _setup(cfg)
    path = LoadPath(scale=cfg.scale)
    tables = {}
    meta = {}
    for rate in BAND_RATES:
        profile = QcContractionProfile(pot, prof, float(rate), path)
        rows = band_table(profile, points=512)
        name = f"bands_alpha_{rate.numerator}_{rate.denominator}.csv"
        _write_rows(out / name, ["s", "r", "r_lower", "r_upper"], rows)
        tables[f"{rate.numerator}/{rate.denominator}"] = rows
        meta[f"{rate.numerator}/{rate.denominator}"] = {
            "terminal_s": profile.terminal_s, "rows": int(rows.shape[0]), "file": name,
        }
        print(f"alpha={rate}: band terminates at s = {profile.terminal_s:.6f} -> {name}")
    _write_report(out, cfg, "bands", {"bands": meta})
    if figures:
        from qclab.figures import render_bands
        render_bands(out / "bands.png", tables)
    return EXIT_OK


def cmd_fracture(cfg: ExperimentConfig, out: Path, figures: bool) -> int:
    pot, prof = _setup(cfg)
    mesh = QcMesh.graded(cfg.M, cfg.N, cfg.K, prof.a0)
    n = mesh.n_elements
    load = cfg.scale   # full load in a single step
    trace = solve_at_load(mesh, pot, np.full(n, prof.a0), np.full(n, load),
                          steps=1, fracture_spacing=prof.fracture_spacing)
    fractured = trace.status == "fracture"
    if fractured:
        print(f"fracture at interface element j = {trace.fracture_element} "
              f"(atomistic region |j| <= {cfg.K})")
        _write_rows(out / "trace_q1.csv", ["iter", "max_spacing"], trace.inner_history)
    else:
        print(f"no fracture: status = {trace.status}")
        trace.to_csv(out / "trace_q1.csv")
    trace.to_json(out / "trace_q1.json")
    _write_report(out, cfg, "fracture", {
        "status": trace.status,
        "fracture_element": trace.fracture_element,
        "fracture_threshold": prof.fracture_spacing,
        "load": load,
    })
    if figures and trace.inner_history:
        from qclab.figures import render_fracture
        render_fracture(out / "fracture.png", trace.inner_history, trace.final_r,
                        prof.fracture_spacing, trace.fracture_element)
    # fracture is the expected outcome of this demonstration
    return EXIT_OK if fractured else 1


def _build_plan(cfg: ExperimentConfig, profile: QcContractionProfile) -> LoadPlan:
    if cfg.planner == "endpoint":
        return plan_endpoint(cfg.epsilon, cfg.alpha_value, 0.0, profile)
    if cfg.planner == "uniform":
        return plan_uniform(cfg.epsilon, profile).plan
    s = np.array([0.0, 1.0])
    P = np.array([1])
    return LoadPlan(s=s, P=P, gamma=supersolution(s, P, cfg.alpha_value, 0.0, profile),
                    alpha=cfg.alpha_value)


def cmd_plan(cfg: ExperimentConfig, out: Path, figures: bool) -> int:
    pot, prof = _setup(cfg)
    profile = QcContractionProfile(pot, prof, cfg.alpha_value, LoadPath(scale=cfg.scale))
    plan = _build_plan(cfg, profile)
    plan.to_csv(out / "plan.csv")
    plan.to_json(out / "plan.json", meta=_profile_meta(cfg, profile))
    admissible = is_admissible(plan, cfg.epsilon, profile)
    print(f"{cfg.planner} plan: Q = {plan.Q}, work = {plan.work}, "
          f"gamma_Q = {plan.gamma[-1]:.3e}, admissible = {admissible.admissible}")
    _write_report(out, cfg, "plan", {
        "Q": plan.Q, "work": plan.work, "gamma_Q": float(plan.gamma[-1]),
        "admissible": admissible.admissible, "violation": admissible.violation,
    })
    if cfg.planner != "single-step" and not admissible.admissible:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _profile_meta(cfg: ExperimentConfig, profile: QcContractionProfile) -> dict:
    return {
        "alpha": profile.alpha,
        "scale": profile.path.scale,
        "terminal_s": profile.terminal_s,
        "k2": profile.k2,
        "a0": profile.landmarks.a0,
        "phi_max": profile.landmarks.phi_max,
    }


def cmd_continue(cfg: ExperimentConfig, out: Path, figures: bool) -> int:
    pot, prof = _setup(cfg)
    mesh = QcMesh.graded(cfg.M, cfg.N, cfg.K, prof.a0)
    profile = QcContractionProfile(pot, prof, cfg.alpha_value, LoadPath(scale=cfg.scale))
    plan = _build_plan(cfg, profile)
    plan.to_csv(out / "plan.csv")
    plan.to_json(out / "plan.json", meta=_profile_meta(cfg, profile))
    demo = cfg.planner == "single-step"     # deliberately inadmissible demo
    if not demo:
        admissible = is_admissible(plan, cfg.epsilon, profile)
        if not admissible.admissible:
            print(f"plan not admissible: {admissible.violation}")
            _write_report(out, cfg, "continue", {
                "status": "inadmissible", "violation": admissible.violation,
            })
            return EXIT_HYPOTHESIS
    try:
        run = run_plan(mesh, plan, profile, certify=not demo)
    except ExecutionAborted as ab:
        print(f"aborted at step {ab.step}: {ab.reason}")
        if ab.trace is not None:
            if ab.trace.inner_history:
                _write_rows(out / f"trace_q{ab.step}.csv", ["iter", "max_spacing"],
                            ab.trace.inner_history)
            else:
                ab.trace.to_csv(out / f"trace_q{ab.step}.csv")
            ab.trace.to_json(out / f"trace_q{ab.step}.json")
        _write_report(out, cfg, "continue", {
            "status": "aborted", "step": ab.step, "reason": ab.reason,
        })
        if figures and ab.trace is not None and ab.trace.inner_history:
            from qclab.figures import render_fracture
            render_fracture(out / "fracture.png", ab.trace.inner_history,
                            ab.trace.final_r, prof.fracture_spacing,
                            ab.trace.fracture_element)
        return EXIT_FRACTURE if ab.reason == "fracture" else EXIT_HYPOTHESIS
    for st in run.steps:
        st.trace.to_csv(out / f"trace_q{st.q}.csv")
    stair = staircase_table(run, profile)
    _write_rows(out / "staircase.csv", ["s", "error", "delta"], stair)
    final_err = run.errors[-1]
    dominance = bool(np.all(run.errors <= run.gammas))
    print(f"converged: Q = {plan.Q}, work = {plan.work}, "
          f"final error = {final_err:.3e}, final residual = {run.steps[-1].residual:.3e}")
    print(f"supersolution dominates measured errors: {dominance}")
    _write_report(out, cfg, "continue", {
        "status": "converged",
        "Q": plan.Q,
        "work": plan.work,
        "final_error": float(final_err),
        "final_residual": float(run.steps[-1].residual),
        "supersolution_dominates": dominance,
        "gamma_Q": float(plan.gamma[-1]),
    })
    if figures:
        from qclab.figures import render_continuation
        render_continuation(out / "continuation.png", stair, run.gammas)
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "bands": cmd_bands,
    "fracture": cmd_fracture,
    "continue": cmd_continue,
    "plan": cmd_plan,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](cfg, out, figures=not args.no_figures)
    except (PlanError, StallError) as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
