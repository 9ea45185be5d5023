"""Command-line entry point.

Subcommands:
  run         episodic experiment from a config file
  casestudy   the built-in 2D car-pedestrian scenario
  synthetic   fixed-point convergence testbed (writes a diagnostic trace)
  calibrate   one-shot quantile calibration of a score CSV
  sensitivity beta_T / L_U / kappa probes for a configured scenario

Exit codes: 0 success, 2 configuration error, 3 runtime abort
(infeasibility, no safe radius, insufficient samples).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import convergence
from .conformal import calibrate, empirical_quantile, load_scores_csv
from .config import (
    ExperimentConfig,
    casestudy_config,
    config_hash,
    load_config,
    serialize_config,
)
from .dynamics import predict_nominal
from .episodic import RunResult, run as run_episodic
from .errors import ConfigurationError, TubeplanError
from .outputs import write_outputs
from .planner import solve
from .sensitivity import beta_T_analytic, beta_T_empirical, kappa, L_U_empirical

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=("explicit", "implicit"))
    p.add_argument("--kappa", help="fixed:<value> or estimated")
    p.add_argument("--episodes", type=int, help="override max_episodes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-scores", action="store_true", default=None)
    p.add_argument("--best-effort", action="store_true", default=None)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    run_kw = {}
    if args.solver is not None:
        run_kw["solver"] = args.solver
    if args.kappa is not None:
        if args.kappa == "estimated":
            run_kw["kappa_mode"] = "estimated"
        elif args.kappa.startswith("fixed:"):
            try:
                run_kw["kappa_fixed"] = float(args.kappa.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigurationError(f"--kappa: {exc}") from exc
            run_kw["kappa_mode"] = "fixed"
        else:
            raise ConfigurationError(
                f"--kappa must be 'estimated' or 'fixed:<value>', got {args.kappa!r}"
            )
    if args.episodes is not None:
        run_kw["max_episodes"] = args.episodes
    if args.seed is not None:
        run_kw["seed"] = args.seed
    if args.best_effort is not None:
        run_kw["best_effort"] = args.best_effort

    new_run = dataclasses.replace(cfg.run, **run_kw) if run_kw else cfg.run
    exp_kw = {"run": new_run}
    if args.out is not None:
        exp_kw["out_dir"] = args.out
    if args.dump_scores is not None:
        exp_kw["dump_scores"] = args.dump_scores
    return dataclasses.replace(cfg, **exp_kw)


def _eta_diag_text(result: RunResult, alpha: float, delta: float) -> str:
    """Per-episode eta-bound diagnostics with a crude empirical f_star."""
    lines = ["j,f_star_est,eta_bound,delta_budget"]
    budget = 0.0
    for rec in result.records:
        budget += delta
        f_star = 0.0
        if rec.scores is not None:
            f_star = convergence.estimate_density_floor(rec.scores.scores, rec.q)
        if f_star > 0 and rec.scores is not None:
            bound = convergence.eta_bound(
                convergence.EtaBoundInputs(
                    alpha=alpha,
                    alpha_bar=rec.alpha_bar,
                    n=rec.scores.n,
                    delta_j=delta,
                    f_star=f_star,
                )
            )
        else:
            bound = float("nan")
        lines.append(f"{rec.j},{repr(f_star)},{repr(bound)},{repr(budget)}")
    return "\n".join(lines) + "\n"


def _run_experiment(cfg: ExperimentConfig) -> int:
    result = run_episodic(cfg.run)
    if not result.records:
        print("no episodes completed", file=sys.stderr)
        return EXIT_ABORT
    last = result.records[-1]
    print(
        f"episodes={len(result.records)} stop={result.stop_reason} "
        f"r_final={last.r:.6g} cost_final={last.cost:.6g}"
    )
    if cfg.out_dir is not None:
        extra = {"eta_diagnostics.csv": _eta_diag_text(result, cfg.run.alpha, cfg.run.delta)}
        write_outputs(
            result.records,
            cfg.out_dir,
            config_hash(cfg),
            cfg.run.seed,
            dump_scores=cfg.dump_scores,
            extra_files=extra,
        )
        print(f"outputs written to {cfg.out_dir}")
    if result.aborted and not cfg.run.best_effort:
        print(f"aborted: {result.stop_reason}", file=sys.stderr)
        return EXIT_ABORT
    if result.aborted:
        print("WARNING: run contains infeasible episodes (best-effort mode, unsafe)")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    return _run_experiment(cfg)


def _cmd_casestudy(args) -> int:
    cfg = casestudy_config()
    if args.config is not None:
        cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    return _run_experiment(cfg)


def _cmd_calibrate(args) -> int:
    scores = load_scores_csv(args.scores)
    if args.level is not None:
        result = empirical_quantile(scores, args.level)
    else:
        result = calibrate(scores, args.alpha, args.delta)
    print(f"n={result.n} k={result.k_index} alpha_bar={result.alpha_bar:.6g} q={result.q:.12g}")
    return EXIT_OK


def _cmd_synthetic(args) -> int:
    from .seeding import STREAM_SYNTHETIC, generator

    rng = generator(args.seed, STREAM_SYNTHETIC)
    t_map = lambda r: args.kappa * (r - args.r_star) + args.r_star  # noqa: E731
    injector = lambda j, t_r: float(rng.uniform(-args.c, args.c))  # noqa: E731
    trace = convergence.synthetic_fixed_point_run(
        t_map, args.r_star, args.kappa, args.r0, args.episodes, injector
    )
    c_realized = float(np.max(np.abs(trace.eta))) if trace.eta.size else 0.0
    lines = ["j,e,bound_U,bound_C,eta,eta_bound,delta_budget"]
    for j in range(trace.e.size):
        finite, limsup = convergence.error_bound_steady(
            trace.e[0], c_realized, args.kappa, max(j - 1, 0)
        )
        bound_c = trace.e[0] if j == 0 else finite
        eta_j = trace.eta[j - 1] if j >= 1 else 0.0
        lines.append(
            f"{j},{repr(float(trace.e[j]))},{repr(float(trace.bound[j]))},"
            f"{repr(float(bound_c))},{repr(float(eta_j))},{repr(c_realized)},"
            f"{repr(0.0)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        from pathlib import Path

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "synthetic_trace.csv").write_text(text)
        print(f"trace written to {out / 'synthetic_trace.csv'}")
    final_e = float(trace.e[-1])
    limsup = (
        c_realized / (1.0 - 3.0 * args.kappa) if args.kappa < 1.0 / 3.0 else float("inf")
    )
    print(
        f"kappa={args.kappa} episodes={args.episodes} final_error={final_e:.6g} "
        f"steady_bound={limsup:.6g}"
    )
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    cfg = casestudy_config() if args.config is None else load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    run_cfg = cfg.run
    y_hat = predict_nominal(run_cfg.y0, run_cfg.model, run_cfg.planner.horizon)
    x0 = np.asarray(run_cfg.x0)

    def solve_at(radius, warm):
        return solve(radius, y_hat, x0, run_cfg.planner, run_cfg.model, warm_start=warm)

    r = run_cfg.r0 if run_cfg.r0 is not None else 1.0
    base = solve_at(r, None)
    if not base.feasible:
        print(f"planner infeasible at r={r}", file=sys.stderr)
        return EXIT_ABORT
    sens = run_cfg.sensitivity
    beta_emp = beta_T_empirical(
        base.policy,
        run_cfg.model,
        run_cfg.x0,
        run_cfg.y0,
        sens.beta_probes,
        sens.beta_step,
        run_cfg.seed,
    )
    a_t, beta_ana = beta_T_analytic(sens.constants, run_cfg.planner.horizon)
    h = min(sens.lu_step, r) if r > 0 else sens.lu_step
    lu = L_U_empirical(r, h, solve_at, warm_start=base.policy)
    gain = kappa(beta_emp, lu)
    print(
        f"r={r:.6g} beta_T_empirical={beta_emp:.6g} beta_T_analytic={beta_ana:.6g} "
        f"(A_T={a_t:.6g}) L_U={lu:.6g} kappa={gain.value:.6g} "
        f"update_valid={gain.update_valid} contraction={gain.contraction}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubeplan",
        description="Episodic conformal tube calibration and safe radius transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="episodic experiment from a config file")
    p_run.add_argument("--config", required=True)
    _add_common_overrides(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_case = sub.add_parser("casestudy", help="built-in car-pedestrian scenario")
    p_case.add_argument("--config", help="optional config overriding the preset")
    _add_common_overrides(p_case)
    p_case.set_defaults(func=_cmd_casestudy)

    p_cal = sub.add_parser("calibrate", help="one-shot calibration of a score CSV")
    p_cal.add_argument("--scores", required=True)
    p_cal.add_argument("--level", type=float, help="direct quantile level (1 - alpha_bar)")
    p_cal.add_argument("--alpha", type=float, default=0.1)
    p_cal.add_argument("--delta", type=float, default=0.05)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_syn = sub.add_parser("synthetic", help="fixed-point convergence testbed")
    p_syn.add_argument("--kappa", type=float, default=0.2)
    p_syn.add_argument("--episodes", type=int, default=50)
    p_syn.add_argument("--c", type=float, default=0.05, help="perturbation bound")
    p_syn.add_argument("--r0", type=float, default=2.0)
    p_syn.add_argument("--r-star", dest="r_star", type=float, default=1.0)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--out")
    p_syn.set_defaults(func=_cmd_synthetic)

    p_sens = sub.add_parser("sensitivity", help="beta_T / L_U / kappa probes")
    p_sens.add_argument("--config")
    _add_common_overrides(p_sens)
    p_sens.set_defaults(func=_cmd_sensitivity)

    p_show = sub.add_parser("show-config", help="print the case-study config as TOML")
    p_show.set_defaults(func=lambda a: (print(serialize_config(casestudy_config())), EXIT_OK)[1])

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TubeplanError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


def main() -> None:  # console-script entry
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
