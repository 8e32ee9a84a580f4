"""Command-line front end: ``infoacq <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dynamics import classify_prior, detect_cycle, ergodic_density, simulate, simulate_ensemble
from .grid import GridFunction
from .limit import build_woc, convergence_study, longrun_interval, w0_closed_form, write_convergence
from .policy import extract_policy
from .solver import ValueBracket, solve, write_solution
from .stationary import optimize_cycle, sweep_lambda, write_sweep

EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_MISSING = 2, 3, 4


class MissingArtifact(RuntimeError):
    pass


def _writer(path, comment):
    fh = open(path, "w", newline="")
    fh.write(f"# {comment}\n")
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(x):
    return repr(float(x))


def _tol(cfg: RunConfig):
    return cfg["numerics.tol"] or None


def _solve(cfg, problem):
    return solve(problem, tol=_tol(cfg), max_iter=cfg["numerics.max_iter"])


def _load_solution(cfg: RunConfig, problem, out: Path):
    """Reuse ``value.csv`` from a solve of the same problem and numerics."""
    path = out / "value.csv"
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run 'infoacq solve' with this configuration first")
    with open(path, newline="") as fh:
        head = fh.readline()
        rows = list(csv.DictReader(fh))
    if f"problem={cfg.problem_digest()}" not in head.split():
        raise MissingArtifact(f"{path} was written for another configuration; rerun 'infoacq solve'")
    data = {k: np.array([float(r[k]) for r in rows]) for k in ("belief", "v_lower", "v_upper", "v", "w")}
    if data["belief"].shape != problem.grid.shape or np.any(data["belief"] != problem.grid):
        raise MissingArtifact(f"{path} grid does not match; rerun 'infoacq solve'")
    lower = GridFunction(problem.grid, data["v_lower"])
    upper = GridFunction(problem.grid, data["v_upper"])
    gap = float(np.max(data["v_upper"] - data["v_lower"]))
    bracket = ValueBracket(lower, upper, -1, gap, converged=True)
    v = GridFunction(problem.grid, data["v"])
    return bracket, v, GridFunction(problem.grid, data["w"])


def _policy(cfg, problem, out):
    """Policy from a matching solve artifact, or from an inline solve.

    ``run.artifact`` selects: ``auto`` (reuse if present), ``require`` or ``never``.
    """
    mode = cfg["run.artifact"]
    if mode != "never":
        try:
            bracket, v, w = _load_solution(cfg, problem, out)
            return bracket, extract_policy(w, problem, bracket.gap)
        except MissingArtifact:
            if mode == "require":
                raise
    bracket, v, w = _solve(cfg, problem)
    return bracket, extract_policy(w, problem, bracket.gap)


def _report_lines(rep):
    lines = [f"outcome = {rep.outcome}"]
    c = rep.cycle
    if c is not None:
        lines += [f"q0 = {c.q0!r}", f"p0 = {c.p0!r}", f"p1 = {c.p1!r}", f"q1 = {c.q1!r}",
                  f"tau0 = {c.tau0!r}", f"tau1 = {c.tau1!r}"]
    if rep.trap_interval is not None:
        lines.append(f"trap_interval = {rep.trap_interval[0]!r}, {rep.trap_interval[1]!r}")
    for flag in rep.flags:
        lines.append(f"flag = {flag}")
    return lines


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    problem = cfg.problem()
    bracket, v, w = _solve(cfg, problem)
    prov = cfg.provenance("solve")
    write_solution(out / "value.csv", problem, bracket, v, w, comment=prov)
    pm = extract_policy(w, problem, bracket.gap)
    pm.to_csv(out / "policy.csv", comment=prov)
    rep = detect_cycle(pm, problem)
    lines = [f"# {prov}", f"iterations = {bracket.n_iter}", f"gap = {bracket.gap!r}",
             f"converged = {bracket.converged}", *_report_lines(rep), pm.summary()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if not bracket.converged:
        print(f"bracket gap {bracket.gap:.3e} not below tolerance after {bracket.n_iter} iterations",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return 0


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    problem = cfg.problem()
    bracket, pm = _policy(cfg, problem, out)
    seed = cfg["run.seed"]
    prov = cfg.provenance("simulate") + f" seed={seed}"
    tr = simulate(pm, cfg["run.p0"], cfg["run.horizon"], seed=seed)
    tr.to_csv(out / "trace.csv", comment=prov)
    rep = classify_prior(cfg["run.p0"], pm, problem)
    lines = [f"# {prov}", f"jumps = {len(tr.jump_times())}", *_report_lines(rep)]
    (out / "simulate_summary.txt").write_text("\n".join(lines) + "\n")
    n = cfg["run.n_paths"]
    if n > 0:
        times = np.array(sorted(set(cfg["run.times"])))
        paths = simulate_ensemble(pm, cfg["run.p0"], times, n, seed=seed)
        fh, wr = _writer(out / "ensemble.csv", prov)
        with fh:
            wr.writerow(["time", "mean", "se", "drift"])
            p0 = cfg["run.p0"]
            for k, t in enumerate(times):
                col = paths[:, k]
                d = problem.pi + (p0 - problem.pi) * np.exp(-problem.lam * t)
                wr.writerow([_fmt(t), _fmt(col.mean()), _fmt(col.std(ddof=1) / np.sqrt(n)), _fmt(d)])
    return 0


def cmd_cycle(cfg: RunConfig, out: Path) -> int:
    problem = cfg.problem()
    prov = cfg.provenance("cycle")
    opt = optimize_cycle(problem, n_coarse=cfg["numerics.cycle_grid"])
    bracket, pm = _policy(cfg, problem, out)
    rep = detect_cycle(pm, problem)
    fh, wr = _writer(out / "cycle.csv", prov)
    with fh:
        wr.writerow(["source", "q0", "p0", "p1", "q1", "tau0", "tau1", "w_pi", "w_at_pi"])
        for name, c, wpi, wat in (("optimizer", opt.cycle, opt.payoffs.w_pi if opt.payoffs else np.nan, opt.w_at_pi),
                                  ("solver", rep.cycle, np.nan, np.nan)):
            if c is None:
                wr.writerow([name] + ["nan"] * 6 + [_fmt(wpi), _fmt(wat)])
            else:
                wr.writerow([name, *(_fmt(x) for x in (c.q0, c.p0, c.p1, c.q1, c.tau0, c.tau1, wpi, wat))])
    if rep.cycle is not None and not rep.cycle.degenerate:
        ergodic_density(rep.cycle).to_csv(out / "density.csv", comment=prov)
    return 0


def cmd_limit(cfg: RunConfig, out: Path) -> int:
    problem = cfg.problem().with_params(kappa=0.0)
    prov = cfg.provenance("limit")
    pol = build_woc(problem, kappa_small=cfg["run.kappa_small"], tol=_tol(cfg),
                    max_iter=max(cfg["numerics.max_iter"], 100000))
    pol.to_csv(out / "woc_policy.csv", comment=prov)
    lr = longrun_interval(problem)
    if lr is not None:
        g = problem.grid
        inside = g[(g >= lr[0]) & (g <= lr[1])]
        vals = w0_closed_form(inside, problem)
        fh, wr = _writer(out / "w0.csv", prov)
        with fh:
            wr.writerow(["belief", "w0"])
            for x, y in zip(inside, vals):
                wr.writerow([_fmt(x), _fmt(y)])
    rows = convergence_study(cfg.problem(), cfg["run.kappas"], tol=_tol(cfg),
                             max_iter=max(cfg["numerics.max_iter"], 100000))
    write_convergence(out / "convergence.csv", rows, comment=prov)
    return 0


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    problem = cfg.problem()
    rows = sweep_lambda(problem, cfg["run.lambdas"], n_coarse=cfg["numerics.cycle_grid"])
    write_sweep(out / "sweep.csv", rows, comment=cfg.provenance("sweep"))
    return 0


def cmd_portfolio(cfg: RunConfig, out: Path) -> int:
    from .portfolio import write_utility

    spec = cfg.market()
    problem = cfg.problem()
    write_utility(out / "utility.csv", spec, problem.grid, comment=cfg.provenance("portfolio"))
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "cycle": cmd_cycle,
    "limit": cmd_limit,
    "sweep": cmd_sweep,
    "portfolio": cmd_portfolio,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="infoacq", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, help="overrides run.seed")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration key (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.seed is not None:
        if args.seed < 0:
            print("config error: --seed must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        overrides.append(f"run.seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
