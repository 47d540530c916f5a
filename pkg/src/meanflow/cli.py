"""Command line front end: ``meanflow {run,stationary,verify,sweep}``.

Exit codes: 0 success (run: converged), 1 configuration error,
2 run reached t_max, 3 run blew up or the step underflowed, 4 a verify
check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checks, fieldexpr
from .config import ExperimentConfig, describe_keys, parse_config
from .diagnostics import decay_rate, l2_h1_distance
from .errors import BlowupError, ConfigError, MeanflowError, NoConvergence
from .fileio import write_series, write_snapshot
from .flow import Flow, FlowStatus
from .mesh import integrate
from .stationary import gauge_align, solve

log = logging.getLogger("meanflow")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_TIME = 2
EXIT_FAILED = 3
EXIT_VERIFY = 4

STATUS_EXIT = {
    FlowStatus.CONVERGED: EXIT_OK,
    FlowStatus.MAX_TIME: EXIT_MAX_TIME,
    FlowStatus.UNDERFLOW: EXIT_FAILED,
    FlowStatus.BLOWUP: EXIT_FAILED,
}


def _prepare(path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def hypothesis_line(k, rho):
    ratio = rho / (8 * np.pi)
    verdict = "holds" if k > ratio else "fails"
    return f"min orbit cardinality k = {k}; rho/(8 pi) = {ratio:.6g}; hypothesis k > rho/(8 pi) {verdict}"


def write_run_outputs(out: Path, cfg: ExperimentConfig, flow: Flow, result, newton_line=None):
    write_series(out / "series.csv", result.series)
    snaps = _prepare(out / "snapshots")
    for i, (t, u) in enumerate(result.snapshots):
        write_snapshot(snaps / f"snap_{i:05d}.txt", flow.mesh, t, u)

    s = result.final_state
    ts = [r.t for r in result.series]
    ys = [r.dissipation for r in result.series]
    lines = [
        f"status {result.status.value}",
        f"t_final {s.t!r}",
        f"accepted_steps {s.step_count}",
        f"rejected_steps {s.reject_count}",
        f"final_residual {result.final_residual!r}",
        f"max_relative_mass_drift {result.max_mass_deviation!r}",
        f"energy_increase_violations {result.energy_violations}",
        f"final_concentration_fraction {result.series[-1].confrac!r}",
        f"dissipation_decay_rate {decay_rate(ts, ys)!r}",
        hypothesis_line(flow.k, flow.rho),
    ]
    if flow.group is not None:
        lines.append(f"max_invariance_error {result.max_invariance_error!r}")
    if newton_line:
        lines.append(newton_line)
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def compare_with_newton(cfg: ExperimentConfig, flow: Flow, u):
    """One report line with L2 and H1 distances from the flow limit to a Newton solution."""
    try:
        res = solve(flow.mesh, cfg.newton_config(), flow.f, u)
    except (NoConvergence, FloatingPointError) as exc:
        return f"newton_comparison unavailable ({exc})"
    aligned = gauge_align(flow.mesh, res.u, integrate(flow.mesh, np.exp(u)))
    l2, h1 = l2_h1_distance(flow.mesh, u, aligned)
    linf = float(np.max(np.abs(u - aligned)))
    return (f"newton_comparison max {linf!r} l2 {l2!r} h1 {h1!r} "
            f"newton_residual {res.residual!r}")


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    flow = Flow(cfg.flow_config())
    try:
        result = flow.run()
    except BlowupError as exc:
        # only reachable when the initial datum itself is out of range
        print(f"Blowup: {exc}", file=sys.stderr)
        return EXIT_FAILED
    newton = None
    if result.status is FlowStatus.CONVERGED:
        newton = compare_with_newton(cfg, flow, result.final_state.u)
    write_run_outputs(_prepare(out), cfg, flow, result, newton)
    print(f"{result.status.value}: t = {result.final_state.t:.6g}, "
          f"residual = {result.final_residual:.3e}  ({out / 'report.txt'})")
    return STATUS_EXIT[result.status]


def cmd_stationary(cfg: ExperimentConfig, out: Path) -> int:
    flow = Flow(cfg.flow_config())
    t0 = time.perf_counter()
    try:
        res = solve(flow.mesh, cfg.newton_config(), flow.f, flow.u0)
    except NoConvergence as exc:
        _prepare(out)
        (out / "stationary_report.txt").write_text(
            f"NoConvergence iterations {exc.iterations} residual {exc.residual!r}\n")
        print(f"Newton failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    _prepare(out)
    write_snapshot(out / "stationary.txt", flow.mesh, 0.0, res.u)
    (out / "stationary_report.txt").write_text(
        f"Converged iterations {res.iterations} residual {res.residual!r}\n")
    print(f"Newton converged in {res.iterations} iterations "
          f"({time.perf_counter() - t0:.2f} s), residual {res.residual:.3e}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, corrupt_quadrature=False, seed=0) -> int:
    mesh = cfg.mesh
    if corrupt_quadrature:
        mesh = checks.corrupt_quadrature(mesh, np.random.default_rng(seed))
    results = checks.run_all(mesh, cfg.rho, cfg.get("flow", "f"), group=cfg.group, seed=seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verify failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


def _sweep_entry(args):
    cfg_path, rho, out = args
    t0 = time.perf_counter()
    try:
        cfg = parse_config(cfg_path)
        flow = Flow(cfg.flow_config(rho=rho))
        result = flow.run()
        write_series(_prepare(out) / "series.csv", result.series)
        status = result.status.value
        final_res = result.final_residual
        max_h1 = max(r.h1 for r in result.series)
    except (MeanflowError, FloatingPointError) as exc:
        status, final_res, max_h1 = f"Error: {exc}", float("nan"), float("nan")
    return rho, status, final_res, max_h1, time.perf_counter() - t0


def parse_rho_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError("the rho list is empty")
    try:
        return [float(fieldexpr.evaluate_constant(t)) for t in items]
    except MeanflowError as exc:
        raise ConfigError(f"bad rho list entry: {exc}") from None


def cmd_sweep(cfg: ExperimentConfig, cfg_path, rhos, out: Path, jobs=1) -> int:
    out = _prepare(out)
    # each entry re-reads the file and owns its own output directory
    tasks = [(str(cfg_path), rho, out / f"rho_{i:03d}") for i, rho in enumerate(rhos)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_entry, tasks))
    else:
        rows = [_sweep_entry(t) for t in tasks]
    with open(out / "sweep.csv", "w") as fh:
        fh.write("rho,status,final_residual,max_h1,wall_time\n")
        for rho, status, res, h1, wall in rows:
            status = status.replace(",", ";").replace("\n", " ")
            fh.write(f"{rho!r},{status},{res!r},{h1!r},{wall:.3f}\n")
    for rho, status, res, _, wall in rows:
        print(f"rho = {rho:10.6g}  {status:16s} residual {res:.3e}  {wall:7.2f} s")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="meanflow", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, text in (("run", "integrate the flow and write series, snapshots and a report"),
                       ("stationary", "solve the stationary equation by Newton continuation"),
                       ("verify", "run the numerical self-checks at the configured resolution"),
                       ("sweep", "run one flow per rho value and tabulate the outcomes")):
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", required=True, type=Path, help="configuration file")
        if name == "verify":
            sp.add_argument("--corrupt-quadrature", action="store_true",
                            help="perturb the quadrature weights (self-test of the checks)")
            sp.add_argument("--seed", type=int, default=0)
        if name == "sweep":
            sp.add_argument("--rho", required=True, help="comma separated values, e.g. '2*pi, 4*pi'")
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub.add_parser("keys", help="list every configuration key with its default")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "keys":
        print(describe_keys())
        return EXIT_OK
    try:
        cfg = parse_config(args.config)
        rhos = parse_rho_list(args.rho) if args.command == "sweep" else None
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = cfg.output_dir
    if args.command == "run":
        return cmd_run(cfg, out)
    if args.command == "stationary":
        return cmd_stationary(cfg, out)
    if args.command == "verify":
        return cmd_verify(cfg, args.corrupt_quadrature, args.seed)
    return cmd_sweep(cfg, args.config, rhos, out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
