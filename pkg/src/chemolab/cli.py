"""Command-line orchestration: subcommands, sweeps, CSV emission, exit codes.

Exit codes: 0 success/converged, 1 usage or config error, 2 blow-up detected,
3 solver non-convergence.  Every invocation writes its artifacts under the
--out directory together with a line-oriented manifest listing the inputs,
the package version, and each produced file.  Reruns with identical config
and seed are byte-identical apart from the manifest timestamp.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import datetime
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import compare_ode as cmp_ode
from . import evolve, stability, steady
from .config import (
    Config,
    grid_from_config,
    initial_field,
    kinetics_from_config,
    params_from_config,
)
from .errors import ChemolabError, ConfigError, NoConvergence, OutOfRange
from .grid import Field, write_snapshot_csv
from .model import classify_regime, growth_zeros

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BLOWUP = 2
EXIT_NOCONV = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="chemolab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "steady", "stability", "compare-ode", "classify", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
    return parser


class _Manifest:
    def __init__(self, out_dir: Path, command: str, config_path: str, seed: int, threads: int,
                 config_sha: str | None = None):
        self.out_dir = out_dir
        self.lines = [
            f"command: {command}",
            f"version: chemolab {__version__}",
            f"config: {config_path}",
            f"config_sha256: {config_sha if config_sha is not None else _sha256(config_path)}",
            f"seed: {seed}",
            f"threads: {threads}",
        ]
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out_dir / name

    def write(self):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with open(self.out_dir / "manifest.txt", "w", encoding="utf-8") as fh:
            for line in self.lines:
                fh.write(line + "\n")
            for name in self.artifacts:
                fh.write(f"artifact: {name}\n")
            fh.write(f"timestamp: {stamp}\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("chemolab-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(cfg: Config, args, manifest: _Manifest) -> tuple[int, float]:
    p = params_from_config(cfg)
    k = kinetics_from_config(cfg, p)
    grid = grid_from_config(cfg, p)
    u0 = initial_field(cfg, grid, seed=args.seed)
    horizon = cfg.number("run.horizon")
    target = None
    if cfg.has("run.target"):
        raw = cfg.raw("run.target")
        target = p.equilibrium if raw == "equilibrium" else cfg.number("run.target")
    n_snaps = cfg.integer("run.snapshots", 0)
    snap_times = np.linspace(0.0, horizon, n_snaps) if n_snaps else ()
    report = evolve.run(
        p, k, u0, horizon,
        target=target,
        eps=cfg.number("run.eps", evolve.MONITOR_EPS),
        rows=cfg.integer("run.rows", 500),
        snapshot_times=snap_times,
    )
    report.write_series_csv(manifest.path("series.csv"))
    for i, (t, u_vals, v_vals) in enumerate(report.snapshots):
        write_snapshot_csv(
            manifest.path(f"snapshot_{i:03d}.csv"), Field(u_vals, grid), Field(v_vals, grid)
        )
    write_snapshot_csv(manifest.path("final.csv"), report.final_u, report.final_v)
    print(f"status: {report.status} at t = {report.final_time:.6g} "
          f"({report.steps} steps, max mass residual {report.max_mass_residual:.3e})")
    code = EXIT_BLOWUP if report.status in ("BlowUp", "StalledDt") else EXIT_OK
    return code, float(report.column("linf_u")[-1])


def _cmd_steady(cfg: Config, args, manifest: _Manifest) -> tuple[int, float]:
    p = params_from_config(cfg)
    k = kinetics_from_config(cfg, p)
    grid = grid_from_config(cfg, p)
    _, u0 = growth_zeros(k)
    eq = stability.equilibrium_info(k, u0)
    mode = cfg.integer("steady.mode", 1)
    if cfg.has("steady.chi_start"):
        chi_range = (cfg.number("steady.chi_start"), cfg.number("steady.chi_stop"))
        steps = cfg.integer("steady.steps")
    else:
        chi = cfg.number("steady.chi", p.chi)
        chi_range, steps = (chi, chi), 1
    branch = steady.continuation(
        p, k, eq, mode, chi_range, steps, grid=grid,
        seed_fraction=cfg.number("steady.seed_fraction", steady.SEED_FRACTION),
    )
    steady.write_branch_csv(manifest.path("branch.csv"), branch)
    if branch.states:
        last = branch.states[-1]
        write_snapshot_csv(manifest.path("steady_state.csv"), last.u, last.v)
        report = steady.validate_steady(last, dataclasses.replace(p, chi=last.chi), k)
        with open(manifest.path("validation.csv"), "w", encoding="utf-8") as fh:
            fh.write("name,bound,observed,pass,note\n")
            for row in report.rows:
                fh.write(
                    f"{row.name},{row.bound:.17g},{row.observed:.17g},"
                    f"{str(row.passed).lower()},{row.note}\n"
                )
        print(f"branch points: {len(branch.states)}, "
              f"last amplitude {last.amplitude(eq.u0):.6g}, "
              f"validators {'pass' if report.all_pass else 'FAIL'}")
    if branch.terminated_reason and not branch.states:
        print(f"no convergence: {branch.terminated_reason}", file=sys.stderr)
        return EXIT_NOCONV, math.nan
    if branch.terminated_reason:
        print(f"branch terminated early: {branch.terminated_reason}", file=sys.stderr)
    amp = branch.states[-1].amplitude(eq.u0) if branch.states else math.nan
    return EXIT_OK, amp


def _cmd_stability(cfg: Config, args, manifest: _Manifest) -> tuple[int, float]:
    p = params_from_config(cfg)
    k = kinetics_from_config(cfg, p)
    if cfg.has("stability.u0"):
        u0 = cfg.number("stability.u0")
    else:
        _, u0 = growth_zeros(k)
    eq = stability.equilibrium_info(k, u0)
    count = cfg.integer("stability.count", 6)
    rows = stability.bifurcation_table(eq, p.lengths, count)
    stability.write_bifurcation_csv(manifest.path("bifurcation.csv"), rows)
    intervals = stability.pattern_intervals(rows)
    for lo, hi in intervals:
        print(f"pattern interval: ({lo:.6g}, {hi:.6g})")
    print("outside the listed intervals the existence of patterns is unknown")
    if cfg.has("stability.chi_lo"):
        chis = np.linspace(
            cfg.number("stability.chi_lo"),
            cfg.number("stability.chi_hi"),
            cfg.integer("stability.chi_samples", 100),
        )
        rep = stability.stability_report(eq, p.lengths, chis, count)
        with open(manifest.path("lambda.csv"), "w", encoding="utf-8") as fh:
            fh.write("chi,lambda_minus,lambda_plus\n")
            for chi, (lm, lp_) in zip(rep.chis, rep.lambdas):
                fh.write(f"{chi:.17g},{lm:.17g},{lp_:.17g}\n")
    if cfg.flag("stability.scan"):
        grid = grid_from_config(cfg, p)
        scan = stability.singularity_scan(
            eq, grid,
            cfg.number("stability.scan_lo"),
            cfg.number("stability.scan_hi"),
            cfg.integer("stability.scan_points", 40),
        )
        with open(manifest.path("scan.csv"), "w", encoding="utf-8") as fh:
            fh.write("chi,smallest_singular_value\n")
            for chi, sv in zip(scan.chis, scan.smallest_singular_values):
                fh.write(f"{chi:.17g},{sv:.17g}\n")
        with open(manifest.path("scan_roots.csv"), "w", encoding="utf-8") as fh:
            fh.write("chi_singular\n")
            for root in scan.roots:
                fh.write(f"{root:.17g}\n")
        print(f"scan roots: {[f'{r:.8g}' for r in scan.roots]}")
    # key scalar: gap between the growing branch at this chi and the nearest
    # mode eigenvalue; it touches zero exactly at the onset thresholds
    try:
        _, lam_plus = stability.linearization_eigenvalues(eq, p.chi)
        sigmas = [r.sigma for r in rows] or [math.inf]
        gap = min(abs(lam_plus - s) for s in sigmas)
    except ChemolabError:
        gap = math.nan
    return EXIT_OK, gap


def _cmd_compare_ode(cfg: Config, args, manifest: _Manifest) -> tuple[int, float]:
    p = params_from_config(cfg)
    k = kinetics_from_config(cfg, p)
    horizon = cfg.number("compare.horizon")
    u0_min = cfg.number("compare.u0_min")
    u0_max = cfg.number("compare.u0_max")
    traj = cmp_ode.solve_sandwich(p, u0_min, u0_max, horizon)
    traj.write_csv(manifest.path("trajectory.csv"))
    if traj.eps0 is not None:
        print(f"contraction rate eps0 = {traj.eps0:.8g}")
    if cfg.flag("compare.envelopes"):
        env = cmp_ode.envelope_odes(p, k, u0_min, u0_max, horizon)
        with open(manifest.path("envelopes.csv"), "w", encoding="utf-8") as fh:
            fh.write("t,z,y\n")
            for t, z, y in zip(env.times_z, env.z, env.y):
                fh.write(f"{t:.17g},{z:.17g},{y:.17g}\n")
        print(f"z_inf = {env.z_inf:.8g}, y_inf = {env.y_inf:.8g}")
    return EXIT_OK, traj.eps0 if traj.eps0 is not None else math.nan


def _cmd_classify(cfg: Config, args, manifest: _Manifest) -> tuple[int, float]:
    p = params_from_config(cfg)
    k = kinetics_from_config(cfg, p)
    dim = cfg.integer("classify.dim", p.dim)
    report = classify_regime(p, k, dim=dim)
    with open(manifest.path("regimes.csv"), "w", encoding="utf-8") as fh:
        fh.write("tag,satisfied,condition\n")
        for v in report.verdicts:
            cond = v.condition.replace('"', "'")
            fh.write(f'{v.tag},{str(v.satisfied).lower()},"{cond}"\n')
    for v in report.verdicts:
        if v.satisfied:
            print(v.tag)
            print(f"  {v.condition}")
    return EXIT_OK, float(len(report.satisfied_tags()))


_HANDLERS = {
    "simulate": _cmd_simulate,
    "steady": _cmd_steady,
    "stability": _cmd_stability,
    "compare-ode": _cmd_compare_ode,
    "classify": _cmd_classify,
}


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_points(cfg: Config) -> tuple[list[str], list[tuple[float, ...]]]:
    names = [cfg.raw("sweep.parameter")]
    counts = [cfg.integer("sweep.count")]
    axes = [np.linspace(cfg.number("sweep.start"), cfg.number("sweep.stop"), counts[0])]
    if cfg.has("sweep.parameter2"):
        names.append(cfg.raw("sweep.parameter2"))
        counts.append(cfg.integer("sweep.count2"))
        axes.append(
            np.linspace(cfg.number("sweep.start2"), cfg.number("sweep.stop2"), counts[-1])
        )
    if any(c < 1 for c in counts):
        raise OutOfRange("sweep.count", "grid is empty")
    if len(axes) == 1:
        points = [(float(x),) for x in axes[0]]
    else:
        points = [(float(x), float(y)) for x in axes[0] for y in axes[1]]
    return names, points


def _run_sweep_point(index, names, values, cfg: Config, args, out_root: Path, command):
    entries = dict(cfg.entries)
    for name, value in zip(names, values):
        entries[name] = f"{value!r}"
    point_cfg = Config(entries)
    point_dir = out_root / f"point_{index:04d}"
    point_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(point_dir, command, "<sweep point>", args.seed, 1,
                         config_sha="inherited")
    try:
        code, scalar = _HANDLERS[command](point_cfg, args, manifest)
        manifest.write()
        status = {EXIT_OK: "ok", EXIT_BLOWUP: "blowup", EXIT_NOCONV: "no-convergence"}
        return index, status.get(code, f"exit_{code}"), code, scalar
    except Exception as exc:  # a failed point must not sink the sweep
        manifest.write()
        return index, f"error: {exc}", EXIT_USAGE, math.nan


def _cmd_sweep(cfg: Config, args, manifest: _Manifest) -> int:
    command = cfg.raw("sweep.command")
    if command not in _HANDLERS:
        raise OutOfRange("sweep.command", f"must be one of {sorted(_HANDLERS)} (got {command})")
    names, points = _sweep_points(cfg)
    out_root = manifest.out_dir
    results = [None] * len(points)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        futures = [
            pool.submit(_run_sweep_point, i, names, values, cfg, args, out_root, command)
            for i, values in enumerate(points)
        ]
        for fut in futures:
            index, status, code, scalar = fut.result()
            results[index] = (status, code, scalar)
    with open(manifest.path("sweep_summary.csv"), "w", encoding="utf-8") as fh:
        header = ["index"] + names + ["status", "exit_code", "scalar"]
        fh.write(",".join(header) + "\n")
        for i, values in enumerate(points):
            status, code, scalar = results[i]
            vals = ",".join(f"{v:.17g}" for v in values)
            fh.write(f'{i},{vals},"{status}",{code},{scalar:.17g}\n')
    n_ok = sum(1 for status, code, _ in results if code == EXIT_OK)
    print(f"sweep: {n_ok}/{len(points)} points succeeded")
    return EXIT_OK if n_ok >= 1 else EXIT_USAGE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = Config.load(args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = _out_dir(args)
    manifest = _Manifest(out_dir, args.command, args.config, args.seed, args.threads)
    try:
        if args.command == "sweep":
            code = _cmd_sweep(cfg, args, manifest)
        else:
            code, _ = _HANDLERS[args.command](cfg, args, manifest)
        manifest.write()
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except ChemolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
