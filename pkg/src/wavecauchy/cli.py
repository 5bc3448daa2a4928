"""Command-line front end: ``wavecauchy <command> [--config FILE] [--out DIR]``.

Exit codes: 0 success, 1 numerical failure or failed check, 2 configuration
error, 3 I/O or parse error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import kernel as K
from . import reconstruct as R
from . import validation
from .config import RunConfig, read_domain, read_modes, read_target
from .errors import ConfigError, TraceFormatError, WaveCauchyError
from .fdsolver import FDGrid, solve_rectangle
from .parallel import resolve_threads
from .synthdata import BoundaryTrace, add_noise, exact_trace, make_ground_truth, trace_l2_distance

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _g(x):
    return f"{x:.15g}"


def _kernel_params(cfg, h=1.0):
    n_s = cfg.get_int("kernel", "n_s", 32, lo=8)
    n_alpha = cfg.get_int("kernel", "n_alpha", 32, lo=8)
    return K.KernelParams(h, n_s, n_alpha)


def _truth_from(cfg, trace_domain=None):
    """Ground truth when the config carries [domain] and mode sections."""
    if not (cfg.has("domain") and cfg.sections("mode")):
        return None
    domain = read_domain(cfg)
    if trace_domain is not None and domain != trace_domain:
        raise ConfigError("domain", f"{domain} does not match the trace domain {trace_domain}")
    return make_ground_truth(domain, read_modes(cfg, domain))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate_kernel(cfg, out, threads):
    sec = "kernel"
    params = {
        "n_s": cfg.get_int(sec, "n_s", 32, lo=8),
        "n_alpha": cfg.get_int(sec, "n_alpha", 32, lo=8),
        "lattice_n": cfg.get_int(sec, "lattice_n", 8, lo=2),
        "rep_h_list": cfg.get_float_list(sec, "rep_h_list", "0.5, 0.1", lo=0, lo_open=True),
        "direct_h_list": cfg.get_float_list(sec, "direct_h_list", "0.5, 0.2, 0.1", lo=0, lo_open=True),
        "random_points": cfg.get_int(sec, "random_points", 20, lo=1),
        "support_points": cfg.get_int(sec, "support_points", 200, lo=1),
        "symmetry_points": cfg.get_int(sec, "symmetry_points", 50, lo=1),
        "growth_h_list": cfg.get_float_list(sec, "growth_h_list", "0.1, 0.01, 0.001, 1e-4", lo=0, lo_open=True),
        "growth_n": cfg.get_int(sec, "growth_n", 11, lo=2),
        "eps": cfg.get_float(sec, "eps", 0.01, lo=0, lo_open=True),
        "mollifier_h": cfg.get_float(sec, "mollifier_h", 0.1, lo=0, lo_open=True),
        "mollifier_points": cfg.get_int(sec, "mollifier_points", 5, lo=1),
        "seed": cfg.get_int(sec, "seed", 0, lo=0),
    }
    report = cfg.get_str("output", "report", "validate_kernel.csv")
    cfg.finish({"kernel", "output"})
    results = validation.run_suite(params)
    _write_rows(out / report, ["check", "value", "threshold", "margin", "passed"],
                [[r.name, _g(r.value), _g(r.threshold), _g(r.margin), str(r.passed).lower()]
                 for r in results])
    failed = [r.name for r in results if not r.passed]
    print(f"validate-kernel: {len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_NUMERIC if failed else EXIT_OK


def _fd_settings(cfg, domain):
    if domain.kind != "rect":
        raise ConfigError("domain.kind", "the finite-difference solver needs kind = rect")
    n = cfg.get_int("fd", "n", 64, lo=4)
    t_max = cfg.get_float("fd", "t_max", 1.0, lo=0, lo_open=True)
    cfl = cfg.get_float("fd", "cfl", 0.5, lo=0, lo_open=True, hi=0.9 / math.sqrt(2))
    return n, t_max, cfl


def _fd_run(domain, gt, n, t_max, cfl):
    try:
        grid = FDGrid.for_domain(domain, n, t_max, cfl)
    except ValueError as exc:
        raise ConfigError("fd.n", str(exc)) from None
    res = solve_rectangle(domain, lambda X, Y: gt.u(X, Y, 0.0), lambda X, Y: gt.u_t(X, Y, 0.0), grid)
    return grid, res


def cmd_gen_data(cfg, out, threads):
    domain = read_domain(cfg)
    modes = read_modes(cfg, domain)
    method = cfg.get_str("source", "method", "exact", choices=("exact", "fd"))
    level = cfg.get_float("noise", "level", 0.0, lo=0)
    seed = cfg.get_int("noise", "seed", 0, lo=0)
    name = cfg.get_str("output", "trace", "trace.csv")
    gt = make_ground_truth(domain, modes)
    if method == "exact":
        n_b = cfg.get_int("trace", "N_b", 256, lo=4)
        n_t = cfg.get_int("trace", "N_t", 401, lo=2)
        t_min = cfg.get_float("trace", "t_min", -2.0)
        t_max = cfg.get_float("trace", "t_max", 2.0)
        if not t_max > t_min:
            raise ConfigError("trace.t_max", "must exceed trace.t_min")
        cfg.finish({"domain", "mode", "source", "noise", "output", "trace"})
        trace = exact_trace(gt, domain, n_b, t_min, t_max, n_t, threads)
    else:
        n, t_max, cfl = _fd_settings(cfg, domain)
        cfg.finish({"domain", "mode", "source", "noise", "output", "fd"})
        trace = _fd_run(domain, gt, n, t_max, cfl)[1].trace
    if level > 0 or cfg.has("noise"):
        trace = add_noise(trace, level, seed)
    trace.write_csv(out / name)
    print(f"gen-data: wrote {out / name} (N_b={trace.n_b}, N_t={trace.n_t}, provenance={trace.provenance})")
    return EXIT_OK


def cmd_solve_fd(cfg, out, threads):
    domain = read_domain(cfg)
    modes = read_modes(cfg, domain)
    levels = cfg.get_int("fd", "levels", 1, lo=1, hi=6)
    name = cfg.get_str("output", "trace", "trace_fd.csv")
    report = cfg.get_str("output", "report", "fd_report.csv")
    n0, t_max, cfl = _fd_settings(cfg, domain)
    cfg.finish({"domain", "mode", "fd", "output"})
    gt = make_ground_truth(domain, modes)
    rows = []
    prev = None
    first_trace = None
    for lev in range(levels):
        grid, res = _fd_run(domain, gt, n0 * 2**lev, t_max, cfl)
        tr = res.trace
        ex = exact_trace(gt, domain, tr.n_b, tr.t_min, tr.t_max, tr.n_t, threads)
        err = trace_l2_distance(tr, ex)
        drift = float((res.energy.max() - res.energy.min()) / np.mean(res.energy)) if res.energy.size else 0.0
        ratio = prev / err if prev else float("nan")
        rows.append([grid.nx, _g(grid.dx), _g(grid.dt), grid.t_steps, _g(err), _g(ratio), _g(drift)])
        prev = err
        if first_trace is None:
            first_trace = tr
    first_trace.write_csv(out / name)
    _write_rows(out / report, ["nx", "dx", "dt", "t_steps", "trace_l2_error", "error_ratio", "energy_rel_drift"], rows)
    print(f"solve-fd: wrote {out / name}; trace L2 error at finest level {rows[-1][4]}")
    return EXIT_OK


def _targets(cfg, domain):
    if cfg.has("reconstruct", "targets"):
        pts = []
        for chunk in cfg.get_list("reconstruct", "targets", sep=";"):
            parts = [p.strip() for p in chunk.split(",")]
            try:
                x, y, t = (float(p) for p in parts)
            except ValueError:
                raise ConfigError("reconstruct.targets", f"bad target {chunk!r}; expected 'x, y, t'") from None
            pts.append(R.TargetPoint(x, y, t))
        return pts
    if cfg.has("grid"):
        nx = cfg.get_int("grid", "nx", 11, lo=1)
        ny = cfg.get_int("grid", "ny", 11, lo=1)
        t_star = cfg.get_float("grid", "t_star", 0.0)
        margin = cfg.get_float("grid", "margin", 0.1, lo=0)
        if domain.kind == "disk":
            xs = np.linspace(-domain.R, domain.R, nx)
            ys = np.linspace(-domain.R, domain.R, ny)
        else:
            xs = np.linspace(0, domain.a, nx)
            ys = np.linspace(0, domain.b, ny)
        return [R.TargetPoint(float(x), float(y), t_star) for x in xs for y in ys
                if domain.contains(x, y, margin)]
    raise ConfigError("reconstruct.targets", "give targets or a [grid] section")


def _load_trace(cfg):
    path = cfg.get_str("input", "trace")
    return BoundaryTrace.read_csv(path)


def cmd_reconstruct(cfg, out, threads):
    trace = _load_trace(cfg)
    h_raw = cfg.get_str("reconstruct", "h", "auto")
    kp = _kernel_params(cfg)
    name = cfg.get_str("output", "results", "results.csv")
    gt = _truth_from(cfg, trace.domain)
    targets = _targets(cfg, trace.domain)
    cfg.finish({"input", "reconstruct", "grid", "kernel", "output", "domain", "mode"})
    if not targets:
        raise ConfigError("grid", "no targets inside the domain")
    if h_raw == "auto":
        h = max(R.default_h(trace, tp) for tp in targets)
    else:
        try:
            h = float(h_raw)
        except ValueError:
            raise ConfigError("reconstruct.h", f"not a number: {h_raw!r}") from None
        if not h > 0:
            raise ConfigError("reconstruct.h", "must be positive")
    results = R.reconstruct_grid(trace, targets, h, kp.with_h(h), truth=gt, threads=threads)
    R.write_results_csv(out / name, results)
    failed = [r for r in results if isinstance(r, R.FailedTarget)]
    errs = [r.abs_error for r in results if isinstance(r, R.ReconstructionResult) and r.abs_error is not None]
    msg = f"reconstruct: {len(results)} targets at h={h:.6g}"
    if errs:
        msg += f"; max abs_error = {max(errs):.6g}"
    if failed:
        msg += f"; {len(failed)} failed (first: {failed[0].error})"
    print(msg)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_sweep(cfg, out, threads):
    trace = _load_trace(cfg)
    h_list = cfg.get_float_list("sweep", "h_list", "0.16, 0.08, 0.04, 0.02", lo=0, lo_open=True)
    x, y, t = read_target(cfg, "sweep")
    kp = _kernel_params(cfg)
    name = cfg.get_str("output", "results", "sweep.csv")
    gt = _truth_from(cfg, trace.domain)
    cfg.finish({"input", "sweep", "kernel", "output", "domain", "mode"})
    results = R.h_sweep(trace, R.TargetPoint(x, y, t), h_list, kp, truth=gt)
    R.write_results_csv(out / name, results)
    summ = R.sweep_summary(results)
    print(f"sweep: {len(results)} widths; best h = {summ['best_h']}; "
          f"error increases as h shrinks: {summ['increases']}")
    return EXIT_OK


def cmd_stability_bench(cfg, out, threads):
    domain = read_domain(cfg)
    modes = read_modes(cfg, domain)
    h = cfg.get_float("bench", "h", 0.1, lo=0, lo_open=True)
    noise_raw = cfg.get_list("bench", "noise_levels", "0, 1e-4, 1e-3, 1e-2")
    noises = []
    for s in noise_raw:
        try:
            v = float(s)
        except ValueError:
            raise ConfigError("bench.noise_levels", f"not a number: {s!r}") from None
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError("bench.noise_levels", f"invalid level {s!r}")
        noises.append(v)
    seed = cfg.get_int("bench", "seed", 0, lo=0)
    trials = cfg.get_int("bench", "trials", 5, lo=1)
    orient = cfg.get_str("bench", "orientation", "both", choices=("far", "near", "both"))
    x, y, t = read_target(cfg, "bench") if cfg.has("bench", "target") else (0.3, 0.2, 0.1)
    tp = R.TargetPoint(x, y, t)
    far = domain.max_boundary_distance(x, y)
    n_b = cfg.get_int("trace", "N_b", 512, lo=4)
    n_t = cfg.get_int("trace", "N_t", 801, lo=2)
    t_min = cfg.get_float("trace", "t_min", t - far - 0.1)
    t_max = cfg.get_float("trace", "t_max", t + far + 0.1)
    kp = _kernel_params(cfg, h)
    name = cfg.get_str("output", "results", "stability.csv")
    cfg.finish({"domain", "mode", "bench", "trace", "kernel", "output"})

    gt = make_ground_truth(domain, modes)
    clean = exact_trace(gt, domain, n_b, t_min, t_max, n_t, threads)
    sides = ["far", "near"] if orient == "both" else [orient]
    cfgs = {s: R.cone_config(clean, tp, R.cone_alpha(domain, tp, s)) for s in sides}
    truth = float(gt.u(x, y, t))
    rows = []
    for raw, level in zip(noise_raw, noises):
        n_rep = 1 if level == 0 else trials
        full_sq, part_sq = 0.0, {s: 0.0 for s in sides}
        for k in range(n_rep):
            tr = clean if level == 0 else add_noise(clean, level, seed + k)
            full_sq += (R.reconstruct_point(tr, tp, h, kp).value - truth) ** 2
            for s in sides:
                part_sq[s] += (R.reconstruct_partial(tr, tp, h, cfgs[s], kp).value - truth) ** 2
        full = math.sqrt(full_sq / n_rep)
        for s in sides:
            part = math.sqrt(part_sq[s] / n_rep)
            rows.append([raw, s, _g(cfgs[s].alpha), _g(full), _g(part), _g(part / full if full > 0 else math.inf)])
    _write_rows(out / name, ["noise", "orientation", "alpha", "full_error", "partial_error", "ratio"], rows)
    for r in rows:
        print(f"stability-bench: noise={r[0]} orientation={r[1]} full={r[3]} partial={r[4]} ratio={r[5]}")
    return EXIT_OK


COMMANDS = {
    "validate-kernel": cmd_validate_kernel,
    "gen-data": cmd_gen_data,
    "solve-fd": cmd_solve_fd,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
    "stability-bench": cmd_stability_bench,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="wavecauchy", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI run configuration")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $WAVECAUCHY_THREADS or cpu count)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        try:
            threads = resolve_threads(args.threads)
        except ValueError as exc:
            raise ConfigError("--threads", str(exc)) from None
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WaveCauchyError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
