"""Command-line harness: ``ddimlab sample|sweep|verify``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 too many failed trajectories.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import diagnostics as D
from . import samplers as S
from .config import ExperimentConfig
from .errors import ConfigError, DDIMLabError, FailureFractionError
from .laws import IsotropicGaussian

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_FAILURES = 0, 1, 2, 3


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class _CSV:
    """CSV writer that starts with a '# ddimlab <version> config_sha256=<hash>' line."""

    def __init__(self, path, header, cfg_hash):
        self.fh = open(path, "w", newline="")
        self.fh.write(f"# ddimlab {__version__} config_sha256={cfg_hash}\n")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(header)

    def row(self, values):
        self.w.writerow([_fmt(v) for v in values])

    def close(self):
        self.fh.close()


def _metrics(cfg, p, law, ref_grid, points, n_total, n_failed):
    """KL and TV of terminal samples against the data law.

    Gaussian data under linear processes: the terminal law is Gaussian, so KL
    uses the moment-matched Gaussian (with a delta-method standard error).
    Otherwise KL and TV use equal-mass histogram bins of the data law (1-D).
    """
    out = {"kl": float("nan"), "kl_se": float("nan"), "tv": float("nan")}
    n = points.shape[0]
    if isinstance(law, IsotropicGaussian) and p.is_linear:
        m = points.mean(axis=0)
        v = float(points.var(axis=0, ddof=1).mean())
        fit = IsotropicGaussian(m, v)
        out["kl"] = D.kl_gaussian(fit, law)
        d = law.dim
        se_v = v * math.sqrt(2.0 / (d * (n - 1))) if n > 1 else float("nan")
        out["kl_se"] = abs(0.5 * d * (1.0 / law.variance - 1.0 / v)) * se_v
    if p.dim == 1:
        target = ref_grid if ref_grid is not None else law
        if "tv" in cfg["metrics"]:
            out["tv"] = D.tv_hist_vs_grid(points, target)
        if not isinstance(law, IsotropicGaussian) or not p.is_linear:
            out["kl"] = _hist_kl(points, target)
    return out


def _hist_kl(points, q):
    x = np.asarray(points).ravel()
    bins = int(math.ceil(x.size ** (1.0 / 3.0) - 1e-9))
    grid = D._as_grid(q)
    inner = grid.quantile(np.arange(1, bins) / bins)
    counts = np.bincount(np.searchsorted(inner, x, side="right"), minlength=bins)
    pk = counts / x.size
    nz = pk > 0
    return float(np.sum(pk[nz] * np.log(pk[nz] * bins)))


def _run_one(cfg, p, law, scfg, threads):
    score, ref_grid = cfg.build_score(p, law, scfg.h)
    t0 = time.perf_counter()
    failed_exc = None
    try:
        ens, excess, n_failed = S.run_sampler(p, score, scfg, cfg["N"], threads=threads)
    except FailureFractionError as exc:
        failed_exc = exc
        ens, excess, n_failed = exc.result
    runtime = time.perf_counter() - t0
    metrics = _metrics(cfg, p, law, ref_grid, ens.points, cfg["N"], n_failed)
    return ens, excess, n_failed, metrics, runtime, failed_exc


def cmd_sample(cfg, out_dir, threads):
    p, law = cfg.build_process(), cfg.build_data_law()
    scfg = cfg.sampler_config()
    ens, excess, n_failed, metrics, runtime, failed_exc = _run_one(cfg, p, law, scfg, threads)
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.config_hash()
    w = _CSV(os.path.join(out_dir, "samples.csv"), ["trajectory_id"] + [f"x_{i}" for i in range(p.dim)], h)
    for i, row in zip(ens.ids, ens.points):
        w.row([int(i)] + list(row))
    w.close()
    w = _CSV(os.path.join(out_dir, "excess.csv"), ["step", "mean_sq_v1", "mean_sq_v2", "mean_sq_v3"], h)
    if excess is not None:
        for k, a, b, c in zip(excess.steps, excess.mean_sq_v1, excess.mean_sq_v2, excess.mean_sq_v3):
            w.row([int(k), a, b, c])
    w.close()
    N = cfg["N"]
    w = _CSV(os.path.join(out_dir, "summary.csv"), ["metric", "value"], h)
    for name, value in [("kl", metrics["kl"]), ("kl_se", metrics["kl_se"]), ("tv", metrics["tv"]),
                        ("failure_fraction", n_failed / N), ("n_failed", n_failed), ("N", N),
                        ("h", scfg.h), ("ell", scfg.ell), ("lambda", scfg.lam), ("T", scfg.T),
                        ("delta_ell", S.delta_ell(scfg.ell)), ("xi_ell", S.xi_ell(scfg.ell))]:
        w.row([name, value])
    w.close()
    with open(os.path.join(out_dir, "timing.txt"), "w") as fh:
        fh.write(f"runtime_seconds={runtime!r}\nthreads={threads}\n")
    print(f"sample: N={N} failed={n_failed} kl={metrics['kl']:.6g} tv={metrics['tv']:.6g} "
          f"runtime={runtime:.3f}s -> {out_dir}")
    if failed_exc is not None:
        print(f"error: {failed_exc}", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_sweep(cfg, out_dir, threads):
    cells = cfg.sweep_cells()
    p, law = cfg.build_process(), cfg.build_data_law()
    report = D.ConvergenceReport(metadata={"process": p.kind, "data": repr(law), "seed": cfg["seed"]})
    timings, kl_se, breach = [], [], False
    for h, ell, lam in cells:
        scfg = cfg.sampler_config(h=h, ell=ell, lam=lam, record_excess=False)
        _, _, n_failed, m, runtime, exc = _run_one(cfg, p, law, scfg, threads)
        breach |= exc is not None
        report.add_row(h=h, ell=ell, lam=lam, N=cfg["N"], kl=m["kl"], tv=m["tv"],
                       failure_fraction=n_failed / cfg["N"], runtime_seconds=runtime)
        kl_se.append(m["kl_se"])
        timings.append(runtime)
        print(f"cell h={h!r} ell={ell} lambda={lam!r}: kl={m['kl']:.6g} tv={m['tv']:.6g} "
              f"failed={n_failed} ({runtime:.2f}s)")
    os.makedirs(out_dir, exist_ok=True)
    hsh = cfg.config_hash()
    fields = [f for f in D.ROW_FIELDS if f != "runtime_seconds"]
    w = _CSV(os.path.join(out_dir, "report.csv"), list(fields) + ["kl_se", "ellh"], hsh)
    for r, se in zip(report.rows, kl_se):
        w.row([r[f] for f in fields] + [se, r["h"] * r["ell"]])
    w.close()
    # slopes per axis that actually varies
    w = _CSV(os.path.join(out_dir, "slopes.csv"), ["axis", "metric", "slope", "half_width", "points"], hsh)
    cols = {"h": report.column("h"), "ell": report.column("ell"), "lam": report.column("lam"),
            "ellh": report.column("h") * report.column("ell")}
    for axis in ("h", "ell", "ellh"):
        xs = cols[axis]
        if np.unique(xs).size < 2:
            continue
        for metric in cfg["metrics"]:
            ys = report.column(metric)
            ok = np.isfinite(ys) & (ys > 0) & (xs > 0)
            if np.unique(xs[ok]).size >= 2 and ok.sum() >= 2:
                slope, half, _ = D.fit_loglog_slope(xs[ok], ys[ok])
                report.slopes[axis] = (metric, slope, half)
                w.row([axis, metric, slope, half, int(ok.sum())])
    w.close()
    with open(os.path.join(out_dir, "timing.csv"), "w") as fh:
        fh.write("cell,runtime_seconds\n")
        for i, t in enumerate(timings):
            fh.write(f"{i},{t!r}\n")
    for axis, (metric, slope, half) in report.slopes.items():
        print(f"slope {metric} vs {axis}: {slope:.4f} +/- {half:.4f}")
    return EXIT_FAILURES if breach else EXIT_OK


def cmd_verify(cfg, suite, out_dir=None):
    from . import verify
    if suite not in verify.SUITES:
        print(f"error: unknown suite {suite!r}; choose from {sorted(verify.SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = verify.run_suite(suite, seed=cfg["seed"] if cfg is not None else 0)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        if not r.passed and r.witness is not None:
            print(f"    failing tuple: {r.witness}")
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ddimlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("sample", "sweep", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", required=name != "verify")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--threads", type=int, metavar="N")
        if name == "verify":
            sp.add_argument("suite", nargs="?", default="all")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        overrides = {"seed": args.seed, "out_dir": args.out, "threads": args.threads}
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must fit in 64 unsigned bits")
        if args.config is not None:
            cfg = ExperimentConfig.from_file(args.config, overrides=overrides)
        else:
            cfg = ExperimentConfig.from_text("", overrides=overrides)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        out_dir, threads = cfg["out_dir"], cfg["threads"]
        if args.command == "sample":
            return cmd_sample(cfg, out_dir, threads)
        return cmd_sweep(cfg, out_dir, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DDIMLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
