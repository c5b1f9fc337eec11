"""Command-line interface: ``lightsbm {train,sample,eval,oracle}``.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric failure,
5 output not writable.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_OUTPUT = 0, 2, 3, 4, 5
PLAN_KINDS = {"independent": "independent", "minibatch": "minibatch_ot", "paired": "paired"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _floats(text, name):
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"--{name}: expected comma-separated numbers, got {text!r}", EXIT_USAGE) from None


def _vector(text, dim, name):
    import numpy as np

    vals = _floats(text, name)
    if len(vals) == 1:
        vals = vals * dim
    if len(vals) != dim:
        raise CliError(f"--{name}: expected 1 or {dim} values, got {len(vals)}", EXIT_USAGE)
    return np.array(vals)


def _diag_cov(text, dim, name):
    import numpy as np

    diag = _vector(text, dim, name)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise CliError(f"--{name}: covariance diagonal must be positive", EXIT_USAGE)
    return np.diag(diag)


def _check_writable(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise CliError(f"cannot write output {path}: directory {parent} is not writable", EXIT_OUTPUT)
    if Path(path).is_dir():
        raise CliError(f"cannot write output {path}: is a directory", EXIT_OUTPUT)


def _read(path):
    from .io import read_csv

    try:
        return read_csv(path)
    except OSError as err:
        raise CliError(f"cannot read {path}: {err.strerror}", EXIT_DATA) from None
    except ValueError as err:
        raise CliError(str(err), EXIT_DATA) from None


def _load_ckpt(path):
    from .io import load_checkpoint

    try:
        return load_checkpoint(path)
    except OSError as err:
        raise CliError(f"cannot read checkpoint {path}: {err.strerror}", EXIT_DATA) from None
    except (ValueError, KeyError, TypeError) as err:
        raise CliError(f"invalid checkpoint {path}: {err}", EXIT_DATA) from None


def _oracle_from_args(args, dim, eps):
    from .oracle import gaussian_eot_plan, validate_closed_form

    validate_closed_form()
    return gaussian_eot_plan(
        _vector(args.m0, dim, "m0"),
        _diag_cov(args.c0, dim, "c0"),
        _vector(args.m1, dim, "m1"),
        _diag_cov(args.c1, dim, "c1"),
        eps,
    )


def cmd_train(args):
    import numpy as np

    from .io import save_checkpoint, write_csv
    from .trainer import TrainConfig, TrainingError, train

    if args.iters < 1:
        raise CliError("--iters must be >= 1", EXIT_USAGE)
    trace_path = args.trace or str(Path(args.out).with_suffix("")) + "_trace.csv"
    _check_writable(args.out)
    _check_writable(trace_path)
    src = _read(args.source)
    tgt = _read(args.target)
    if src.shape[1] != tgt.shape[1]:
        raise CliError(
            f"dimension mismatch: {args.source} has D={src.shape[1]}, {args.target} has D={tgt.shape[1]}",
            EXIT_DATA,
        )
    paired = None
    if args.plan == "paired":
        paired = _read(args.paired_target) if args.paired_target else tgt
        if paired.shape != src.shape:
            raise CliError("paired mode needs row-aligned source and target files", EXIT_DATA)
    try:
        config = TrainConfig(
            eps=args.eps,
            n_components=args.components,
            batch_size=args.batch,
            n_iters=args.iters,
            learning_rate=args.lr,
            seed=args.seed,
            sampler=PLAN_KINDS[args.plan],
            init_scale=args.init_scale,
            ot_block=args.ot_block,
        )
    except ValueError as err:
        raise CliError(str(err), EXIT_USAGE) from None
    start = time.perf_counter()
    try:
        result = train(config, src, tgt, paired_target=paired)
    except TrainingError as err:
        save_checkpoint(err.last_checkpoint, args.out)
        raise CliError(f"{err}; last good checkpoint written to {args.out}", EXIT_NUMERIC) from None
    except ValueError as err:
        raise CliError(str(err), EXIT_DATA) from None
    wall = time.perf_counter() - start
    save_checkpoint(result.checkpoint, args.out)
    trace = np.column_stack([np.arange(1, config.n_iters + 1), result.loss_trace])
    write_csv(trace_path, trace)
    print(f"final_loss={result.loss_trace[-1]:.10g}")
    print(f"wall_time_s={wall:.3f}")
    return EXIT_OK


def cmd_sample(args):
    import numpy as np

    from .io import write_csv
    from .potential import drift, sample_endpoints
    from .processes import PairBatch, euler_maruyama, sample_reciprocal

    if args.mode == "sde" and args.sde_steps is None:
        raise CliError("--mode sde requires --sde-steps", EXIT_USAGE)
    times = np.array(_floats(args.times, "times"))
    if times.size == 0 or np.any(times < 0) or np.any(times > 1):
        raise CliError("--times must be values in [0, 1]", EXIT_USAGE)
    _check_writable(args.out)
    v = _load_ckpt(args.ckpt).potential
    x0 = _read(args.input)
    if x0.shape[1] != v.dim:
        raise CliError(f"input has D={x0.shape[1]} but checkpoint has D={v.dim}", EXIT_DATA)
    rng = np.random.default_rng(args.seed)

    if args.mode == "plan":
        grid = np.union1d(times, [0.0, 1.0])
        x1 = sample_endpoints(v, x0, rng)
        traj = sample_reciprocal(PairBatch(x0, x1), grid, v.eps, rng)
        idx = np.searchsorted(grid, times)
    else:
        if args.sde_steps < 1:
            raise CliError("--sde-steps must be >= 1", EXIT_USAGE)
        try:
            traj = euler_maruyama(lambda x, t: drift(v, x, t), x0, v.eps, args.sde_steps, rng)
        except FloatingPointError as err:
            raise CliError(str(err), EXIT_NUMERIC) from None
        idx = np.rint(times * args.sde_steps).astype(int)
    n, d = x0.shape
    pts = traj.points[:, idx, :]  # (N, L, D)
    t_col = np.broadcast_to(traj.times[idx][None, :, None], (n, idx.size, 1))
    rows = np.concatenate([t_col, pts], axis=2).reshape(n * idx.size, d + 1)
    write_csv(args.out, rows)
    return EXIT_OK


def _eval_metric(args):
    import numpy as np

    from . import metrics
    from .hardsb import mc_drift, phi_from_mixture
    from .oracle import gaussian_sb_drift, sample_bridge_marginal
    from .potential import conditional_moments, drift, sample_conditional

    rng = np.random.default_rng(args.seed)
    need = {
        "bw-uvp": ("samples", "reference"),
        "energy": ("samples", "reference"),
        "cbw-uvp": ("ckpt",),
        "dynkl": ("ckpt",),
        "drift-xcheck": ("ckpt",),
    }[args.metric]
    missing = [f"--{k}" for k in need if getattr(args, k) is None]
    if missing:
        raise CliError(f"--metric {args.metric} requires {', '.join(missing)}", EXIT_USAGE)

    if args.metric in ("bw-uvp", "energy"):
        a, b = _read(args.samples), _read(args.reference)
        if a.shape[1] != b.shape[1]:
            raise CliError("sample files have different dimensions", EXIT_DATA)
        if args.metric == "bw-uvp":
            return metrics.MetricReport("bw-uvp", metrics.bw_uvp(a, b), a.shape[0] + b.shape[0])
        stat, thr, p = metrics.energy_permutation_test(a, b, n_perm=args.n_perm, rng=rng)
        return metrics.MetricReport(
            "energy", stat, a.shape[0] + b.shape[0],
            {"threshold_95": thr, "p_value": p, "passes_null": bool(stat <= thr)},
        )

    v = _load_ckpt(args.ckpt).potential
    if args.metric == "drift-xcheck":
        phi = phi_from_mixture(v)
        worst = 0.0
        for _ in range(args.n_configs):
            k = rng.integers(v.n_components)
            x = v.means[k] + np.sqrt(v.eps * v.variances[k]) * rng.standard_normal(v.dim)
            t = rng.uniform(0.0, 0.9)
            g = drift(v, x, t)
            g_mc = mc_drift(phi, x, t, v.eps, args.mc_samples, rng)
            worst = max(worst, float(np.linalg.norm(g_mc - g) / max(np.linalg.norm(g), 1e-12)))
        return metrics.MetricReport(
            "drift-xcheck", worst, args.n_configs * args.mc_samples, {"n_configs": args.n_configs}
        )

    if args.m1 is None:
        raise CliError(f"--metric {args.metric} requires the oracle flags --m0 --c0 --m1 --c1", EXIT_USAGE)
    oracle = _oracle_from_args(args, v.dim, v.eps)
    if args.metric == "cbw-uvp":
        probes = _read(args.probes)[: args.n_probes] if args.probes else oracle.sample_source(args.n_probes, rng)
        if probes.shape[1] != v.dim:
            raise CliError("probe file dimension differs from checkpoint", EXIT_DATA)
        if args.exact:
            return metrics.cbw_uvp_moments(lambda x: conditional_moments(v, x), oracle.conditional_moments, probes)
        return metrics.cbw_uvp(
            lambda x0, n: sample_conditional(v, x0, n, rng),
            lambda x0, n: oracle.sample_conditional(x0, n, rng),
            probes,
            n_per_x0=args.n_per_x0,
        )

    t_grid = np.linspace(0.0, 1.0 - 1e-4, args.n_times)
    kl_fwd, kl_rev, curves = metrics.dynamic_kl(
        lambda x, t: drift(v, x, t),
        lambda x, t: gaussian_sb_drift(oracle, x, t),
        lambda t, n, r: sample_bridge_marginal(oracle, t, n, r),
        lambda n, r: oracle.sample_source(n, r),
        v.eps,
        t_grid,
        args.n,
        n_sde_steps=args.sde_steps or 1000,
        rng=rng,
    )
    if args.curve_out:
        from .io import write_csv

        write_csv(args.curve_out, np.column_stack([curves["t"], curves["l2_fwd"], curves["l2_rev"]]))
    return metrics.MetricReport("dynkl", kl_fwd, args.n, {"kl_forward": kl_fwd, "kl_reverse": kl_rev})


def cmd_eval(args):
    if args.curve_out:
        _check_writable(args.curve_out)
    try:
        report = _eval_metric(args)
    except FloatingPointError as err:
        raise CliError(str(err), EXIT_NUMERIC) from None
    print(report.as_text())
    return EXIT_OK


def cmd_oracle(args):
    import numpy as np

    from .datasets import gaussian, swiss_roll
    from .io import write_csv

    if args.dim < 1:
        raise CliError("--dim must be >= 1", EXIT_USAGE)
    if args.n < 1:
        raise CliError("--n must be >= 1", EXIT_USAGE)
    prefix = args.out_prefix
    for suffix in ("_src.csv", "_tgt.csv", "_paired.csv"):
        _check_writable(prefix + suffix)
    rng = np.random.default_rng(args.seed)

    if args.type == "swiss-roll":
        if args.dim != 2:
            raise CliError("--type swiss-roll is 2-D only", EXIT_USAGE)
        write_csv(prefix + "_src.csv", gaussian(args.n, rng))
        write_csv(prefix + "_tgt.csv", swiss_roll(args.n, rng))
        return EXIT_OK

    if args.eps is None:
        raise CliError("--type gaussian requires --eps", EXIT_USAGE)
    oracle = _oracle_from_args(args, args.dim, args.eps)
    write_csv(prefix + "_src.csv", oracle.sample_source(args.n, rng))
    write_csv(prefix + "_tgt.csv", oracle.sample_target(args.n, rng))
    x0, x1 = oracle.sample_plan(args.n, rng)
    write_csv(prefix + "_paired.csv", np.hstack([x0, x1]))
    return EXIT_OK


def _add_oracle_flags(p, required):
    p.add_argument("--m0", default="0", help="source mean: scalar or comma list")
    p.add_argument("--c0", default="1", help="source covariance diagonal: scalar or comma list")
    p.add_argument("--m1", default="0" if required else None, help="target mean")
    p.add_argument("--c1", default="1", help="target covariance diagonal")


def build_parser():
    parser = argparse.ArgumentParser(prog="lightsbm", description="Gaussian-mixture Schrödinger bridge matching.")
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread count (set before numeric work)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a potential by bridge matching")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--components", type=int, default=100)
    p.add_argument("--plan", choices=sorted(PLAN_KINDS), default="independent")
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-scale", type=float, default=0.1)
    p.add_argument("--ot-block", type=int, default=None, help="minibatch plan: exact-OT block size")
    p.add_argument("--paired-target", default=None)
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--trace", default=None, help="loss trace CSV (default <out>_trace.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample trajectories from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="CSV of start points x0")
    p.add_argument("--mode", choices=("plan", "sde"), default="plan")
    p.add_argument("--times", default="0,1", help="comma list of output times in [0, 1]")
    p.add_argument("--sde-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compute a metric and print key=value lines")
    p.add_argument("--metric", required=True, choices=("bw-uvp", "cbw-uvp", "energy", "dynkl", "drift-xcheck"))
    p.add_argument("--ckpt")
    p.add_argument("--samples")
    p.add_argument("--reference")
    p.add_argument("--probes", help="CSV of x0 probe points for cbw-uvp")
    p.add_argument("--n-probes", type=int, default=100, help="probe count (caps --probes file rows)")
    p.add_argument("--n-per-x0", type=int, default=1000)
    p.add_argument("--exact", action="store_true", help="cbw-uvp from exact conditional moments")
    p.add_argument("--n-perm", type=int, default=200)
    p.add_argument("--n", type=int, default=2000, help="samples per time for dynkl")
    p.add_argument("--n-times", type=int, default=101)
    p.add_argument("--sde-steps", type=int, default=None)
    p.add_argument("--n-configs", type=int, default=20)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--curve-out")
    p.add_argument("--seed", type=int, default=0)
    _add_oracle_flags(p, required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="write ground-truth datasets")
    p.add_argument("--type", choices=("gaussian", "swiss-roll"), default="gaussian")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    _add_oracle_flags(p, required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        _set_threads(args.threads)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
