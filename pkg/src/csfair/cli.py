"""Command-line interface: train, sweep, eval, verify, gen-synth, report.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage/config
error.  All commands are deterministic given their flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import gaussian
from .data import (
    Dataset,
    Schema,
    gen_synthetic,
    load_csv,
    prepare_splits,
    synthetic_schema,
    write_dataset_csv,
)
from .divergence import cs_divergence
from .errors import InvalidArgumentError
from .kernels import BandwidthMode, KernelFamily, KernelSpec
from .metrics import EvalInput, evaluate_all
from .model import forward, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, sweep, train

RESULT_SCHEMA_VERSION = 1
KERNEL_NAMES = {
    "rbf": KernelFamily.GAUSSIAN_RBF,
    "laplacian": KernelFamily.LAPLACIAN,
    "poly2": KernelFamily.POLYNOMIAL_DEG2,
}
REG_NAMES = {
    "none": "none",
    "cs": "cs",
    "mmd": "mmd",
    "hsic": "hsic",
    "dp": "dp_gap",
    "eo": "eo_gap",
    "eodd": "eodd_gap",
    "pr": "pr",
    "kl": "kl",
    "dcov": "dcov",
}
SWEEP_COLUMNS = [
    "alpha",
    "beta",
    "seed",
    "regularizer",
    "acc",
    "auc",
    "dp",
    "eo",
    "eodd",
    "ppv_gap",
    "prule",
    "bfp",
    "bfn",
    "abcc",
    "status",
]
METRIC_KEYS = {
    "acc": "accuracy",
    "auc": "auc",
    "dp": "dp",
    "eo": "eo",
    "eodd": "eodd",
    "ppv_gap": "ppv_gap",
    "prule": "prule",
    "bfp": "bfp_gap",
    "bfn": "bfn_gap",
    "abcc": "abcc",
}


def _default_seed() -> int:
    return int(os.environ.get("CSFAIR_SEED", "0"))


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--reg", default="none", choices=sorted(REG_NAMES))
    p.add_argument("--mode", default="dp", choices=["dp", "eo", "eodd"])
    p.add_argument(
        "--target",
        default="auto",
        choices=["auto", "prediction", "hidden"],
        help="auto: hidden for mmd, prediction otherwise",
    )
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--hidden-sizes", default="32,16")
    p.add_argument("--kernel", default="rbf", choices=sorted(KERNEL_NAMES))
    p.add_argument("--bandwidth", default="1.0", help="positive number or 'median'")
    p.add_argument(
        "--multi-attr",
        default="single",
        choices=["single", "sum_per_attribute", "joint_groups"],
    )
    p.add_argument("--split-frac", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=0.5)


def _build_config(args, seed: int) -> TrainConfig:
    if args.bandwidth == "median":
        kernel = KernelSpec(
            KERNEL_NAMES[args.kernel], 1.0, BandwidthMode.MEDIAN_HEURISTIC
        )
    else:
        kernel = KernelSpec(KERNEL_NAMES[args.kernel], float(args.bandwidth))
    hidden = tuple(int(h) for h in str(args.hidden_sizes).split(",") if h)
    return TrainConfig(
        regularizer=REG_NAMES[args.reg],
        mode=args.mode,
        target=args.target,
        alpha=args.alpha,
        beta=args.beta,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        kernel=kernel,
        seed=seed,
        multi_attr=args.multi_attr,
        hidden_sizes=hidden,
        threshold=args.threshold,
    )


def _load_splits(args, seed: int) -> tuple[Dataset, Dataset]:
    schema = Schema.from_json(args.schema)
    raw = load_csv(args.data, schema)
    return prepare_splits(raw, schema, args.split_frac, seed)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fmt_metric(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{float(v):.10g}"


def cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    config = _build_config(args, seed)
    train_set, test_set = _load_splits(args, seed)
    result = train(config, train_set, test_set)
    record = _jsonable(result.to_record())
    with open(args.out, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.checkpoint:
        save_checkpoint(result.params, args.checkpoint)
    m = result.metrics
    print(
        f"acc={m['accuracy']:.4f} auc={_fmt_metric(m['auc'])} "
        f"dp={_fmt_metric(m['dp'])} eo={_fmt_metric(m['eo'])} -> {args.out}"
    )
    return 0


def _parse_grid(text: str, cast) -> list:
    values = [cast(v) for v in str(text).split(",") if v != ""]
    if not values:
        raise InvalidArgumentError("empty grid")
    return values


def cmd_sweep(args) -> int:
    seeds = _parse_grid(args.seeds, int)
    alphas = _parse_grid(args.alphas, float)
    betas = _parse_grid(args.betas, float)
    config = _build_config(args, seeds[0])
    train_set, test_set = _load_splits(args, seeds[0])
    cells = sweep(config, alphas, betas, seeds, train_set, test_set, jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for i, cell in enumerate(cells):
            row = [f"{cell.alpha:g}", f"{cell.beta:g}", str(cell.seed), args.reg]
            if cell.status == "ok":
                m = cell.result.metrics
                row += [_fmt_metric(m[METRIC_KEYS[c]]) for c in SWEEP_COLUMNS[4:-1]]
            else:
                row += ["nan"] * (len(SWEEP_COLUMNS) - 5)
            row.append(cell.status)
            writer.writerow(row)
            cell_path = os.path.join(args.out_dir, f"cell_{i:04d}.json")
            tmp_path = cell_path + ".tmp"
            payload = (
                _jsonable(cell.result.to_record())
                if cell.result is not None
                else {"status": cell.status, "error": cell.error}
            )
            with open(tmp_path, "w") as jf:
                json.dump(payload, jf, indent=2, sort_keys=True)
                jf.write("\n")
            os.replace(tmp_path, cell_path)
    n_ok = sum(1 for c in cells if c.status == "ok")
    print(f"{n_ok}/{len(cells)} cells ok -> {csv_path}")
    if args.figures:
        from .report import render_tradeoff_figures

        for path in render_tradeoff_figures(csv_path, args.out_dir):
            print(f"figure -> {path}")
    return 0 if n_ok >= 1 else 1


def cmd_eval(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if not os.path.exists(args.checkpoint):
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 2
    params = load_checkpoint(args.checkpoint)
    _, test_set = _load_splits(args, seed)
    if test_set.X.shape[1] != params.input_dim:
        print(
            f"checkpoint expects {params.input_dim} features, data has "
            f"{test_set.X.shape[1]}",
            file=sys.stderr,
        )
        return 2
    z = forward(params, test_set.X).probs
    metrics = evaluate_all(
        EvalInput(z, test_set.y, test_set.S, threshold=args.threshold)
    )
    record = _jsonable({"schema_version": RESULT_SCHEMA_VERSION, "metrics": metrics})
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_verify(args) -> int:
    if args.trials < 1:
        print("--trials must be >= 1", file=sys.stderr)
        return 2
    dims = _parse_grid(args.dims, int)
    report = gaussian.verify_cs_kl_inequality(args.trials, dims, args.seed)
    print(
        f"cs<=kl check: {report['trials']} trials, "
        f"max violation {report['max_violation']:.3e}"
    )
    ok = report["passed"]
    if not ok:
        print(f"violating instance: {report['worst_instance']}", file=sys.stderr)

    # estimator-vs-quadrature agreement on seeded 1-d instances
    rng = np.random.default_rng(args.seed)
    max_gap = 0.0
    for _ in range(10):
        n = int(rng.integers(40, 120))
        P = rng.normal(rng.uniform(-1, 1), 1.0, size=(n, 1))
        Q = rng.normal(rng.uniform(-1, 1), 1.0, size=(n, 1))
        sigma_kde = 0.5
        spec = KernelSpec(bandwidth=np.sqrt(2.0) * sigma_kde)
        est = cs_divergence(P, Q, spec).value
        quad = gaussian.kde_quadrature_cs(P, Q, sigma_kde)
        max_gap = max(max_gap, abs(est - quad))
    print(f"estimator-vs-quadrature: max abs gap {max_gap:.3e}")
    if max_gap > 1e-3:
        ok = False
    return 0 if ok else 1


def cmd_gen_synth(args) -> int:
    dataset = gen_synthetic(args.n, args.bias, args.d, args.seed)
    write_dataset_csv(dataset, args.out)
    schema_path = args.out + ".schema.json"
    synthetic_schema(args.d).to_json(schema_path)
    meta_path = args.out + ".meta.json"
    with open(meta_path, "w") as fh:
        json.dump(
            {"n_per_group_label": args.n, "bias": args.bias, "d": args.d, "seed": args.seed},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"{dataset.n} rows -> {args.out} (+ schema, meta)")
    return 0


def cmd_report(args) -> int:
    from .report import render_tradeoff_figures

    for path in render_tradeoff_figures(args.csv, args.out_dir):
        print(f"figure -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csfair",
        description="Fairness-regularized training with kernel divergence measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write a JSON result record")
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default="")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid sweep over alpha/beta/seeds")
    _add_train_flags(p)
    p.add_argument("--alphas", required=True)
    p.add_argument("--betas", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--figures", action="store_true", help="also render trade-off figures")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="re-evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--split-frac", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="check the Gaussian CS<=KL bound and the quadrature oracle")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--dims", default="1,2,5")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-synth", help="generate a synthetic biased dataset CSV")
    p.add_argument("--n", type=int, required=True, help="samples per (group, label) cell")
    p.add_argument("--bias", type=float, required=True)
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("report", help="render trade-off figures from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
