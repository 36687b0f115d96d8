"""Command-line entry point: ``maxsat-gnn <subcommand> [options]``.

Every run prints its resolved configuration as one JSON line prefixed with
``config`` so it can be reproduced. Usage errors exit 2, runtime failures 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cnf import EXAMPLE_FORMULA, eval_assignment, read_dimacs
from .dla import PickPolicy, all_small_formulas, run_dla, verify_half_bound
from .generator import GenSpec, derive_seed, generate_dataset, generate_instance
from .model import ModelConfig, load_checkpoint


def _bits(assignment) -> str:
    return "".join("1" if v else "0" for v in assignment)


def _print_config(name: str, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config " + json.dumps({"command": name, **cfg}, sort_keys=True, default=str))


def cmd_gen(args) -> int:
    spec = GenSpec(args.k, args.n, args.m, args.seed)
    manifest = generate_dataset(spec, args.count, args.out)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(f"wrote {manifest.count} instances of {spec.name} to {args.out} "
          f"(train {counts['train']}, val {counts['val']}, test {counts['test']})")
    return 0


def cmd_label(args) -> int:
    from .solver import label_dataset, load_labels

    path = label_dataset(args.manifest)
    labels = load_labels(path)
    mean = np.mean([r.optimum for r in labels.values()])
    print(f"labeled {len(labels)} instances, mean optimum {mean:.3f}, wrote {path}")
    return 0


def cmd_dla(args) -> int:
    formula = read_dimacs(args.cnf)
    assignment = run_dla(formula, args.policy, args.seed)
    res = eval_assignment(formula, assignment)
    print(f"assignment {_bits(assignment)}")
    print(f"satisfied {res.satisfied}/{res.total}")
    if not verify_half_bound(formula, assignment):
        print("half bound violated", file=sys.stderr)
        return 1
    return 0


def cmd_exact(args) -> int:
    from .solver import MAX_EXHAUSTIVE_VARS, solve_branch_bound, solve_exhaustive

    formula = read_dimacs(args.cnf)
    if args.method == "exhaustive":
        if formula.num_vars > MAX_EXHAUSTIVE_VARS:
            print(f"error: exhaustive search is limited to {MAX_EXHAUSTIVE_VARS} variables", file=sys.stderr)
            return 1
        result = solve_exhaustive(formula)
    else:
        result = solve_branch_bound(formula)
    print(f"optimum {result.optimum}")
    print(f"witness {_bits(result.witness)}")
    return 0


def _train_config(args):
    from .train import TrainConfig

    model = ModelConfig(args.model, args.d, getattr(args, "T", 10), args.param_seed)
    return TrainConfig(args.manifest, model, lr=args.lr, wd=args.wd, epochs=args.epochs,
                       node_cap=args.node_cap, seed=args.seed, eval_seed=args.eval_seed, out_dir=args.out)


def cmd_train(args) -> int:
    from .train import evaluate, train

    result = train(_train_config(args), progress=True)
    print(f"best epoch {result.best_epoch}; checkpoints in {args.out}")
    metrics = evaluate(result.checkpoint, args.manifest, "test", args.eval_seed, args.node_cap)
    print(f"test {metrics.cell()}")
    return 0


def cmd_eval(args) -> int:
    from .train import baseline_eval, evaluate

    if args.ckpt is None and args.baseline is None:
        print("error: give --ckpt or --baseline", file=sys.stderr)
        return 2
    if args.ckpt is not None:
        metrics = evaluate(load_checkpoint(args.ckpt), args.manifest, args.split, args.seed, args.node_cap)
        label = Path(args.ckpt).name
    else:
        metrics = baseline_eval(args.manifest, args.baseline, args.split, args.seed)
        label = args.baseline
    print(f"{label}: gap {metrics.gap:.4f} ratio {metrics.ratio:.4f} accuracy {metrics.accuracy:.4f}")
    print(metrics.cell())
    return 0


def cmd_sweep(args) -> int:
    from .train import format_sweep, layer_sweep, sweep_tsv

    T_list = [int(t) for t in args.T_list.split(",")]
    rows = layer_sweep(_train_config(args), T_list)
    print(format_sweep(rows), end="")
    if args.out:
        out = Path(args.out) / "sweep.tsv"
        out.write_text(sweep_tsv(rows))
        print(f"wrote {out}")
    return 0


def cmd_cross(args) -> int:
    from .train import cross_eval, format_grid, grid_tsv, load_dataset

    ckpts = [(Path(p).stem, load_checkpoint(p)) for p in args.ckpts]
    datasets = [load_dataset(p) for p in args.manifests]
    grid = cross_eval(ckpts, datasets, args.split, args.seed)
    rows, cols = [n for n, _ in ckpts], [d.name for d in datasets]
    print(format_grid(rows, cols, grid), end="")
    if args.table:
        Path(args.table).write_text(grid_tsv(rows, cols, grid))
        print(f"wrote {args.table}")
    return 0


def _selftest_checks(seed: int):
    from .gradcheck import check_model_gradients
    from .graphs import batch_graphs, build_graph
    from .model import Checkpoint, checkpoint_bytes, init_model, parse_checkpoint, predict_logits
    from .solver import solve_branch_bound, solve_exhaustive

    def dla_sweep():
        count = 0
        for n, k in ((1, 1), (2, 1), (2, 2), (3, 1), (3, 2)):
            for f in all_small_formulas(n, k, 3):
                for policy, s in ((PickPolicy.FIRST, None), (PickPolicy.RANDOM, seed)):
                    assert verify_half_bound(f, run_dla(f, policy, s)), f.clauses
                    count += 1
        return f"{count} formulas"

    def oracle():
        for i in range(200):
            rng = np.random.default_rng([seed, i])
            k, n = int(rng.integers(1, 4)), int(rng.integers(3, 11))
            f = generate_instance(GenSpec(k, n, int(rng.integers(1, 40)), derive_seed(seed, i)))
            a, b = solve_exhaustive(f), solve_branch_bound(f)
            assert a.optimum == b.optimum and a.witness == b.witness, i
            assert eval_assignment(f, b.witness).satisfied == b.optimum
        return "200 instances"

    def gradients():
        worst = []
        for kind in ("nsfg", "esfg"):
            _, res = check_model_gradients(EXAMPLE_FORMULA, kind)
            assert res.ok(1e-4), (kind, res.worst)
            worst.append(res.worst)
        return f"worst rel err {max(worst):.1e}"

    def batching():
        cfg = ModelConfig("esfg", 8, 3)
        params = init_model(cfg)
        forms = [generate_instance(GenSpec(2, 6, 12, derive_seed(seed, i))) for i in range(4)]
        graphs = [build_graph(f, "esfg") for f in forms]
        seeds = [derive_seed(seed, i) for i in range(4)]
        whole = predict_logits(batch_graphs(graphs), params, cfg, seeds)
        parts = np.concatenate([predict_logits(g, params, cfg, s) for g, s in zip(graphs, seeds)])
        assert np.max(np.abs(whole - parts)) <= 1e-5
        return "4 instances"

    def checkpoint():
        ckpt = Checkpoint(ModelConfig("nsfg", 8, 2), init_model(ModelConfig("nsfg", 8, 2)))
        data = checkpoint_bytes(ckpt)
        assert checkpoint_bytes(parse_checkpoint(data)) == data
        return f"{len(data)} bytes"

    return [("dla half bound", dla_sweep), ("oracle equivalence", oracle), ("gradient check", gradients),
            ("batch equivalence", batching), ("checkpoint round trip", checkpoint)]


def cmd_selftest(args) -> int:
    failed = 0
    for name, check in _selftest_checks(args.seed):
        try:
            detail = check()
            print(f"ok    {name}: {detail}")
        except AssertionError as exc:
            failed += 1
            print(f"FAIL  {name}: {exc}")
    return 1 if failed else 0


def _add_train_options(p: argparse.ArgumentParser, *, single_T: bool = True) -> None:
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=("nsfg", "esfg"), default="nsfg")
    p.add_argument("--d", type=int, default=64)
    if single_T:
        p.add_argument("--T", type=int, default=10)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--wd", type=float, default=1e-10)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--node-cap", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--param-seed", type=int, default=0)
    p.add_argument("--out", required=single_T, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxsat-gnn", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="cap on BLAS threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a uniform random Max-kSAT dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("label", help="solve every instance exactly and write labels.txt")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train a model")
    _add_train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or a baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--baseline", choices=("dla", "all-true", "random"), default=None)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--node-cap", type=int, default=4000)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dla", help="run the one-round local algorithm on a DIMACS file")
    p.add_argument("--cnf", required=True)
    p.add_argument("--policy", choices=[x.value for x in PickPolicy], default=PickPolicy.FIRST.value)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_dla)

    p = sub.add_parser("exact", help="solve a DIMACS file to optimality")
    p.add_argument("--cnf", required=True)
    p.add_argument("--method", choices=("bnb", "exhaustive"), default="bnb")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sweep", help="train and evaluate one model per layer count")
    _add_train_options(p, single_T=False)
    p.add_argument("--T-list", required=True, help="comma-separated layer counts, e.g. 1,2,5,10")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cross", help="evaluate every checkpoint on every dataset")
    p.add_argument("--ckpts", nargs="+", required=True)
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", default=None, help="also write a TSV table here")
    p.set_defaults(func=cmd_cross)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command == "dla" and (args.policy == PickPolicy.RANDOM.value) != (args.seed is not None):
        parser.error("--seed is required for, and only for, --policy seeded-random")
    _print_config(args.command, args)
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
