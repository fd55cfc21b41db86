"""Command line entry points: reconstruct, train-eval, bench, export-embeddings."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from hyperprop.bench import (ExperimentSpec, accuracy, derive_seed, export_embeddings,
                             run_grid)
from hyperprop.data import (MASK_MODES, MaskedFeatures, generate_mask, load_bundle,
                            make_splits, read_features, write_features)
from hyperprop.gcn import TrainConfig, normalize_adjacency, train_gcn
from hyperprop.hypergraph import HYPERGRAPH_MODES
from hyperprop.propagation import FUSION_MODES, SghfpConfig, fp_baseline, sghfp_reconstruct


def _add_bundle_args(p):
    p.add_argument("--bundle", required=True, type=Path, help="dataset bundle directory")
    p.add_argument("--largest-component", action="store_true",
                   help="keep only the largest connected component")
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--n-val", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)


def _setup(args):
    bundle = load_bundle(args.bundle, args.largest_component)
    splits = make_splits(bundle.labels, args.train_per_class, args.n_val,
                         derive_seed(args.seed, "split"))
    return bundle, splits


def cmd_reconstruct(args):
    bundle, splits = _setup(args)
    known = generate_mask(*bundle.features.shape, args.rate, args.mask_mode,
                          derive_seed(args.seed, "mask"))
    mf = MaskedFeatures.from_full(bundle.features, known)
    if args.method == "fp":
        result = fp_baseline(bundle.graph, mf, args.steps)
        config = {"steps": args.steps}
    else:
        cfg = SghfpConfig(rounds=args.rounds, steps=args.steps, knn_k=args.knn,
                          hypergraph_mode=args.hypergraph_mode, fusion=args.fusion,
                          gcn=TrainConfig(seed=derive_seed(args.seed, "gcn")),
                          seed=derive_seed(args.seed, "sghfp"))
        result, _ = sghfp_reconstruct(bundle, mf, splits, cfg)
        config = {"rounds": cfg.rounds, "steps": cfg.steps, "knn": cfg.knn_k,
                  "hypergraph_mode": cfg.hypergraph_mode, "fusion": cfg.fusion,
                  "rebuild_feature_hypergraph": cfg.rebuild_feature_hypergraph}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_features(out / ("features.f32" if args.format == "f32" else "features.csv"),
                   result.features, args.format)
    with open(out / "energy.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "energy"])
        for i, e in enumerate(result.energy_trace, 1):
            w.writerow([i, repr(float(e))])
    meta = {"bundle": bundle.name, "method": args.method, "rate": args.rate,
            "mask_mode": args.mask_mode, "seed": args.seed,
            "largest_component": args.largest_component,
            "known_fraction": float(known.mean()), **config}
    (out / "reconstruction.json").write_text(json.dumps(meta, indent=1) + "\n")
    print(f"wrote {out}")


def _train_on_file(args):
    bundle, splits = _setup(args)
    x = read_features(args.features)
    if x.shape != bundle.features.shape:
        raise SystemExit(f"{args.features}: shape {x.shape} does not match bundle "
                         f"{bundle.features.shape}")
    trained = train_gcn(normalize_adjacency(bundle.graph), x, bundle.labels, splits,
                        TrainConfig(seed=derive_seed(args.seed, "eval")))
    return bundle, splits, x, trained


def cmd_train_eval(args):
    bundle, splits, _, trained = _train_on_file(args)
    print(f"test_accuracy {accuracy(trained.predict(), bundle.labels, splits.test):.6f}")


def cmd_export_embeddings(args):
    bundle, _, x, trained = _train_on_file(args)
    score = export_embeddings(bundle, x, trained.params, args.out)
    print(f"silhouette {score:.6f}")


def cmd_bench(args):
    spec = ExperimentSpec.from_json(args.spec)
    _, summary = run_grid(spec, args.out, args.workers)
    for row in summary:
        print(f"{row['method']:>16} rate={row['rate']:<5} "
              f"acc={row['mean']:.4f}+-{row['std']:.4f} drop={row['relative_drop']:.4f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="hyperprop")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="reconstruct masked features")
    _add_bundle_args(p)
    p.add_argument("--rate", type=float, required=True, help="missing rate in [0, 1]")
    p.add_argument("--mask-mode", choices=MASK_MODES, default="uniform-entry")
    p.add_argument("--method", choices=("fp", "sghfp"), default="sghfp")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--fusion", choices=FUSION_MODES, default="soft-dot")
    p.add_argument("--hypergraph-mode", choices=HYPERGRAPH_MODES, default="topology")
    p.add_argument("--format", choices=("csv", "f32"), default="csv")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train-eval", help="train the downstream GCN and print test accuracy")
    _add_bundle_args(p)
    p.add_argument("--features", required=True, type=Path)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("bench", help="run an experiment grid from a JSON spec")
    p.add_argument("--spec", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: HYPERPROP_THREADS or 1)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-embeddings", help="write GCN hidden embeddings as CSV")
    _add_bundle_args(p)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
