"""Command-line entry point.

Subcommands: ``prepare`` (ratings file -> dataset cache and folds),
``train`` (checkpoint + loss trace), ``evaluate`` (metric report),
``recommend`` (top-K list for one user), ``ablate`` (the eight-variant
matrix), ``case-study`` (margins for similar vs dissimilar negatives).

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

import argparse
import os
import sys

import numpy as np

from . import bilevel, checkpoint, data, evaluator, synth
from .bilevel import NumericFailure
from .config import echo_lines, load_config_file, make_config
from . import margin_net

# Ablation matrix: margin scheme x embedding kind x relations x feature mode.
ABLATION_VARIANTS = {
    1: dict(distance_kind="euclidean", margin_mode="fixed:1.0", relations="ui"),
    2: dict(distance_kind="w2", margin_mode="fixed:1.0", relations="ui"),
    3: dict(distance_kind="euclidean", margin_mode="adaptive", relations="ui",
            indicator_mode="squared-diff"),
    4: dict(distance_kind="euclidean", margin_mode="adaptive", relations="ui",
            indicator_mode="concat"),
    5: dict(distance_kind="euclidean", margin_mode="adaptive", relations="ui",
            indicator_mode="sum"),
    6: dict(distance_kind="w2", margin_mode="adaptive", relations="ui"),
    7: dict(distance_kind="w2", margin_mode="adaptive", relations="ui,uu,ii",
            margin_mode_uu="fixed:1.0", margin_mode_ii="fixed:1.0"),
    8: dict(distance_kind="w2", margin_mode="adaptive", relations="ui,uu,ii"),
}

_CONFIG_FLAGS = [
    "h", "hidden", "alpha", "lam", "epochs", "batch-size", "neg-samples",
    "pool-size", "refresh-period", "sim-threshold", "ks", "seed",
    "margin-mode", "margin-mode-uu", "margin-mode-ii", "relations",
    "indicator-mode", "eval-every", "eps-fd", "sigma0", "mu-std", "optimizer",
    "margin-grad-to-theta", "outer-batch", "early-stop-patience",
]


def _add_config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    for flag in _CONFIG_FLAGS:
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), metavar="V")
    p.add_argument("--distance-kind", "--distance", dest="distance_kind", metavar="V")
    p.add_argument("--joint-margin-training", dest="joint_margin_training",
                   action="store_const", const="true")
    p.add_argument("--deterministic", dest="deterministic",
                   action="store_const", const="true")


def _config_from_args(args):
    values = dict(load_config_file(args.config)) if args.config else {}
    for key in [f.replace("-", "_") for f in _CONFIG_FLAGS] + [
            "distance_kind", "joint_margin_training", "deterministic"]:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return make_config(file_values=values)


def cmd_prepare(args):
    cfg = _config_from_args(args)
    pairs = data.ingest(args.ratings, rating_threshold=args.rating_threshold)
    ds = data.filter_iterative(pairs, min_user=args.min_user, min_item=args.min_item)
    ds.check()
    splits = data.split_five_fold(ds, cfg.seed)
    data.save_dataset(args.out_dir, ds)
    data.save_folds(args.out_dir, splits)
    with open(os.path.join(args.out_dir, "prepare_config.txt"), "w") as f:
        f.write(f"rating_threshold = {args.rating_threshold}\n")
        f.write(f"min_user = {args.min_user}\n")
        f.write(f"min_item = {args.min_item}\n")
        for line in echo_lines(cfg):
            f.write(line + "\n")
    density = ds.n_interactions / (ds.n_users * ds.n_items)
    print(f"users {ds.n_users}  items {ds.n_items}  "
          f"interactions {ds.n_interactions}  density {100 * density:.3f}%")
    return 0


def cmd_train(args):
    cfg = _config_from_args(args)
    ds = data.load_dataset(args.dataset_dir)
    fold = data.load_folds(args.dataset_dir, ds)[args.fold]
    os.makedirs(args.out_dir, exist_ok=True)
    result = bilevel.train(ds, fold, cfg, cache_dir=args.dataset_dir,
                           log=print if not args.quiet else None)
    checkpoint.save(os.path.join(args.out_dir, "checkpoint.bin"), result,
                    fold_index=args.fold)
    bilevel.write_trace(os.path.join(args.out_dir, "trace.csv"),
                        result.trace, header_lines=echo_lines(cfg))
    if result.evals:
        print(evaluator.format_table(result.evals[-1][1], title="final evaluation"))
    return 0


def cmd_evaluate(args):
    ck = checkpoint.load(args.checkpoint)
    ds = data.load_dataset(args.dataset_dir)
    fold = data.load_folds(args.dataset_dir, ds)[ck.fold_index]
    ks = tuple(int(k) for k in args.ks.split(",")) if args.ks else ck.cfg.ks
    report = evaluator.evaluate(ck.users, ck.items, fold, ks, ck.cfg.kind())
    print(evaluator.format_table(report, title=f"fold {ck.fold_index}"))
    if args.out:
        evaluator.write_report_csv(args.out, [report],
                                   header_lines=echo_lines(ck.cfg))
    return 0


def cmd_recommend(args):
    ck = checkpoint.load(args.checkpoint)
    ds = data.load_dataset(args.dataset_dir)
    fold = data.load_folds(args.dataset_dir, ds)[ck.fold_index]
    user_index = ds.user_index()
    if args.user not in user_index:
        raise ValueError(f"unknown user id {args.user!r}")
    u = user_index[args.user]
    topk = evaluator.rank(u, ck.users, ck.items, fold.train_rows[u],
                          ck.cfg.kind(), k=args.k)
    d2 = evaluator.pairwise_distances(ck.users, ck.items, ck.cfg.kind(),
                                      user_idx=np.array([u]))[0]
    for rank_pos, item in enumerate(topk, start=1):
        print(f"{rank_pos:>3}  {ds.item_ids[item]}  {d2[item]:.6f}")
    return 0


def cmd_ablate(args):
    base = _config_from_args(args)
    ds = data.load_dataset(args.dataset_dir)
    fold = data.load_folds(args.dataset_dir, ds)[args.fold]
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = ([int(v) for v in args.variants.split(",")]
                if args.variants else sorted(ABLATION_VARIANTS))
    lines = ["variant,seed,recall10,ndcg10"]
    means = {}
    for variant in variants:
        overrides = dict(ABLATION_VARIANTS[variant])
        r10s, n10s = [], []
        for seed in seeds:
            cfg = make_config(file_values={**_raw_config_values(args),
                                           **overrides, "seed": str(seed)})
            result = bilevel.train(ds, fold, cfg, cache_dir=args.dataset_dir)
            report = evaluator.evaluate(result.users, result.items, fold,
                                        (10,), cfg.kind())
            r10s.append(report.recall[10])
            n10s.append(report.ndcg[10])
            lines.append(f"{variant},{seed},{report.recall[10]!r},{report.ndcg[10]!r}")
            print(f"variant {variant} seed {seed}: "
                  f"R@10={report.recall[10]:.4f} N@10={report.ndcg[10]:.4f}")
        means[variant] = (float(np.mean(r10s)), float(np.mean(n10s)))
    lines.append("variant,mean_recall10,mean_ndcg10,")
    for variant in variants:
        r, n = means[variant]
        lines.append(f"{variant},{r!r},{n!r},")
    out = args.out or os.path.join(args.dataset_dir, "ablation.csv")
    with open(out, "w") as f:
        for line in echo_lines(base):
            f.write(f"# {line}\n")
        f.write("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def _raw_config_values(args):
    values = dict(load_config_file(args.config)) if args.config else {}
    for key in [f.replace("-", "_") for f in _CONFIG_FLAGS] + [
            "distance_kind", "joint_margin_training", "deterministic"]:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def cmd_case_study(args):
    ck = checkpoint.load(args.checkpoint)
    if "ui" not in ck.phis:
        raise ValueError("checkpoint has no user-item margin net (fixed-margin run?)")
    ds = data.load_dataset(args.dataset_dir)
    labels = synth.load_item_labels(args.dataset_dir, ds)
    fold = data.load_folds(args.dataset_dir, ds)[ck.fold_index]
    rng = np.random.default_rng(args.seed)
    users_pick = np.sort(rng.choice(ds.n_users, size=min(args.n_users, ds.n_users),
                                    replace=False))
    print(f"{'user':>8}  {'positive':>10}  {'negative':>10}  {'label':>9}  margin")
    rows = []
    for u in users_pick:
        train = fold.train_rows[u]
        if len(train) == 0:
            continue
        pos = int(rng.choice(train))
        full = np.union1d(fold.train_rows[u], fold.test_rows[u])
        unseen = np.setdiff1d(np.arange(ds.n_items), full)
        same = [i for i in unseen if labels[i] == labels[pos]]
        diff = [i for i in unseen if labels[i] != labels[pos]]
        if not same or not diff:
            continue
        for tag, neg in (("similar", int(rng.choice(same))),
                         ("dissimilar", int(rng.choice(diff)))):
            m = _margin_of(ck, u, pos, neg)
            rows.append((ds.user_ids[u], ds.item_ids[pos], ds.item_ids[neg], tag, m))
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    for user, pos, neg, tag, m in rows:
        print(f"{user:>8}  {pos:>10}  {neg:>10}  {tag:>9}  {m:.4f}")
    return 0


def _margin_of(ck, u, pos, neg):
    # deterministic margin inputs: the means, no sampling
    s = margin_net.margin_input(ck.cfg.indicator_mode, ck.users.mu[u],
                                ck.items.mu[pos], ck.items.mu[neg])
    m, _ = margin_net.forward(ck.phis["ui"], s)
    return float(m[0])


def build_parser():
    parser = argparse.ArgumentParser(prog="pmlam")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ratings file -> dataset cache + folds")
    p.add_argument("ratings")
    p.add_argument("out_dir")
    p.add_argument("--rating-threshold", type=float, default=4.0)
    p.add_argument("--min-user", type=int, default=10)
    p.add_argument("--min-item", type=int, default=5)
    _add_config_args(p)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train on one fold")
    p.add_argument("dataset_dir")
    p.add_argument("--out-dir", default="run")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    _add_config_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint")
    p.add_argument("dataset_dir")
    p.add_argument("checkpoint")
    p.add_argument("--ks")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("recommend", help="top-K items for one user")
    p.add_argument("dataset_dir")
    p.add_argument("checkpoint")
    p.add_argument("user")
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(fn=cmd_recommend)

    p = sub.add_parser("ablate", help="run the eight-variant matrix")
    p.add_argument("dataset_dir")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--variants", help="comma list, default all eight")
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("case-study", help="margins for similar vs dissimilar negatives")
    p.add_argument("dataset_dir")
    p.add_argument("checkpoint")
    p.add_argument("--n-users", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_case_study)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
