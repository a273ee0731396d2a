"""Command-line entry point: train-policy, build-index, synth, eval, gradcheck, report.

Exit codes: 0 success, 1 validation error (bad flags, missing or malformed
inputs), 2 runtime failure. Every command accepts --seed and identical
seeded invocations produce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .domain import (
    FormatError,
    Query,
    QueryType,
    load_products,
    load_queries,
    parse_rewrite_list,
    render_rewrite_list,
)
from .language_model import NGramLM
from .metrics import MetricsReport, load_judgments, report_from_judgments
from .pipeline import PipelineConfig, PolicyGenerator, run_pipeline
from .policy import (
    CategoricalRewritePolicy,
    TrainConfig,
    TrainStats,
    grad_check,
    sample_response,
    train,
)
from .retrieval import VectorIndex, build_index
from .rewards import RewardWeights, response_reward, total_reward
from .scorers import mock_qsr_logits


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is exit 1
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tailsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train-policy", help="optimize a rewrite policy")
    p_train.add_argument("--queries", required=True)
    p_train.add_argument("--products", required=True, help="corpus for the product language model")
    p_train.add_argument("--policy", required=True, help="initial policy JSON")
    p_train.add_argument("--out", required=True, help="trained policy JSON")
    p_train.add_argument("--stats", help="per-iteration stats CSV")
    p_train.add_argument("--iterations", type=int, default=200)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--k", type=int, default=5)
    p_train.add_argument("--group-size", type=int, default=8)
    p_train.add_argument("--step-size", type=float, default=0.5)
    p_train.add_argument("--alpha", type=float, default=1.0)
    p_train.add_argument("--beta", type=float, default=0.5)
    p_train.add_argument("--gamma", type=float, default=0.1)
    p_train.add_argument("--lm-order", type=int, default=3)
    p_train.add_argument("--lm-delta", type=float, default=0.1)

    p_index = sub.add_parser("build-index", help="embed products and build the search index")
    p_index.add_argument("--products", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--dim", type=int, default=256)
    p_index.add_argument("--partitions", type=int, default=64)
    p_index.add_argument("--seed", type=int, default=0)

    p_synth = sub.add_parser("synth", help="run the full synthesis pipeline")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--queries", required=True)
    p_synth.add_argument("--products", required=True)
    p_synth.add_argument("--out", required=True, help="pairs JSONL")
    p_synth.add_argument("--stats", help="stage stats JSON")
    p_synth.add_argument("--policy", help="rewrite policy JSON (overrides config)")
    p_synth.add_argument("--index", help="prebuilt index artifact")
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--top-k", type=int)
    p_synth.add_argument("--threshold", type=float)
    p_synth.add_argument("--jobs", type=int, help="cap on remote scorer concurrency")

    p_eval = sub.add_parser("eval", help="compute metrics from a judgments file")
    p_eval.add_argument("--judgments", required=True)
    p_eval.add_argument("--out", help="metrics report JSON")
    p_eval.add_argument("--n", type=int, action="append", help="goodrate cutoff (repeatable)")
    p_eval.add_argument("--seed", type=int, default=0)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the policy gradient")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--h", type=float, default=1e-5)

    p_report = sub.add_parser("report", help="render stats/metrics tables")
    p_report.add_argument("--stats", help="training stats CSV")
    p_report.add_argument("--metrics", help="metrics report JSON")
    p_report.add_argument("--stage-stats", help="pipeline stage stats JSON")
    p_report.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_train_policy(args) -> int:
    queries = load_queries(args.queries)
    products = load_products(args.products)
    policy = CategoricalRewritePolicy.load(args.policy)
    lm = NGramLM.fit(
        [list(p.title) for p in products], order=args.lm_order, delta=args.lm_delta
    )
    weights = RewardWeights(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    cfg = TrainConfig(
        step_size=args.step_size,
        group_size=args.group_size,
        iterations=args.iterations,
        k=args.k,
        seed=args.seed,
    )

    def reward_fn(query, rlist):
        try:
            parsed = parse_rewrite_list(
                render_rewrite_list(rlist), min_k=cfg.k, source_query_id=query.id
            )
        except FormatError:
            return total_reward(0.0, 0.0, 0.0, format_ok=False, weights=weights)
        return response_reward(query, parsed, mock_qsr_logits, lm, weights)

    trained, stats = train(policy, queries, reward_fn, cfg)
    trained.save(args.out)
    if args.stats:
        stats.to_csv(args.stats)
    if len(stats):
        print(
            f"trained {cfg.iterations} iterations: "
            f"mean total {stats.mean_total[0]:.4f} -> {stats.mean_total[-1]:.4f}"
        )
    print(f"policy written to {args.out}")
    return 0


def _cmd_build_index(args) -> int:
    products = load_products(args.products)
    index = build_index(products, dim=args.dim, partitions=args.partitions)
    index.save(args.out)
    print(f"indexed {index.size} products in {index.partitions} partitions -> {args.out}")
    return 0


def _cmd_synth(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.top_k is not None:
        overrides["top_k"] = args.top_k
    if args.threshold is not None:
        overrides["business_threshold"] = args.threshold
    if overrides:
        cfg = replace(cfg, **overrides)
    if args.jobs is not None:
        caps = {
            name: replace(getattr(cfg, name), max_inflight=args.jobs)
            for name in ("rewrite_filter", "qsr", "business", "general")
        }
        cfg = replace(cfg, **caps)
    policy_path = args.policy or cfg.policy_path
    if policy_path is None:
        raise _UsageError("no rewrite policy: pass --policy or set policy_path in the config")
    if args.policy is None and cfg.policy_path is not None:
        # relative policy paths resolve against the config file location
        policy_path = str((Path(args.config).parent / cfg.policy_path).resolve())
    policy = CategoricalRewritePolicy.load(policy_path)
    queries = load_queries(args.queries)
    products = load_products(args.products)
    index = VectorIndex.load(args.index) if args.index else None
    generator = PolicyGenerator(
        policy, k=cfg.rewrite_k, seed=cfg.seed, mode=cfg.generator_mode
    )
    pairs, stats = run_pipeline(
        cfg,
        queries,
        products,
        generator,
        out_path=args.out,
        stats_path=args.stats,
        index=index,
    )
    print(f"emitted {len(pairs)} pairs -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    judgments = load_judgments(args.judgments)
    at_n = tuple(args.n) if args.n else (10, 100)
    report = report_from_judgments(judgments, at_n=at_n)
    print(report.render_table())
    if args.out:
        report.to_file(args.out)
    return 0


def _gradcheck_case(seed: int):
    """Deterministic random policy and sample batch for the gradient check."""
    rng = np.random.default_rng(seed)
    candidates = tuple(f"candidate {chr(ord('a') + i)}" for i in range(6))
    queries = [
        Query(f"gc-{i:02d}", f"probe query {i}", QueryType.KNOWLEDGE) for i in range(3)
    ]
    policy = CategoricalRewritePolicy(
        candidates=candidates,
        logits={q.id: rng.normal(0, 1.5, size=len(candidates)) for q in queries},
        default_logits=rng.normal(0, 1.5, size=len(candidates)),
    )
    batch = []
    for query in queries:
        for _ in range(4):
            rlist, _ = sample_response(policy, query, 4, rng)
            batch.append((query, rlist, float(rng.uniform(0.0, 2.0))))
    return policy, batch


def _cmd_gradcheck(args) -> int:
    policy, batch = _gradcheck_case(args.seed)
    err = grad_check(policy, batch, h=args.h)
    print(f"max relative error: {err:.3e}")
    return 0


def _cmd_report(args) -> int:
    if not (args.stats or args.metrics or args.stage_stats):
        raise _UsageError("report needs --stats, --metrics, or --stage-stats")
    if args.stats:
        stats = TrainStats.from_csv(args.stats)
        n = len(stats)
        if n == 0:
            print("(no training iterations)")
        else:
            print(f"{'iter':>6}  {'mean_total':>10}  {'mean_qsr':>9}  "
                  f"{'mean_pda':>9}  {'mean_div':>9}  {'grad_norm':>10}")
            step = max(1, n // 10)
            shown = sorted(set(range(0, n, step)) | {n - 1})
            for i in shown:
                print(
                    f"{i:>6}  {stats.mean_total[i]:>10.4f}  {stats.mean_qsr[i]:>9.4f}  "
                    f"{stats.mean_pda[i]:>9.4f}  {stats.mean_div[i]:>9.4f}  "
                    f"{stats.grad_norm[i]:>10.4f}"
                )
    if args.metrics:
        with open(args.metrics, "r", encoding="utf-8") as fh:
            report = MetricsReport.from_dict(json.load(fh))
        print(report.render_table())
    if args.stage_stats:
        with open(args.stage_stats, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        stages = payload.get("stages", {})
        name_w = max((len(s) for s in stages), default=5)
        print(f"{'stage':<{name_w}}  {'input':>8}  {'output':>8}  {'dropped':>8}  reasons")
        for name, c in stages.items():
            reasons = ", ".join(f"{k}={v}" for k, v in sorted(c["reasons"].items())) or "-"
            print(
                f"{name:<{name_w}}  {c['input']:>8}  {c['output']:>8}  "
                f"{c['dropped']:>8}  {reasons}"
            )
    return 0


_HANDLERS = {
    "train-policy": _cmd_train_policy,
    "build-index": _cmd_build_index,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
