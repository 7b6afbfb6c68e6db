"""Command-line front door: prove, train, eval, gen-corpus, serve, and
grad-check subcommands.

All commands honor --seed and, with step-based limits, are end-to-end
deterministic.  Metrics land in a fixed-column CSV; parameters in versioned
JSON checkpoints.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import corpus as corpus_mod
from . import engine, fol, nn, protocol, trainer
from .engine import Limits, Status
from .policy import NeuralPolicy, PolicyConfig, init_params
from .trainer import ExampleBuffer, RewardConfig, TrainConfig
from .vectorize import VectorizerConfig

CSV_COLUMNS = ["iteration", "solved", "total", "completion_ratio",
               "cumulative_solved", "mean_proof_steps", "mean_reward",
               "mean_entropy", "tau"]


def load_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _take(config, cls, **overrides):
    names = set(cls.__dataclass_fields__)
    kwargs = {k: v for k, v in config.items() if k in names}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)


def build_configs(config, seed=None):
    vec_cfg = _take(config, VectorizerConfig)
    if "walk_lengths" in config:
        vec_cfg.walk_lengths = tuple(config["walk_lengths"])
    policy_cfg = _take(config, PolicyConfig,
                       embed_dim=config.get("embed_dim"))
    train_cfg = _take(config, TrainConfig, seed=seed)
    reward_cfg = _take(config, RewardConfig)
    return vec_cfg, policy_cfg, train_cfg, reward_cfg


def _checkpoint_policy(path, mode="eval"):
    params, _, extra = nn.load_checkpoint(path)
    vec_cfg = VectorizerConfig(**extra["vec_cfg"])
    policy_cfg = PolicyConfig(**extra["policy_cfg"])
    return params, policy_cfg, vec_cfg


def _make_policy(source, seed, config):
    if source == "random":
        return engine.random_policy
    if source == "heuristic":
        return engine.age_weight_policy
    if source.startswith("checkpoint:"):
        params, policy_cfg, vec_cfg = _checkpoint_policy(
            source.split(":", 1)[1])
        return NeuralPolicy(params, policy_cfg, vec_cfg, mode="eval")
    raise ValueError(f"unknown policy source '{source}'")


def cmd_prove(args):
    if not os.path.exists(args.problem):
        print(f"error: no such file: {args.problem}", file=sys.stderr)
        return 2
    try:
        with open(args.problem, "r", encoding="utf-8") as fh:
            problem = fol.parse_tptp(
                fh.read(), os.path.splitext(os.path.basename(args.problem))[0])
        policy = _make_policy(args.policy, args.seed, load_config(args.config))
        limits = Limits(max_steps=args.max_steps, max_seconds=args.max_seconds)
        trace = engine.run_episode(problem, policy, limits=limits,
                                   seed=args.seed)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"status: {trace.status.value}")
    print(f"steps: {trace.total_steps}")
    print(f"time: {trace.elapsed:.3f}s")
    if trace.status is Status.REFUTED:
        print("proof:")
        for cid in sorted(trace.proof.clause_ids):
            clause = trace.clauses[cid]
            parents = ", ".join(f"{p}:{r}" for p, r in clause.parents) or "input"
            print(f"  [{cid}] {clause}  <- {parents}")
        return 0
    return 1


def _iterate_training(problems, params, optimizer, policy_cfg, vec_cfg,
                      train_cfg, reward_cfg, out_dir, start_iteration=0,
                      tau=None, cumulative=None):
    buffer = ExampleBuffer(train_cfg.buffer_window)
    best_raw = {}
    tau = train_cfg.tau if tau is None else tau
    cumulative = set(cumulative or [])
    csv_path = os.path.join(out_dir, "metrics.csv")
    new_file = not os.path.exists(csv_path)
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(CSV_COLUMNS)
        for it in range(start_iteration, train_cfg.iterations):
            metrics, tau = trainer.train_iteration(
                problems, params, optimizer, policy_cfg, vec_cfg,
                train_cfg, reward_cfg, buffer, it, tau, best_raw)
            cumulative |= set(metrics.solved_names)
            writer.writerow([
                metrics.iteration, metrics.solved, metrics.total,
                f"{metrics.completion_ratio:.6f}", len(cumulative),
                f"{metrics.mean_proof_steps:.6f}",
                f"{metrics.mean_reward:.6f}",
                f"{metrics.mean_entropy:.6f}", f"{metrics.tau:.6f}"])
            fh.flush()
            nn.save_checkpoint(
                os.path.join(out_dir, f"checkpoint_{it:03d}.json"),
                params, optimizer,
                extra={"vec_cfg": vars(vec_cfg) | {"walk_lengths": list(vec_cfg.walk_lengths)},
                       "policy_cfg": vars(policy_cfg),
                       "iteration": it, "tau": tau,
                       "cumulative_solved": sorted(cumulative)})
    return cumulative


def cmd_train(args):
    config = load_config(args.config)
    vec_cfg, policy_cfg, train_cfg, reward_cfg = build_configs(
        config, seed=args.seed)
    if args.iterations is not None:
        train_cfg.iterations = args.iterations
    manifest, problems = corpus_mod.load_corpus(args.corpus)
    os.makedirs(args.output, exist_ok=True)
    trainer.compute_baselines(problems, reward_cfg,
                              Limits(max_steps=train_cfg.max_steps,
                                     max_seconds=train_cfg.max_seconds))
    # resume from the last checkpoint if one exists
    existing = sorted(f for f in os.listdir(args.output)
                      if f.startswith("checkpoint_"))
    if existing:
        params, opt_state, extra = nn.load_checkpoint(
            os.path.join(args.output, existing[-1]))
        optimizer = nn.Adam(params, lr=train_cfg.learning_rate)
        if opt_state:
            optimizer.load_state_dict(opt_state)
        start = extra["iteration"] + 1
        tau = extra["tau"]
        cumulative = extra.get("cumulative_solved", [])
    else:
        rng = np.random.default_rng(train_cfg.seed)
        params = init_params(vec_cfg.feature_length, policy_cfg, vec_cfg, rng)
        optimizer = nn.Adam(params, lr=train_cfg.learning_rate)
        start, tau, cumulative = 0, None, None
        if train_cfg.iterations == 0:
            csv_path = os.path.join(args.output, "metrics.csv")
            if not os.path.exists(csv_path):
                with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                    csv.writer(fh).writerow(CSV_COLUMNS)
            return 0
    _iterate_training(problems, params, optimizer, policy_cfg, vec_cfg,
                      train_cfg, reward_cfg, args.output,
                      start_iteration=start, tau=tau, cumulative=cumulative)
    return 0


def cmd_eval(args):
    params, policy_cfg, vec_cfg = _checkpoint_policy(args.checkpoint)
    manifest, problems = corpus_mod.load_corpus(args.corpus)
    if args.train_manifest:
        with open(args.train_manifest, "r", encoding="utf-8") as fh:
            train_names = {os.path.splitext(os.path.basename(f))[0]
                           for f in json.load(fh)["files"]}
        problems = [p for p in problems if p.name not in train_names]
        if not problems:
            print("warning: corpus empty after overlap filtering",
                  file=sys.stderr)
    limits = Limits(max_steps=args.max_steps, max_seconds=args.max_seconds)
    solved, steps = [], []
    for problem in problems:
        policy = NeuralPolicy(params, policy_cfg, vec_cfg, mode="eval")
        trace = engine.run_episode(problem, policy, limits=limits,
                                   seed=args.seed)
        if trace.solved:
            solved.append(problem.name)
            steps.append(trace.total_steps)
    row = [0, len(solved), len(problems),
           f"{(len(solved) / len(problems)) if problems else 0.0:.6f}",
           len(solved),
           f"{float(np.mean(steps)) if steps else 0.0:.6f}", "0.000000",
           "0.000000", "0.000000"]
    out = args.output or "eval_metrics.csv"
    new_file = not os.path.exists(out)
    with open(out, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(row)
    print(f"solved {len(solved)}/{len(problems)}")
    return 0


def cmd_gen_corpus(args):
    path = corpus_mod.gen_corpus(args.family, args.size, args.seed,
                                 args.output)
    print(path)
    return 0


def cmd_serve(args):
    params, policy_cfg, vec_cfg = _checkpoint_policy(args.checkpoint)

    def make_policy(mode):
        return NeuralPolicy(params, policy_cfg, vec_cfg, mode=mode)

    if args.stdio:
        server = protocol.GuidanceServer(make_policy)
        protocol.serve_stream(server, sys.stdin, sys.stdout)
        return 0
    host, port = args.address.rsplit(":", 1)
    srv = protocol.serve_tcp(host, int(port), make_policy)
    print(f"listening on {args.address}")
    srv.serve_forever()
    return 0


def cmd_grad_check(args):
    from .diagnostics import run_grad_checks
    worst = run_grad_checks(seed=args.seed)
    status = 0
    for name, err in worst.items():
        ok = err < 1e-4
        print(f"{name}: max rel err {err:.3e} {'ok' if ok else 'FAIL'}")
        status |= 0 if ok else 1
    return status


def build_parser():
    parser = argparse.ArgumentParser(
        prog="satguide",
        description="neural-guided saturation theorem-proving workbench")
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prove", help="run one proof attempt")
    p.add_argument("problem")
    p.add_argument("--policy", default="heuristic",
                   help="random | heuristic | checkpoint:PATH")
    p.add_argument("--max-steps", type=int, default=2000)
    p.add_argument("--max-seconds", type=float, default=100.0)
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("train", help="iterated RL training on a corpus")
    p.add_argument("corpus", help="corpus manifest.json")
    p.add_argument("--output", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("corpus")
    p.add_argument("checkpoint")
    p.add_argument("--train-manifest", default=None,
                   help="filter out overlapping problems by name")
    p.add_argument("--max-steps", type=int, default=2000)
    p.add_argument("--max-seconds", type=float, default=100.0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("family", choices=corpus_mod.FAMILIES)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("serve", help="guidance protocol endpoint")
    p.add_argument("checkpoint")
    p.add_argument("--address", default="127.0.0.1:7049")
    p.add_argument("--stdio", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("grad-check", help="finite-difference gradient audit")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
