"""Reward assignment, the policy-gradient + entropy loss, and the iterated
rollout/train loop with an example buffer and temperature decay.

Rollouts against a frozen parameter snapshot are pure per problem; the
optimizer loop is single-threaded and owns the parameters during updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine, nn, policy as policy_mod
from .engine import Limits, RULES, Status
from .policy import NeuralPolicy, PolicyConfig
from .vectorize import VectorizerConfig


@dataclass
class RewardConfig:
    source: str = "steps"                 # steps | time
    normalization: str = "baseline_inverse"  # none | baseline_inverse | best_so_far
    r_min: float = 1.0
    r_max: float = 2.0
    bounded: bool = True
    baselines: dict = field(default_factory=dict)  # problem name -> cost

    def __post_init__(self):
        if self.source not in ("steps", "time"):
            raise ValueError(f"unknown reward source '{self.source}'")
        if self.normalization not in ("none", "baseline_inverse", "best_so_far"):
            raise ValueError(f"unknown normalization '{self.normalization}'")
        if self.r_min > self.r_max:
            raise ValueError("r_min must not exceed r_max")


@dataclass
class Experience:
    problem_id: str
    iteration: int
    step: int
    chosen: int
    reward: float
    tau: float
    proc_feats: list
    conj_feats: list
    action_feats: list
    rule_indices: list
    proc_dags: list = None
    conj_dags: list = None
    action_dags: list = None


class ExampleBuffer:
    """Keeps experiences from the current plus the most recent w iterations."""

    def __init__(self, window):
        if window < 0:
            raise ValueError("window must be non-negative")
        self.window = window
        self._by_iteration = {}

    def add(self, iteration, experiences):
        self._by_iteration.setdefault(iteration, []).extend(experiences)
        cutoff = iteration - self.window
        for k in [k for k in self._by_iteration if k < cutoff]:
            del self._by_iteration[k]

    def all(self):
        out = []
        for k in sorted(self._by_iteration):
            out.extend(self._by_iteration[k])
        return out


@dataclass
class TrainConfig:
    iterations: int = 10
    epochs: int = 10
    learning_rate: float = 0.001
    entropy_coeff: float = 0.004        # lambda
    tau: float = 3.0
    tau_decay: float = 0.89
    tau0: int = 11000
    buffer_window: int = 2              # w
    batch_size: int = 32
    max_steps: int = 200
    max_seconds: float = 100.0
    seed: int = 0
    zero_reward_cap: int = 32

    def __post_init__(self):
        if not 0 < self.tau_decay <= 1:
            raise ValueError("tau decay must be in (0, 1]")


def episode_cost(trace, source):
    if source == "time":
        return max(trace.elapsed, 1e-9)
    return max(trace.total_steps, 1)


def normalize_and_bound(raw, cfg: RewardConfig, problem_id=None,
                        cost=None, best_raw=None):
    """Apply the configured normalization then clamp nonzero rewards to
    [r_min, r_max]; zero rewards pass through unclamped."""
    if raw == 0.0:
        return 0.0
    value = raw
    if cfg.normalization == "baseline_inverse":
        if problem_id not in cfg.baselines:
            raise KeyError(f"no baseline cost recorded for '{problem_id}'")
        value = raw * cfg.baselines[problem_id]
    elif cfg.normalization == "best_so_far":
        value = raw / (best_raw if best_raw else raw)
    if cfg.bounded:
        value = min(max(value, cfg.r_min), cfg.r_max)
    return value


def assign_rewards(trace, proof, cfg: RewardConfig, best_raw_table=None):
    """Per-step rewards: zero everywhere for unsolved episodes; on solved
    episodes, steps whose derived clauses reach the empty clause's ancestor
    closure get 1/cost, normalized and bounded."""
    rewards = []
    if proof is None:
        return [0.0] * len(trace.steps)
    cost = episode_cost(trace, cfg.source)
    raw = 1.0 / cost
    best_raw = None
    if cfg.normalization == "best_so_far" and best_raw_table is not None:
        prev = best_raw_table.get(trace.problem.name)
        best_raw = max(prev, raw) if prev else raw
        best_raw_table[trace.problem.name] = best_raw
    closure = proof.clause_ids
    for record in trace.steps:
        if any(d in closure for d in record.derived_ids):
            rewards.append(normalize_and_bound(raw, cfg, trace.problem.name,
                                               cost, best_raw))
        else:
            rewards.append(0.0)
    return rewards


def experiences_from_trace(trace, rewards, iteration, feature_cache, tau,
                           zero_reward_cap=32):
    """Freeze the vectorized snapshots a loss recomputation needs.

    Zero-reward steps are capped per episode; they only feed the entropy
    term.
    """
    conj_clauses = [trace.clauses[cid] for cid in trace.conjecture_ids]
    conj_feats = [feature_cache.sparse_features(c) for c in conj_clauses]
    conj_dags = [feature_cache.dag(c) for c in conj_clauses]
    out = []
    zero_used = 0
    for record, reward in zip(trace.steps, rewards):
        if reward == 0.0:
            if zero_used >= zero_reward_cap:
                continue
            zero_used += 1
        proc = [trace.clauses[cid] for cid in record.processed_ids]
        acts = [trace.clauses[cid] for _, cid in record.actions]
        out.append(Experience(
            problem_id=trace.problem.name,
            iteration=iteration,
            step=record.t,
            chosen=record.chosen,
            reward=reward,
            tau=tau,
            proc_feats=[feature_cache.sparse_features(c) for c in proc],
            conj_feats=conj_feats,
            action_feats=[feature_cache.sparse_features(c) for c in acts],
            rule_indices=[list(RULES).index(rule) for rule, _ in record.actions],
            proc_dags=[feature_cache.dag(c) for c in proc],
            conj_dags=conj_dags,
            action_dags=[feature_cache.dag(c) for c in acts],
        ))
    return out


def compute_loss(batch, params, policy_cfg, vec_cfg, lam=0.004,
                 train=True, dropout_rng_seed=0):
    """L = -mean[r log P(a|s)] - lambda mean[entropy(P(.|s))], recomputed
    from the stored feature caches under the current parameters."""
    if not batch:
        raise ValueError("empty batch")
    rng = np.random.default_rng(dropout_rng_seed)
    pg_terms = []
    ent_terms = []
    for exp in batch:
        scores = policy_mod.policy_forward(
            exp.proc_feats, exp.conj_feats, exp.action_feats,
            exp.rule_indices, params, policy_cfg, vec_cfg=vec_cfg,
            proc_dags=exp.proc_dags, conj_dags=exp.conj_dags,
            action_dags=exp.action_dags, train=train, rng=rng)
        dist = nn.softmax_scores(scores, exp.tau)
        logdist = nn.log_softmax_scores(scores, exp.tau)
        logp = nn.gather_row(logdist, exp.chosen)
        pg_terms.append(nn.mul(nn.constant(exp.reward), logp))
        # entropy from logits: -sum p log p with both factors well-defined
        ent_terms.append(nn.mul(nn.constant(-1.0),
                                nn.vsum(nn.mul(dist, logdist))))
    n = nn.constant(1.0 / len(batch))
    pg = nn.mul(_sum_vars(pg_terms), n)
    ent = nn.mul(_sum_vars(ent_terms), n)
    loss = nn.sub(nn.mul(nn.constant(-1.0), pg),
                  nn.mul(nn.constant(lam), ent))
    if not math.isfinite(float(loss.data)):
        raise FloatingPointError("NaN loss")
    return loss


def _sum_vars(vs):
    acc = vs[0]
    for v in vs[1:]:
        acc = nn.add(acc, v)
    return acc


def compute_baselines(problems, reward_cfg, limits):
    """Reference costs from the built-in age-weight heuristic."""
    for problem in problems:
        if problem.name in reward_cfg.baselines:
            continue
        trace = engine.run_episode(problem, engine.age_weight_policy,
                                   limits=limits, seed=0)
        if trace.solved:
            reward_cfg.baselines[problem.name] = episode_cost(
                trace, reward_cfg.source)
        else:
            # unsolved by the heuristic: fall back to the limit cost
            reward_cfg.baselines[problem.name] = (
                limits.max_steps if reward_cfg.source == "steps"
                else limits.max_seconds)


@dataclass
class IterationMetrics:
    iteration: int
    solved: int
    total: int
    solved_names: list
    completion_ratio: float
    mean_proof_steps: float
    mean_reward: float
    mean_entropy: float
    tau: float


def rollout_problem(problem, params, policy_cfg, vec_cfg, tau, limits, seed):
    cfg = PolicyConfig(embed_dim=policy_cfg.embed_dim,
                       dense_layers=policy_cfg.dense_layers,
                       n_rules=policy_cfg.n_rules, tau=tau,
                       tau0=policy_cfg.tau0, dropout=policy_cfg.dropout)
    pol = NeuralPolicy(params, cfg, vec_cfg, mode="train")
    trace = engine.run_episode(problem, pol, limits=limits, seed=seed)
    return trace, pol.features


def train_iteration(problems, params, optimizer, policy_cfg, vec_cfg,
                    train_cfg: TrainConfig, reward_cfg: RewardConfig,
                    buffer: ExampleBuffer, iteration, tau,
                    best_raw_table=None):
    """One iteration: roll out every problem with the current temperature,
    reward and buffer the experiences, then run epoch passes of minibatch
    updates and decay the temperature."""
    limits = Limits(max_steps=train_cfg.max_steps,
                    max_seconds=train_cfg.max_seconds)
    rng = np.random.default_rng(train_cfg.seed + 7919 * iteration)
    experiences = []
    solved_names = []
    proof_lengths = []
    all_rewards = []
    entropies = []
    for problem in problems:
        seed = int(rng.integers(2 ** 31))
        try:
            trace, cache = rollout_problem(problem, params, policy_cfg,
                                           vec_cfg, tau, limits, seed)
        except Exception:
            continue
        rewards = assign_rewards(trace, trace.proof, reward_cfg,
                                 best_raw_table)
        if trace.solved:
            solved_names.append(problem.name)
            proof_lengths.append(len(trace.proof.steps))
        all_rewards.extend(r for r in rewards if r > 0)
        for record in trace.steps:
            if record.distribution is not None:
                p = np.clip(record.distribution, 1e-12, None)
                entropies.append(float(-(p * np.log(p)).sum()))
        experiences.extend(experiences_from_trace(
            trace, rewards, iteration, cache, tau,
            zero_reward_cap=train_cfg.zero_reward_cap))
    buffer.add(iteration, experiences)
    pool = buffer.all()
    if pool:
        for epoch in range(train_cfg.epochs):
            order = rng.permutation(len(pool))
            for start in range(0, len(pool), train_cfg.batch_size):
                batch = [pool[i] for i in order[start:start + train_cfg.batch_size]]
                nn.zero_grads(params)
                loss = compute_loss(batch, params, policy_cfg, vec_cfg,
                                    lam=train_cfg.entropy_coeff,
                                    dropout_rng_seed=int(rng.integers(2 ** 31)))
                nn.backward(loss)
                optimizer.step()
    metrics = IterationMetrics(
        iteration=iteration,
        solved=len(solved_names),
        total=len(problems),
        solved_names=sorted(solved_names),
        completion_ratio=len(solved_names) / len(problems) if problems else 0.0,
        mean_proof_steps=float(np.mean(proof_lengths)) if proof_lengths else 0.0,
        mean_reward=float(np.mean(all_rewards)) if all_rewards else 0.0,
        mean_entropy=float(np.mean(entropies)) if entropies else 0.0,
        tau=tau,
    )
    return metrics, tau * train_cfg.tau_decay
