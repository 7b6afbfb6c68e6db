"""Finite-difference gradient audits over the composite operations used by
the policy and vectorizer stacks."""

from __future__ import annotations

import numpy as np

from . import nn, trainer
from .policy import PolicyConfig, init_params
from .trainer import Experience
from .vectorize import VectorizerConfig


def _nudge(rng, shape, scale=0.5):
    """Random values kept away from relu kinks and max-pool ties."""
    x = rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return x + scale * rng.standard_normal(shape) * 0.01


def make_loss_fixture(seed=0, gnn="none", n_exp=2):
    """A tiny frozen experience batch plus fresh parameters.

    Kept deliberately small: the finite-difference audit re-evaluates the
    loss twice per parameter scalar.
    """
    rng = np.random.default_rng(seed)
    vec_cfg = VectorizerConfig(n_age=4, chain_dim=4, walk_lengths=(1,),
                               walk_dim=4, gnn=gnn, embed_dim=4,
                               gnn_rounds=1, gnn_vocab=8)
    policy_cfg = PolicyConfig(embed_dim=3, dense_layers=2, dropout=0.0)
    feat_len = vec_cfg.feature_length
    sparse_len = feat_len - (vec_cfg.embed_dim if gnn != "none" else 0)
    params = init_params(feat_len, policy_cfg, vec_cfg, rng)
    dags = None
    if gnn != "none":
        from .fol import parse_tptp, clause_to_dag
        problem = parse_tptp("cnf(a, axiom, p(f(X)) | ~q(X)).\n"
                             "cnf(b, negated_conjecture, ~p(c)).")
        dags = [clause_to_dag(c) for c in problem.clauses]
    batch = []
    for i in range(n_exp):
        n_proc, n_act = int(rng.integers(0, 3)), int(rng.integers(2, 4))
        dag_of = (lambda: dags[int(rng.integers(len(dags)))]) if dags else (lambda: None)
        batch.append(Experience(
            problem_id=f"p{i}", iteration=0, step=i,
            chosen=int(rng.integers(n_act)),
            reward=float(rng.choice([0.0, 1.0, 2.0])),
            tau=3.0,
            proc_feats=[_nudge(rng, sparse_len) for _ in range(n_proc)],
            conj_feats=[_nudge(rng, sparse_len)],
            action_feats=[_nudge(rng, sparse_len) for _ in range(n_act)],
            rule_indices=[int(rng.integers(2)) for _ in range(n_act)],
            proc_dags=[dag_of() for _ in range(n_proc)],
            conj_dags=[dag_of()],
            action_dags=[dag_of() for _ in range(n_act)],
        ))
    if all(e.reward == 0.0 for e in batch):
        batch[0].reward = 1.0
    return batch, params, policy_cfg, vec_cfg


def run_grad_checks(seed=0):
    """Gradient checks for primitive layers and the full loss pipeline."""
    rng = np.random.default_rng(seed)
    results = {}

    x0 = _nudge(rng, (5,))
    w0 = nn.param(_nudge(rng, (4, 5)))
    b0 = nn.param(_nudge(rng, (4,)))
    results["linear_relu"] = nn.grad_check(
        lambda p: nn.vsum(nn.relu(nn.linear(nn.constant(x0), p["w"], p["b"]))),
        {"w": w0, "b": b0})

    xt = nn.param(_nudge(rng, (6,)))
    results["tanh"] = nn.grad_check(
        lambda p: nn.vsum(nn.tanh(p["x"])), {"x": xt})

    xl = nn.param(_nudge(rng, (6,)))
    g = nn.param(_nudge(rng, (6,)))
    b = nn.param(_nudge(rng, (6,)))
    results["layer_norm"] = nn.grad_check(
        lambda p: nn.vsum(nn.layer_norm(p["x"], p["g"], p["b"])),
        {"x": xl, "g": g, "b": b})

    xs = nn.param(_nudge(rng, (4,)))
    results["softmax_temperature"] = nn.grad_check(
        lambda p: nn.vsum(nn.mul(nn.softmax_scores(p["x"], 3.0),
                                 nn.constant(np.array([1.0, 2.0, -1.0, 0.5])))),
        {"x": xs})

    xls = nn.param(_nudge(rng, (4,)))
    results["log_softmax"] = nn.grad_check(
        lambda p: nn.vsum(nn.mul(nn.log_softmax_scores(p["x"], 3.0),
                                 nn.constant(np.array([1.0, 2.0, -1.0, 0.5])))),
        {"x": xls})

    xm = nn.param(_nudge(rng, (3, 4)))
    results["max_pool_columns"] = nn.grad_check(
        lambda p: nn.vsum(nn.max_pool_columns(p["x"])), {"x": xm})

    xc = nn.param(_nudge(rng, (3,)))
    yc = nn.param(_nudge(rng, (4,)))
    results["concat_mean"] = nn.grad_check(
        lambda p: nn.vmean(nn.concat([p["x"], p["y"]])), {"x": xc, "y": yc})

    for gnn in ("none", "staged"):
        batch, params, policy_cfg, vec_cfg = make_loss_fixture(
            seed=seed + 1, gnn=gnn)
        results[f"compute_loss_{gnn}"] = nn.grad_check(
            lambda p: trainer.compute_loss(batch, p, policy_cfg, vec_cfg,
                                           lam=0.004, train=False),
            params)
    return results
