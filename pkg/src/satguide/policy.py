"""Attention policy over the neural proof state.

Clause feature vectors pass through k fully-connected layers into size-2d
embeddings; processed clauses are combined with the mean conjecture
embedding through a skip-connected feed-forward network; actions append a
rule one-hot.  Scores come from the bilinear heat map H = A^T W_a C with a
max pool over processed-clause columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gnn as gnn_mod
from . import nn
from .engine import RULES
from .vectorize import FeatureCache, VectorizerConfig


@dataclass
class PolicyConfig:
    embed_dim: int = 64          # d; clause embeddings are 2d
    dense_layers: int = 2        # k
    n_rules: int = len(RULES)
    tau: float = 3.0
    tau0: int = 11000
    dropout: float = 0.57

    @property
    def clause_dim(self):
        return 2 * self.embed_dim


def init_policy_params(feature_length, cfg: PolicyConfig, rng):
    two_d = cfg.clause_dim
    params = {}
    in_dim = feature_length
    for i in range(cfg.dense_layers):
        params[f"policy/enc_W{i}"] = nn.param(nn.uniform_init(rng, (two_d, in_dim)))
        params[f"policy/enc_b{i}"] = nn.param(np.zeros(two_d))
        in_dim = two_d
    params["policy/comb_W0"] = nn.param(nn.uniform_init(rng, (two_d, 2 * two_d)))
    params["policy/comb_b0"] = nn.param(np.zeros(two_d))
    params["policy/comb_W1"] = nn.param(nn.uniform_init(rng, (two_d, two_d)))
    params["policy/comb_b1"] = nn.param(np.zeros(two_d))
    params["policy/W_a"] = nn.param(
        nn.uniform_init(rng, (two_d + cfg.n_rules, two_d)))
    return params


def init_params(feature_length, policy_cfg, vec_cfg, rng):
    """Policy plus (optional) GNN parameters in one named dict."""
    params = init_policy_params(feature_length, policy_cfg, rng)
    params.update(gnn_mod.init_params(vec_cfg, rng))
    return params


def encode_clause(features, params, cfg, train=False, rng=None):
    """k fully-connected layers with ReLU; dropout on the final dense
    representation in training mode."""
    h = features if isinstance(features, nn.Var) else nn.constant(features)
    for i in range(cfg.dense_layers):
        h = nn.relu(nn.linear(h, params[f"policy/enc_W{i}"],
                              params[f"policy/enc_b{i}"]))
    if train and cfg.dropout > 0:
        h = nn.dropout(h, cfg.dropout, rng, train=True)
    return h


def embed_conjecture(conjecture_embeddings):
    """Element-wise mean of the dense negated-conjecture representations."""
    if not conjecture_embeddings:
        raise ValueError("empty conjecture")
    return nn.mean_pool(conjecture_embeddings)


def combine_processed(h_p, h_c, params):
    """h + h_c + F(h || h_c) with skip connections."""
    f_in = nn.concat([h_p, h_c])
    f_h = nn.relu(nn.linear(f_in, params["policy/comb_W0"],
                            params["policy/comb_b0"]))
    f_out = nn.linear(f_h, params["policy/comb_W1"], params["policy/comb_b1"])
    return nn.add(nn.add(h_p, h_c), f_out)


def embed_action(clause_embedding, rule_index, n_rules):
    onehot = np.zeros(n_rules)
    onehot[rule_index] = 1.0
    return nn.concat([clause_embedding, nn.constant(onehot)])


def score_actions(action_cols, processed_cols, params):
    """p_hat_i = max_j (A^T W_a C)_ij; ties break to the lowest index."""
    a_mat = nn.stack_columns(action_cols)            # (2d+|I|) x M
    c_mat = nn.stack_columns(processed_cols)         # 2d x N
    heat = nn.matmul(nn.matmul(nn.transpose(a_mat), params["policy/W_a"]),
                     c_mat)                          # M x N
    return nn.max_pool_columns(heat)


def policy_forward(proc_feats, conj_feats, action_feats, rule_indices,
                   params, cfg, vec_cfg=None, proc_dags=None, conj_dags=None,
                   action_dags=None, train=False, rng=None):
    """Compute unnormalized action scores for one proof state.

    Feature arrays are the sparse module outputs; when a GNN is enabled the
    corresponding DAG lists supply the structures whose embeddings are
    recomputed under the current parameters and concatenated in.  All clauses
    of the state pass through the dense encoder as columns of one matrix.
    """

    def full_feature(feat, dag):
        base = nn.constant(feat)
        if vec_cfg is not None and vec_cfg.gnn != "none":
            emb = gnn_mod.embed(dag, params, vec_cfg)
            return nn.concat([base, emb])
        return base

    n_conj, n_proc, n_act = len(conj_feats), len(proc_feats), len(action_feats)
    conj_dags = conj_dags or [None] * n_conj
    proc_dags = proc_dags or [None] * n_proc
    action_dags = action_dags or [None] * n_act

    cols = [full_feature(f, d)
            for f, d in zip(list(conj_feats) + list(proc_feats) + list(action_feats),
                            conj_dags + proc_dags + action_dags)]
    h = nn.stack_columns(cols)
    for i in range(cfg.dense_layers):
        h = nn.relu(nn.linear(h, params[f"policy/enc_W{i}"],
                              params[f"policy/enc_b{i}"]))
    if train and cfg.dropout > 0:
        h = nn.dropout(h, cfg.dropout, rng, train=True)

    h_c = nn.mean_columns(nn.slice_columns(h, 0, n_conj))
    if n_proc:
        proc = nn.slice_columns(h, n_conj, n_conj + n_proc)
    else:
        # empty processed set at t=0: a single pseudo-column of the conjecture
        proc = nn.reshape(h_c, (cfg.clause_dim, 1))
    h_c_cols = nn.tile_column(h_c, proc.data.shape[1])
    f_in = nn.stack_rows([proc, h_c_cols])
    f_h = nn.relu(nn.linear(f_in, params["policy/comb_W0"],
                            params["policy/comb_b0"]))
    f_out = nn.linear(f_h, params["policy/comb_W1"], params["policy/comb_b1"])
    c_mat = nn.add(nn.add(proc, h_c_cols), f_out)

    onehots = np.zeros((cfg.n_rules, n_act))
    onehots[rule_indices, np.arange(n_act)] = 1.0
    a_mat = nn.stack_rows([nn.slice_columns(h, n_conj + n_proc,
                                            n_conj + n_proc + n_act),
                           nn.constant(onehots)])
    heat = nn.matmul(nn.matmul(nn.transpose(a_mat), params["policy/W_a"]),
                     c_mat)
    return nn.max_pool_columns(heat)


def select_action(p_hat, t, tau, tau0, rng, mode="train"):
    """Distribution = tempered softmax of the scores; sample while t < tau0
    in training mode, otherwise argmax (ties to the lowest index)."""
    scores = p_hat.data if isinstance(p_hat, nn.Var) else np.asarray(p_hat)
    if scores.size == 0:
        raise ValueError("no actions to select from")
    dist = nn.softmax_scores(nn.constant(scores), tau).data
    if mode == "train" and t < tau0:
        idx = int(rng.choice(len(dist), p=dist))
    else:
        idx = int(np.argmax(dist))
    return idx, dist


class NeuralPolicy:
    """Engine guidance callback backed by the attention policy.

    Dense clause embeddings are computed once per clause and reused across
    steps (parameters are frozen during a rollout), so each step only embeds
    newly derived clauses.
    """

    def __init__(self, params, policy_cfg: PolicyConfig,
                 vec_cfg: VectorizerConfig, mode="eval"):
        self.params = params
        self.cfg = policy_cfg
        self.vec_cfg = vec_cfg
        self.mode = mode
        self.features = FeatureCache(vec_cfg)
        self._emb_cache = {}
        self._rule_index = {rule: i for i, rule in enumerate(RULES)}

    def _clause_embedding(self, clause):
        """Plain-numpy dense embedding; rollouts never need the tape."""
        if clause.id not in self._emb_cache:
            feat = self.features.sparse_features(clause)
            if self.vec_cfg.gnn != "none":
                emb = gnn_mod.embed(self.features.dag(clause), self.params,
                                    self.vec_cfg)
                feat = np.concatenate([feat, emb.data])
            h = feat
            for i in range(self.cfg.dense_layers):
                h = np.maximum(self.params[f"policy/enc_W{i}"].data @ h
                               + self.params[f"policy/enc_b{i}"].data, 0.0)
            self._emb_cache[clause.id] = h
        return self._emb_cache[clause.id]

    def scores(self, state):
        p = self.params
        conj = np.stack([self._clause_embedding(c) for c in state.conjecture],
                        axis=1)
        h_c = conj.mean(axis=1)
        if state.processed:
            proc = np.stack([self._clause_embedding(c)
                             for c in state.processed], axis=1)
        else:
            proc = h_c[:, None]
        h_c_cols = np.repeat(h_c[:, None], proc.shape[1], axis=1)
        f_in = np.concatenate([proc, h_c_cols], axis=0)
        f_h = np.maximum(p["policy/comb_W0"].data @ f_in
                         + p["policy/comb_b0"].data[:, None], 0.0)
        f_out = (p["policy/comb_W1"].data @ f_h
                 + p["policy/comb_b1"].data[:, None])
        c_mat = proc + h_c_cols + f_out
        a_emb = np.stack([self._clause_embedding(a.clause)
                          for a in state.actions], axis=1)
        onehots = np.zeros((self.cfg.n_rules, a_emb.shape[1]))
        for j, a in enumerate(state.actions):
            onehots[self._rule_index[a.rule], j] = 1.0
        a_mat = np.concatenate([a_emb, onehots], axis=0)
        heat = a_mat.T @ p["policy/W_a"].data @ c_mat
        return heat.max(axis=1)

    def __call__(self, state, rng):
        p_hat = self.scores(state)
        return select_action(p_hat, state.t, self.cfg.tau, self.cfg.tau0,
                             rng, mode=self.mode)
