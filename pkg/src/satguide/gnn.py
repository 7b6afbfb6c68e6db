"""Graph embedders over formula DAGs: GCN, GraphSAGE, and a staged
relational variant that updates nodes level-by-level along a topological
schedule with residual connections, layer norm, and bidirectional passes.

All forward passes run on the differentiation tape so the embedding
parameters train end-to-end with the policy.  GCN and SAGE treat the DAG as
undirected; the staged embedder uses the directed graph and its reversal.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .fol import N_EDGE_TYPES, NodeClass
from .vectorize import md5_bucket, topological_levels

# embedding table layout: row 0 clause-root, 1 negation, 2 variable-token,
# 3.. hashed symbol rows
N_SPECIAL_ROWS = 3


def node_label_row(node_class, payload, vocab):
    if node_class is NodeClass.CLAUSE_ROOT:
        return 0
    if node_class is NodeClass.NEGATION:
        return 1
    if node_class is NodeClass.VARIABLE:
        return 2
    return N_SPECIAL_ROWS + md5_bucket(payload, vocab)


def _initial_embeddings(dag, params, vocab):
    table = params["gnn/embed"]
    return {nid: nn.gather_row(table, node_label_row(cls, payload, vocab))
            for nid, cls, payload in dag.nodes}


def _undirected_neighbors(dag):
    nbrs = {nid: [] for nid, _, _ in dag.nodes}
    for p, c, _ in dag.edges:
        nbrs[p].append(c)
        nbrs[c].append(p)
    return nbrs


def init_gcn_params(cfg, rng):
    d = cfg.embed_dim
    params = {"gnn/embed": nn.param(nn.uniform_init(rng, (N_SPECIAL_ROWS + cfg.gnn_vocab, d)))}
    for i in range(cfg.gnn_rounds):
        params[f"gnn/W{i}"] = nn.param(nn.uniform_init(rng, (d, d)))
    return params


def gcn_embed(dag, params, cfg):
    """Symmetric-normalized convolution with ReLU; mean-pool readout.

    Nodes without neighbors drop the neighbor sum and keep a unit self
    normalizer.
    """
    h = _initial_embeddings(dag, params, cfg.gnn_vocab)
    nbrs = _undirected_neighbors(dag)
    deg = {nid: len(ns) for nid, ns in nbrs.items()}
    for i in range(cfg.gnn_rounds):
        w = params[f"gnn/W{i}"]
        new = {}
        for nid, _, _ in dag.nodes:
            agg = nn.mul(h[nid], nn.constant(1.0 / max(deg[nid], 1)))
            for v in nbrs[nid]:
                norm = 1.0 / np.sqrt(deg[nid] * deg[v])
                agg = nn.add(agg, nn.mul(h[v], nn.constant(norm)))
            new[nid] = nn.relu(nn.matmul(w, agg))
        h = new
    return nn.mean_pool([h[nid] for nid, _, _ in dag.nodes])


def init_sage_params(cfg, rng):
    d = cfg.embed_dim
    params = {"gnn/embed": nn.param(nn.uniform_init(rng, (N_SPECIAL_ROWS + cfg.gnn_vocab, d)))}
    for i in range(cfg.gnn_rounds):
        params[f"gnn/WA{i}"] = nn.param(nn.uniform_init(rng, (d, d)))
        params[f"gnn/W{i}"] = nn.param(nn.uniform_init(rng, (d, 2 * d)))
    return params


def sage_embed(dag, params, cfg):
    """Mean-pooled neighborhood aggregation with concat update; mean-pool
    readout."""
    h = _initial_embeddings(dag, params, cfg.gnn_vocab)
    nbrs = _undirected_neighbors(dag)
    for i in range(cfg.gnn_rounds):
        wa = params[f"gnn/WA{i}"]
        w = params[f"gnn/W{i}"]
        new = {}
        for nid, _, _ in dag.nodes:
            pool = h[nid]
            for v in nbrs[nid]:
                pool = nn.add(pool, h[v])
            pool = nn.mul(pool, nn.constant(1.0 / (1 + len(nbrs[nid]))))
            hat = nn.relu(nn.matmul(wa, pool))
            new[nid] = nn.relu(nn.matmul(w, nn.concat([h[nid], hat])))
        h = new
    return nn.mean_pool([h[nid] for nid, _, _ in dag.nodes])


def init_staged_params(cfg, rng):
    d = cfg.embed_dim
    params = {"gnn/embed": nn.param(nn.uniform_init(rng, (N_SPECIAL_ROWS + cfg.gnn_vocab, d)))}
    for i in range(cfg.gnn_rounds):
        for direction in ("up", "down"):
            params[f"gnn/{direction}_W{i}"] = nn.param(nn.uniform_init(rng, (d, d)))
            for r in range(N_EDGE_TYPES):
                params[f"gnn/{direction}_Wr{i}_{r}"] = nn.param(nn.uniform_init(rng, (d, d)))
            params[f"gnn/{direction}_ln_gain{i}"] = nn.param(np.ones(d))
            params[f"gnn/{direction}_ln_bias{i}"] = nn.param(np.zeros(d))
        params[f"gnn/bd_W{i}"] = nn.param(nn.uniform_init(rng, (d, 2 * d)))
        params[f"gnn/bd_Wg{i}"] = nn.param(nn.uniform_init(rng, (d, d)))
    params["gnn/readout_W"] = nn.param(nn.uniform_init(rng, (d, d)))
    params["gnn/readout_ln_gain"] = nn.param(np.ones(d))
    params["gnn/readout_ln_bias"] = nn.param(np.zeros(d))
    return params


def _typed_neighbors(dag, reverse):
    nbrs = {nid: [] for nid, _, _ in dag.nodes}
    for p, c, r in dag.edges:
        if reverse:
            nbrs[c].append((p, r))
        else:
            nbrs[p].append((c, r))
    return nbrs


def _staged_pass(dag, h_prev, params, cfg, iteration, direction):
    """One directed pass: batches in topological order, current-iteration
    child embeddings, tanh(LN(...)) update plus residual."""
    reverse = direction == "down"
    nbrs = _typed_neighbors(dag, reverse=reverse)
    levels = topological_levels(dag)
    if reverse:
        # reversed edges flip the dependency direction; former roots go first
        order = []
        depth = {}
        for lvl, batch in enumerate(levels):
            for nid in batch:
                depth[nid] = lvl
        max_lvl = len(levels) - 1
        buckets = [[] for _ in range(max_lvl + 1)]
        for nid, _, _ in dag.nodes:
            buckets[max_lvl - depth[nid]].append(nid)
        levels = buckets
    w = params[f"gnn/{direction}_W{iteration}"]
    gain = params[f"gnn/{direction}_ln_gain{iteration}"]
    bias = params[f"gnn/{direction}_ln_bias{iteration}"]
    h_cur = {}
    for batch in levels:
        for nid in batch:
            pre = nn.matmul(w, h_prev[nid])  # c_u = 1
            by_type = {}
            for v, r in nbrs[nid]:
                by_type.setdefault(r, []).append(v)
            for r, vs in sorted(by_type.items()):
                wr = params[f"gnn/{direction}_Wr{iteration}_{r}"]
                agg = h_cur[vs[0]]
                for v in vs[1:]:
                    agg = nn.add(agg, h_cur[v])
                # c_{u,r} = 1 / |N_{u,r}|
                pre = nn.add(pre, nn.mul(nn.matmul(wr, agg),
                                         nn.constant(1.0 / len(vs))))
            hat = nn.tanh(nn.layer_norm(pre, gain, bias))
            h_cur[nid] = nn.add(hat, h_prev[nid])
    return h_cur


def _bd_combine(up, down, params, iteration):
    """Feed-forward combiner with a residual path through the mean of the
    two directional embeddings; zero weights leave the residual intact."""
    wf = params[f"gnn/bd_W{iteration}"]
    wg = params[f"gnn/bd_Wg{iteration}"]
    mixed = nn.matmul(wf, nn.concat([up, down]))
    residual = nn.mul(nn.add(up, down), nn.constant(0.5))
    return nn.add(residual, nn.add(mixed, nn.relu(nn.matmul(wg, mixed))))


def staged_embed(dag, params, cfg):
    """K staged bidirectional iterations, then a root readout
    ReLU(LN(W h_root)) (or mean-pool readout when the root-readout flag is
    off)."""
    h = _initial_embeddings(dag, params, cfg.gnn_vocab)
    for i in range(cfg.gnn_rounds):
        up = _staged_pass(dag, h, params, cfg, i, "up")
        down = _staged_pass(dag, h, params, cfg, i, "down")
        h = {nid: _bd_combine(up[nid], down[nid], params, i)
             for nid, _, _ in dag.nodes}
    if cfg.staged_root_readout:
        pooled = h[dag.root]
    else:
        pooled = nn.mean_pool([h[nid] for nid, _, _ in dag.nodes])
    out = nn.matmul(params["gnn/readout_W"], pooled)
    return nn.relu(nn.layer_norm(out, params["gnn/readout_ln_gain"],
                                 params["gnn/readout_ln_bias"]))


_EMBEDDERS = {"gcn": gcn_embed, "sage": sage_embed, "staged": staged_embed}
_INITIALIZERS = {"gcn": init_gcn_params, "sage": init_sage_params,
                 "staged": init_staged_params}


def embed(dag, params, cfg):
    return _EMBEDDERS[cfg.gnn](dag, params, cfg)


def init_params(cfg, rng):
    if cfg.gnn == "none":
        return {}
    return _INITIALIZERS[cfg.gnn](cfg, rng)
