"""Clause vectorization: simple features, hashed chain patterns, hashed term
walks, and the glue that concatenates module outputs (including an optional
GNN embedding) into one fixed-size feature vector.

Hashing uses MD5 throughout, so vectors are bit-identical across runs and
platforms.  Variables are wildcarded before hashing and genericized in DAGs,
so every module is invariant under consistent variable renaming.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .fol import FormulaDag, clause_to_dag, clause_weight


@dataclass
class VectorizerConfig:
    n_age: int = 20
    simple: bool = True
    chain: bool = True
    chain_dim: int = 64
    walk_lengths: tuple = (1, 2, 3)
    walk_dim: int = 32
    gnn: str = "none"            # none | gcn | sage | staged
    embed_dim: int = 64          # d
    gnn_rounds: int = 2          # K
    gnn_vocab: int = 1024
    staged_root_readout: bool = True

    def __post_init__(self):
        if self.gnn not in ("none", "gcn", "sage", "staged"):
            raise ValueError(f"unknown gnn '{self.gnn}'")
        if self.n_age < 1 or self.chain_dim < 1 or self.walk_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.gnn_rounds < 1:
            raise ValueError("gnn rounds must be >= 1")

    @property
    def feature_length(self):
        n = 0
        if self.simple:
            n += self.n_age + 3
        if self.chain:
            n += 2 * self.chain_dim
        n += len(self.walk_lengths) * self.walk_dim
        if self.gnn != "none":
            n += self.embed_dim
        return n


def md5_bucket(text, dim):
    digest = hashlib.md5(text.encode("utf-8")).hexdigest()
    return int(digest, 16) % dim


def simple_features(clause, cfg):
    """Age one-hot (capped), symbol weight, literal count, sos bit."""
    vec = np.zeros(cfg.n_age + 3)
    vec[min(clause.age, cfg.n_age - 1)] = 1.0
    vec[cfg.n_age] = clause_weight(clause)
    vec[cfg.n_age + 1] = len(clause.literals)
    vec[cfg.n_age + 2] = 1.0 if clause.sos else 0.0
    return vec


def _chain_render(term, path, depth):
    """Render a term along one root-to-leaf path; off-path arguments become
    wildcards, so argument position is encoded without naming it."""
    if depth == len(path):
        return "*" if term.is_variable else term.symbol.name
    parts = []
    for i, arg in enumerate(term.args):
        if i == path[depth]:
            parts.append(_chain_render(arg, path, depth + 1))
        else:
            parts.append("*")
    return f"{term.symbol.name}({','.join(parts)})"


def _leaf_paths(term, prefix):
    if not term.args:
        yield list(prefix)
        return
    for i, arg in enumerate(term.args):
        prefix.append(i)
        yield from _leaf_paths(arg, prefix)
        prefix.pop()


def chain_patterns(clause):
    """Multiset of (positive, linearization) chain patterns.

    One pattern per root-to-leaf path per literal; patterns from distinct
    literals with identical linearizations merge.
    """
    counts = Counter()
    for lit in clause.literals:
        if not lit.args:
            counts[(lit.positive, lit.predicate.name)] += 1
            continue
        for i, arg in enumerate(lit.args):
            for path in _leaf_paths(arg, []):
                parts = []
                for j, other in enumerate(lit.args):
                    if j == i:
                        parts.append(_chain_render(other, path, 0))
                    else:
                        parts.append("*")
                counts[(lit.positive,
                        f"{lit.predicate.name}({','.join(parts)})")] += 1
    return counts


def chain_vectorize(patterns, dim):
    """Positive patterns hash into the first half, negative into the second."""
    vec = np.zeros(2 * dim)
    for (positive, text), count in patterns.items():
        idx = md5_bucket(text, dim)
        vec[(idx if positive else idx + dim)] += count
    return vec


def _walks_from(term, length, acc, out):
    label = "*" if term.is_variable else term.symbol.name
    acc.append(label)
    if len(acc) == length:
        out.append(".".join(acc))
    else:
        for arg in term.args:
            _walks_from(arg, length, acc, out)
    acc.pop()


def term_walks(clause, length, dim):
    """Bag of downward symbol walks of exactly `length` symbols, hashed.

    Walks are enumerated over the parse tree (shared subterms count per
    occurrence); polarity prefixes only predicate-initial walks.
    """
    walks = []
    for lit in clause.literals:
        prefix = ("+" if lit.positive else "-") + lit.predicate.name
        if length == 1:
            walks.append(prefix)
        else:
            for arg in lit.args:
                out = []
                _walks_from(arg, length - 1, [], out)
                walks.extend(f"{prefix}.{w}" for w in out)
        # walks starting strictly below the predicate
        stack = list(lit.args)
        while stack:
            t = stack.pop()
            out = []
            _walks_from(t, length, [], out)
            walks.extend(out)
            stack.extend(t.args)
    vec = np.zeros(dim)
    for w in walks:
        vec[md5_bucket(w, dim)] += 1
    return vec


def topological_levels(dag: FormulaDag):
    """Batches of node ids by longest path to a leaf; leaves are batch 0."""
    children = {nid: [] for nid, _, _ in dag.nodes}
    for p, c, _ in dag.edges:
        children[p].append(c)
    depth = {}

    def longest(nid, active):
        if nid in depth:
            return depth[nid]
        if nid in active:
            raise ValueError("cycle detected in formula DAG")
        active.add(nid)
        d = 0 if not children[nid] else 1 + max(longest(c, active)
                                                for c in children[nid])
        active.discard(nid)
        depth[nid] = d
        return d

    for nid, _, _ in dag.nodes:
        longest(nid, set())
    levels = [[] for _ in range(max(depth.values()) + 1)] if depth else []
    for nid, _, _ in dag.nodes:
        levels[depth[nid]].append(nid)
    return levels


@dataclass
class FeatureCache:
    """Per-run memo of clause feature vectors and DAGs, keyed by clause id.

    Sparse features are parameter-independent; DAGs are cached so GNN
    embeddings can be recomputed under changing parameters.
    """
    cfg: VectorizerConfig
    sparse: dict = field(default_factory=dict)
    dags: dict = field(default_factory=dict)

    def sparse_features(self, clause):
        if clause.id not in self.sparse:
            self.sparse[clause.id] = sparse_vector(clause, self.cfg)
        return self.sparse[clause.id]

    def dag(self, clause):
        if self.cfg.gnn == "none":
            return None
        if clause.id not in self.dags:
            self.dags[clause.id] = clause_to_dag(clause)
        return self.dags[clause.id]


def sparse_vector(clause, cfg):
    """Concatenation of all non-GNN modules in canonical order."""
    parts = []
    if cfg.simple:
        parts.append(simple_features(clause, cfg))
    if cfg.chain:
        parts.append(chain_vectorize(chain_patterns(clause), cfg.chain_dim))
    for length in cfg.walk_lengths:
        parts.append(term_walks(clause, length, cfg.walk_dim))
    return np.concatenate(parts) if parts else np.zeros(0)


def vectorize_clause(clause, cfg, gnn_params=None):
    """Full feature vector: sparse modules plus optional GNN embedding."""
    sparse = sparse_vector(clause, cfg)
    if cfg.gnn == "none":
        return sparse
    from . import gnn as gnn_mod
    dag = clause_to_dag(clause)
    emb = gnn_mod.embed(dag, gnn_params, cfg)
    return np.concatenate([sparse, emb.data])
