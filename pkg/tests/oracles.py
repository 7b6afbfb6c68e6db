"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from scratch in the most naive style
possible (dictionaries of numpy arrays, recursive tree walks, brute-force
search) and avoids calling into the code under test except to consume its
plain data types (Clause, FormulaDag, parameter dicts).
"""

import itertools

import numpy as np

from satguide import fol
from satguide.fol import Kind, Literal, Term


# ---------------------------------------------------------------------------
# Unification oracle: independent recursive implementation


def ref_unify(t1, t2, sigma):
    """Naive recursive unification with eager substitution application.

    Returns a fully-applied substitution dict or None.  Unlike the engine's
    iterative version it rewrites terms at every step, so agreement between
    the two is meaningful.
    """

    def apply(t, s):
        if t.is_variable:
            return apply(s[t.symbol], s) if t.symbol in s else t
        return Term(t.symbol, tuple(apply(a, s) for a in t.args))

    a, b = apply(t1, sigma), apply(t2, sigma)
    if a.is_variable and b.is_variable and a.symbol == b.symbol:
        return sigma
    if a.is_variable:
        if a.symbol in {v for v in b.variables()}:
            return None
        out = {k: None for k in ()}
        out = dict(sigma)
        out[a.symbol] = b
        return {k: apply(v, out) for k, v in out.items()}
    if b.is_variable:
        return ref_unify(b, a, sigma)
    if a.symbol != b.symbol or len(a.args) != len(b.args):
        return None
    for x, y in zip(a.args, b.args):
        sigma = ref_unify(x, y, sigma)
        if sigma is None:
            return None
    return sigma


def ref_unify_atoms(l1, l2):
    if l1.predicate != l2.predicate:
        return None
    sigma = {}
    for x, y in zip(l1.args, l2.args):
        sigma = ref_unify(x, y, sigma)
        if sigma is None:
            return None
    return sigma


# ---------------------------------------------------------------------------
# Ground truth-table entailment oracle


def ground_atoms(clauses):
    atoms = set()
    for c in clauses:
        for lit in c.literals:
            if any(True for _ in lit.variables()):
                raise ValueError("clause is not ground")
            atoms.add((lit.predicate.id, lit.args))
    return sorted(atoms, key=repr)


def truth_table_unsat(clauses):
    """True iff the ground clause set has no satisfying assignment."""
    atoms = ground_atoms(clauses)
    index = {a: i for i, a in enumerate(atoms)}
    for bits in itertools.product([False, True], repeat=len(atoms)):
        ok = True
        for c in clauses:
            sat = False
            for lit in c.literals:
                val = bits[index[(lit.predicate.id, lit.args)]]
                if val == lit.positive:
                    sat = True
                    break
            if not sat:
                ok = False
                break
        if ok:
            return False
    return True


def entails(premises, conclusion):
    """premises |= conclusion, all ground: premises + negated conclusion
    literals must be unsatisfiable."""
    extra = [fol.Clause(-(i + 1), (lit.negate(),))
             for i, lit in enumerate(conclusion.literals)]
    if conclusion.is_empty:
        return truth_table_unsat(list(premises))
    return truth_table_unsat(list(premises) + extra)


# ---------------------------------------------------------------------------
# Brute-force BFS refutation / saturation oracle


def bfs_refutable(problem, max_depth=6, max_clauses=20000):
    """Level-saturation resolution + factoring search.

    Returns True (refutable within depth), False (saturated: closed with no
    empty clause), or None (inconclusive: depth or size budget hit).
    """
    fresh = fol.FreshVariables(problem.symbols, start=500000)
    keys = {c.canonical_key() for c in problem.clauses}
    frontier = list(problem.clauses)
    everything = list(problem.clauses)
    if any(c.is_empty for c in everything):
        return True
    for depth in range(max_depth):
        new = []
        for c1 in frontier:
            candidates = []
            for c2 in everything:
                r1 = fol.rename_apart(c1, fresh)
                r2 = fol.rename_apart(c2, fresh)
                for l1 in r1.literals:
                    for l2 in r2.literals:
                        if l1.positive == l2.positive:
                            continue
                        sigma = fol.unify_atoms(l1, l2)
                        if isinstance(sigma, fol.UnifyFailure):
                            continue
                        lits = tuple(fol.substitute_literal(sigma, l)
                                     for l in r1.literals if l is not l1)
                        lits += tuple(fol.substitute_literal(sigma, l)
                                      for l in r2.literals if l is not l2)
                        candidates.append(lits)
            lits_list = c1.literals
            for i in range(len(lits_list)):
                for j in range(i + 1, len(lits_list)):
                    if lits_list[i].positive != lits_list[j].positive:
                        continue
                    sigma = fol.unify_atoms(lits_list[i], lits_list[j])
                    if isinstance(sigma, fol.UnifyFailure):
                        continue
                    candidates.append(tuple(fol.substitute_literal(sigma, l)
                                            for l in lits_list))
            for lits in candidates:
                clause = fol.Clause(0, lits)
                if clause.is_empty:
                    return True
                if clause.is_tautology():
                    continue
                key = clause.canonical_key()
                if key in keys:
                    continue
                keys.add(key)
                new.append(clause)
                everything.append(clause)
                if len(everything) > max_clauses:
                    return None
        if not new:
            return False
        frontier = new
    return None


# ---------------------------------------------------------------------------
# Chain-pattern and term-walk enumeration oracles


def term_string(t, on_path):
    """Render a term keeping only the argument positions listed in on_path."""
    if t.is_variable:
        return "*"
    if not t.args:
        return t.symbol.name
    head, rest = on_path[0], on_path[1:]
    inner = ",".join(term_string(a, rest) if i == head else "*"
                     for i, a in enumerate(t.args))
    return f"{t.symbol.name}({inner})"


def enumerate_paths(t):
    """All root-to-leaf position paths of a term."""
    if not t.args:
        return [[]]
    return [[i] + p for i, a in enumerate(t.args) for p in enumerate_paths(a)]


def ref_chain_patterns(clause):
    """Multiset of (polarity, linearization) strings built by plain
    enumeration of argument paths."""
    out = {}
    for lit in clause.literals:
        if not lit.args:
            key = (lit.positive, lit.predicate.name)
            out[key] = out.get(key, 0) + 1
            continue
        for i, arg in enumerate(lit.args):
            for path in enumerate_paths(arg):
                rendered = ",".join(
                    term_string(a, path) if j == i else "*"
                    for j, a in enumerate(lit.args))
                key = (lit.positive, f"{lit.predicate.name}({rendered})")
                out[key] = out.get(key, 0) + 1
    return out


def ref_term_walks(clause, length):
    """All downward label sequences of exactly `length` symbols, with the
    polarity sign attached to predicate-initial walks."""

    def label(t):
        return "*" if t.is_variable else t.symbol.name

    def downward(t, k):
        if k == 1:
            return [[label(t)]]
        return [[label(t)] + w for a in t.args for w in downward(a, k - 1)]

    def subterms(t):
        yield t
        for a in t.args:
            yield from subterms(a)

    walks = []
    for lit in clause.literals:
        sign = "+" if lit.positive else "-"
        if length == 1:
            walks.append(sign + lit.predicate.name)
        else:
            for arg in lit.args:
                for w in downward(arg, length - 1):
                    walks.append(".".join([sign + lit.predicate.name] + w))
        for arg in lit.args:
            for sub in subterms(arg):
                for w in downward(sub, length):
                    walks.append(".".join(w))
    return sorted(walks)


# ---------------------------------------------------------------------------
# Naive GNN references (plain numpy over the same parameters)


def _label_rows(dag, vocab):
    from satguide.gnn import node_label_row
    return {nid: node_label_row(cls, payload, vocab)
            for nid, cls, payload in dag.nodes}


def ref_gcn(dag, params, cfg):
    table = params["gnn/embed"].data
    h = {nid: table[row] for nid, row in _label_rows(dag, cfg.gnn_vocab).items()}
    nbrs = {nid: [] for nid, _, _ in dag.nodes}
    for p, c, _ in dag.edges:
        nbrs[p].append(c)
        nbrs[c].append(p)
    for i in range(cfg.gnn_rounds):
        w = params[f"gnn/W{i}"].data
        new = {}
        for nid, _, _ in dag.nodes:
            deg = len(nbrs[nid])
            agg = h[nid] / max(deg, 1)
            for v in nbrs[nid]:
                agg = agg + h[v] / np.sqrt(deg * len(nbrs[v]))
            new[nid] = np.maximum(w @ agg, 0.0)
        h = new
    return np.mean([h[nid] for nid, _, _ in dag.nodes], axis=0)


def ref_sage(dag, params, cfg):
    table = params["gnn/embed"].data
    h = {nid: table[row] for nid, row in _label_rows(dag, cfg.gnn_vocab).items()}
    nbrs = {nid: [] for nid, _, _ in dag.nodes}
    for p, c, _ in dag.edges:
        nbrs[p].append(c)
        nbrs[c].append(p)
    for i in range(cfg.gnn_rounds):
        wa = params[f"gnn/WA{i}"].data
        w = params[f"gnn/W{i}"].data
        new = {}
        for nid, _, _ in dag.nodes:
            pool = h[nid] + sum((h[v] for v in nbrs[nid]),
                                np.zeros_like(h[nid]))
            pool = pool / (1 + len(nbrs[nid]))
            hat = np.maximum(wa @ pool, 0.0)
            new[nid] = np.maximum(w @ np.concatenate([h[nid], hat]), 0.0)
        h = new
    return np.mean([h[nid] for nid, _, _ in dag.nodes], axis=0)


def _ref_layer_norm(x, gain, bias, eps=1e-5):
    m = x.mean()
    var = ((x - m) ** 2).mean()
    return (x - m) / np.sqrt(var + eps) * gain + bias


def ref_staged_sequential(dag, params, cfg):
    """Node-at-a-time staged evaluation: no level batching, just a recursive
    dependency-driven computation of each node's current-iteration value."""
    table = params["gnn/embed"].data
    h = {nid: table[row].copy()
         for nid, row in _label_rows(dag, cfg.gnn_vocab).items()}

    def directed_pass(h_prev, i, direction):
        reverse = direction == "down"
        nbrs = {nid: [] for nid, _, _ in dag.nodes}
        for p, c, r in dag.edges:
            if reverse:
                nbrs[c].append((p, r))
            else:
                nbrs[p].append((c, r))
        w = params[f"gnn/{direction}_W{i}"].data
        gain = params[f"gnn/{direction}_ln_gain{i}"].data
        bias = params[f"gnn/{direction}_ln_bias{i}"].data
        cache = {}

        def value(nid):
            if nid in cache:
                return cache[nid]
            pre = w @ h_prev[nid]
            groups = {}
            for v, r in nbrs[nid]:
                groups.setdefault(r, []).append(v)
            for r in sorted(groups):
                wr = params[f"gnn/{direction}_Wr{i}_{r}"].data
                agg = sum((value(v) for v in groups[r]),
                          np.zeros_like(pre))
                pre = pre + (wr @ agg) / len(groups[r])
            cache[nid] = np.tanh(_ref_layer_norm(pre, gain, bias)) + h_prev[nid]
            return cache[nid]

        return {nid: value(nid) for nid, _, _ in dag.nodes}

    for i in range(cfg.gnn_rounds):
        up = directed_pass(h, i, "up")
        down = directed_pass(h, i, "down")
        wf = params[f"gnn/bd_W{i}"].data
        wg = params[f"gnn/bd_Wg{i}"].data
        new = {}
        for nid, _, _ in dag.nodes:
            mixed = wf @ np.concatenate([up[nid], down[nid]])
            new[nid] = ((up[nid] + down[nid]) / 2 + mixed
                        + np.maximum(wg @ mixed, 0.0))
        h = new
    if cfg.staged_root_readout:
        pooled = h[dag.root]
    else:
        pooled = np.mean([h[nid] for nid, _, _ in dag.nodes], axis=0)
    out = params["gnn/readout_W"].data @ pooled
    return np.maximum(_ref_layer_norm(out, params["gnn/readout_ln_gain"].data,
                                      params["gnn/readout_ln_bias"].data), 0.0)


# ---------------------------------------------------------------------------
# Random clause generation for property tests


def random_term(rng, symbols, depth=0):
    kind = rng.integers(0, 3 if depth < 2 else 2)
    if kind == 0:
        return Term(symbols["vars"][rng.integers(len(symbols["vars"]))])
    if kind == 1:
        return Term(symbols["consts"][rng.integers(len(symbols["consts"]))])
    f = symbols["funcs"][rng.integers(len(symbols["funcs"]))]
    return Term(f, tuple(random_term(rng, symbols, depth + 1)
                         for _ in range(f.arity)))


def random_clause(rng, table, clause_id=0, max_lits=4):
    symbols = {
        "vars": [table.intern(f"X{i}", Kind.VARIABLE, 0) for i in range(4)],
        "consts": [table.intern(f"c{i}", Kind.CONSTANT, 0) for i in range(3)],
        "funcs": [table.intern("f", Kind.FUNCTION, 1),
                  table.intern("g", Kind.FUNCTION, 2)],
    }
    preds = [table.intern("p", Kind.PREDICATE, 1),
             table.intern("q", Kind.PREDICATE, 2),
             table.intern("r", Kind.PREDICATE, 0)]
    lits = []
    for _ in range(int(rng.integers(1, max_lits + 1))):
        pred = preds[rng.integers(len(preds))]
        args = tuple(random_term(rng, symbols) for _ in range(pred.arity))
        lits.append(Literal(bool(rng.integers(2)), pred, args))
    return fol.Clause(clause_id, tuple(lits))


def rename_consistently(clause, table, offset=50):
    """Apply a fresh consistent variable renaming to a clause."""
    mapping = {}
    for i, v in enumerate(clause.variables()):
        mapping[v] = Term(table.intern(f"Y{offset + i}", Kind.VARIABLE, 0))
    if not mapping:
        return clause
    return fol.apply_substitution(mapping, clause)
