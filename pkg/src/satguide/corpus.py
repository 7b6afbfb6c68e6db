"""Synthetic problem families and corpus manifests.

Generation is fully deterministic in (family, size, seed): the same call
writes byte-identical files.  The marker-predicate family embeds a fixed
predicate in exactly the proof-relevant clauses and records the
oracle-minimal proof in a sidecar manifest.
"""

from __future__ import annotations

import itertools
import json
import os

import numpy as np

from . import fol

FAMILIES = ("chain-resolution", "marker-predicate", "pigeonhole-small",
            "random-cnf")

MARKER_PREDICATE = "mrk"


def _chain_problem(index, length):
    lines = [f"cnf(start, axiom, p1_{index}(c_{index}))."]
    for i in range(1, length):
        lines.append(
            f"cnf(step{i}, axiom, ~p{i}_{index}(X) | p{i + 1}_{index}(X)).")
    lines.append(
        f"cnf(goal, negated_conjecture, ~p{length}_{index}(c_{index})).")
    return "\n".join(lines) + "\n"


def _marker_problem(index, rng):
    n_distract = int(rng.integers(5, 9))
    lines = [
        f"cnf(m_fact, axiom, {MARKER_PREDICATE}(k{index})).",
        f"cnf(m_rule, axiom, ~{MARKER_PREDICATE}(X) | goal(X)).",
    ]
    for j in range(n_distract):
        lines.append(f"cnf(d{j}_fact, axiom, dja{index}_{j}(e{index}_{j})).")
        lines.append(
            f"cnf(d{j}_rule, axiom, ~dja{index}_{j}(X) | djb{index}_{j}(X)).")
    lines.append(f"cnf(neg_goal, negated_conjecture, ~goal(k{index})).")
    return "\n".join(lines) + "\n"


def _pigeonhole_problem(n):
    lines = []
    holes = n - 1
    for i in range(1, n + 1):
        lits = " | ".join(f"in{i}_{j}" for j in range(1, holes + 1))
        role = "negated_conjecture" if i == 1 else "axiom"
        lines.append(f"cnf(pigeon{i}, {role}, {lits}).")
    for j in range(1, holes + 1):
        for i, k in itertools.combinations(range(1, n + 1), 2):
            lines.append(f"cnf(hole{j}_{i}_{k}, axiom, ~in{i}_{j} | ~in{k}_{j}).")
    return "\n".join(lines) + "\n"


def _random_cnf_problem(index, rng):
    n_atoms = int(rng.integers(4, 8))
    n_clauses = int(rng.integers(5, 10))
    lines = []
    for ci in range(n_clauses):
        width = int(rng.integers(1, 4))
        lits = []
        for _ in range(width):
            atom = int(rng.integers(n_atoms))
            sign = "~" if rng.random() < 0.5 else ""
            lits.append(f"{sign}a{atom}_{index}")
        role = "negated_conjecture" if ci == 0 else "axiom"
        lines.append(f"cnf(r{ci}, {role}, {' | '.join(dict.fromkeys(lits))}).")
    return "\n".join(lines) + "\n"


def _bfs_minimal_proof(problem, max_depth=6, max_clauses=4000):
    """Level-saturation search; returns the input-clause names in the
    ancestor closure of the first empty clause found, or None."""
    fresh = fol.FreshVariables(problem.symbols, start=100000)
    clauses = list(problem.clauses)
    store = {c.id: c for c in clauses}
    keys = {c.canonical_key() for c in clauses}
    next_id = max(store) + 1
    frontier = list(clauses)
    for depth in range(max_depth):
        new = []
        pool = list(store.values())
        for c1 in frontier:
            partners = pool
            for c2 in partners:
                out = []
                fol_resolvents(c1, c2, fresh, out)
                for lits, parents in out:
                    clause = fol.Clause(next_id, lits, age=depth + 1,
                                        role=fol.Role.DERIVED,
                                        parents=tuple((p, "r") for p in parents))
                    if clause.is_tautology():
                        continue
                    key = clause.canonical_key()
                    if key in keys:
                        continue
                    keys.add(key)
                    store[next_id] = clause
                    next_id += 1
                    new.append(clause)
                    if clause.is_empty:
                        return _closure_input_names(clause, store)
            # factors of c1
            for lits, parents in _factors(c1, fresh):
                clause = fol.Clause(next_id, lits, age=depth + 1,
                                    role=fol.Role.DERIVED,
                                    parents=tuple((p, "f") for p in parents))
                key = clause.canonical_key()
                if clause.is_tautology() or key in keys:
                    continue
                keys.add(key)
                store[next_id] = clause
                next_id += 1
                new.append(clause)
            if len(store) > max_clauses:
                return None
        if not new:
            return None
        frontier = new
    return None


def fol_resolvents(c1, c2, fresh, out):
    r1 = fol.rename_apart(c1, fresh)
    r2 = fol.rename_apart(c2, fresh)
    for l1 in r1.literals:
        for l2 in r2.literals:
            if l1.positive == l2.positive or l1.predicate != l2.predicate:
                continue
            sigma = fol.unify_atoms(l1, l2)
            if isinstance(sigma, fol.UnifyFailure):
                continue
            lits = tuple(fol.substitute_literal(sigma, l)
                         for l in r1.literals if l is not l1)
            lits += tuple(fol.substitute_literal(sigma, l)
                          for l in r2.literals if l is not l2)
            out.append((lits, (c1.id, c2.id)))


def _factors(clause, fresh):
    out = []
    lits = clause.literals
    for i in range(len(lits)):
        for j in range(i + 1, len(lits)):
            if lits[i].positive != lits[j].positive:
                continue
            if lits[i].predicate != lits[j].predicate:
                continue
            sigma = fol.unify_atoms(lits[i], lits[j])
            if isinstance(sigma, fol.UnifyFailure):
                continue
            out.append((tuple(fol.substitute_literal(sigma, l) for l in lits),
                        (clause.id,)))
    return out


def _closure_input_names(empty_clause, store):
    closure = set()
    stack = [empty_clause.id]
    while stack:
        cid = stack.pop()
        if cid in closure:
            continue
        closure.add(cid)
        for pid, _ in store[cid].parents:
            stack.append(pid)
    return sorted(store[cid].name for cid in closure
                  if store[cid].name is not None)


def gen_corpus(family, size, seed, out_dir):
    """Write `size` problem files plus a manifest; deterministic in
    (family, size, seed)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if family not in FAMILIES:
        raise ValueError(f"unknown family '{family}'")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    files = []
    marker = {}
    for i in range(size):
        name = f"{family.replace('-', '_')}_{i:03d}"
        if family == "chain-resolution":
            text = _chain_problem(i, int(rng.integers(2, 6)))
        elif family == "marker-predicate":
            text = _marker_problem(i, rng)
        elif family == "pigeonhole-small":
            text = _pigeonhole_problem(3 + i % 2)
        else:
            text = _random_cnf_problem(i, rng)
        path = os.path.join(out_dir, name + ".p")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        files.append(name + ".p")
        if family == "marker-predicate":
            problem = fol.parse_tptp(text, problem_name=name)
            proof_names = _bfs_minimal_proof(problem)
            marker[name] = {
                "marker_predicate": MARKER_PREDICATE,
                "proof_clauses": proof_names or [],
            }
    manifest = {"name": f"{family}-{size}-{seed}", "files": files,
                "family": family, "seed": seed}
    if marker:
        manifest["marker"] = marker
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_corpus(manifest_path):
    """Load a manifest and parse every problem file."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(manifest_path)
    problems = []
    seen = set()
    for rel in manifest["files"]:
        path = os.path.join(base, rel)
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        name = os.path.splitext(os.path.basename(rel))[0]
        if name in seen:
            raise ValueError(f"duplicate problem name '{name}'")
        seen.add(name)
        with open(path, "r", encoding="utf-8") as fh:
            problems.append(fol.parse_tptp(fh.read(), problem_name=name))
    return manifest, problems
