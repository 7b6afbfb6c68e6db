"""Given-clause saturation loop.

The engine keeps a processed set and a set of available actions (rule, clause
from the unprocessed pool).  A guidance callback picks the next action; the
engine executes it, applies forward simplification (tautology and variant
deletion), and tracks provenance so a refutation proof can be extracted as
the ancestor closure of the empty clause.

One proof attempt is strictly single-threaded; separate attempts share
nothing mutable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import fol
from .fol import Clause, FreshVariables, Role, clause_weight


class InferenceRule(Enum):
    BINARY_RESOLUTION = "binary_resolution"
    FACTORING = "factoring"


RULES = (InferenceRule.BINARY_RESOLUTION, InferenceRule.FACTORING)


@dataclass(frozen=True)
class Action:
    rule: InferenceRule
    clause: Clause


class Status(Enum):
    RUNNING = "running"
    REFUTED = "refuted"
    SATURATED = "saturated"
    LIMIT = "limit"


@dataclass
class Limits:
    max_steps: int = 2000
    max_seconds: float = 100.0

    def __post_init__(self):
        if self.max_steps < 0 or self.max_seconds <= 0:
            raise ValueError("limits must be positive")


DERIVED_CAP_DEFAULT = 500


@dataclass
class ProofState:
    problem: fol.Problem
    t: int = 0
    processed: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    conjecture: list = field(default_factory=list)
    status: Status = Status.RUNNING
    clauses: dict = field(default_factory=dict)          # id -> Clause
    empty_clause: Optional[Clause] = None
    steps: list = field(default_factory=list)            # (t, Action, [derived ids])
    truncated: bool = False
    subsumption: bool = False
    derived_cap: int = DERIVED_CAP_DEFAULT
    _keys: dict = field(default_factory=dict)            # canonical key -> id
    _next_id: int = 0
    _fresh: Optional[FreshVariables] = None

    def processed_clauses(self):
        return list(self.processed)

    def available_actions(self):
        return list(self.actions)


class EngineError(RuntimeError):
    pass


def init(problem, subsumption=False, derived_cap=DERIVED_CAP_DEFAULT):
    """Build the step-0 state: empty processed set, actions = rules x inputs."""
    if not problem.negated_conjecture:
        raise EngineError("problem has no negated-conjecture clause")
    state = ProofState(problem=problem, subsumption=subsumption,
                       derived_cap=derived_cap)
    state.conjecture = list(problem.negated_conjecture)
    state._fresh = FreshVariables(problem.symbols, start=0)
    for c in problem.clauses:
        state.clauses[c.id] = c
        state._keys[c.canonical_key()] = c.id
        state._next_id = max(state._next_id, c.id + 1)
        if c.is_empty:
            state.status = Status.REFUTED
            state.empty_clause = c
    if state.status is Status.RUNNING:
        for c in problem.clauses:
            for rule in RULES:
                state.actions.append(Action(rule, c))
    return state


def _resolvents(c1, c2, fresh, out):
    """All binary resolvents of c1 against c2 (clauses renamed apart first)."""
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


def generate_inferences(rule, given, processed, fresh):
    """Raw conclusions for one rule applied to the given clause.

    binary_resolution pairs the given clause with every processed clause
    (both orientations collapse into one pass over literal pairs) and with
    itself; factoring unifies any two same-polarity literals of the given
    clause.  Tautologies and in-batch duplicates are removed.
    """
    raw = []
    if rule is InferenceRule.BINARY_RESOLUTION:
        for other in processed:
            _resolvents(given, other, fresh, raw)
        _resolvents(given, given, fresh, raw)
    elif rule is InferenceRule.FACTORING:
        lits = given.literals
        for i in range(len(lits)):
            for j in range(i + 1, len(lits)):
                if lits[i].positive != lits[j].positive:
                    continue
                if lits[i].predicate != lits[j].predicate:
                    continue
                sigma = fol.unify_atoms(lits[i], lits[j])
                if isinstance(sigma, fol.UnifyFailure):
                    continue
                new = tuple(fol.substitute_literal(sigma, l) for l in lits)
                raw.append((new, (given.id,)))
    else:
        raise EngineError(f"unknown rule {rule}")
    return raw


def _subsumes(general, specific):
    """Cheap subsumption: a literal-injective matching attempt."""
    if len(general.literals) > len(specific.literals):
        return False

    def match(i, sigma, used):
        if i == len(general.literals):
            return True
        gl = general.literals[i]
        for j, sl in enumerate(specific.literals):
            if j in used or gl.positive != sl.positive or gl.predicate != sl.predicate:
                continue
            sub = dict(sigma)
            if _match_terms(gl.args, sl.args, sub):
                if match(i + 1, sub, used | {j}):
                    return True
        return False

    return match(0, {}, frozenset())


def _match_terms(gargs, sargs, sigma):
    for g, s in zip(gargs, sargs):
        if g.is_variable:
            if g.symbol in sigma:
                if sigma[g.symbol] != s:
                    return False
            else:
                sigma[g.symbol] = s
        else:
            if s.is_variable or g.symbol != s.symbol:
                return False
            if not _match_terms(g.args, s.args, sigma):
                return False
    return True


def execute(state, action):
    """Run one action: derive, simplify, and apply the state-update equations
    C' = C u {given} and A' = (A - {action}) u (rules x derived)."""
    if state.status is not Status.RUNNING:
        raise EngineError(f"state is {state.status.value}, not running")
    if action not in state.actions:
        raise EngineError("action not available")
    given = action.clause
    raw = generate_inferences(action.rule, given,
                              state.processed_clauses(), state._fresh)
    rule_id = action.rule.value
    derived = []
    for lits, parent_ids in raw:
        cid = state._next_id
        clause = Clause(cid, lits, age=state.t + 1, role=Role.DERIVED,
                        parents=tuple((p, rule_id) for p in parent_ids),
                        sos=any(state.clauses[p].sos for p in parent_ids))
        if clause.is_tautology():
            continue
        key = clause.canonical_key()
        if key in state._keys:
            continue
        if state.subsumption and any(_subsumes(p, clause)
                                     for p in state.processed):
            continue
        state._keys[key] = cid
        state._next_id += 1
        derived.append(clause)
    if len(derived) > state.derived_cap:
        derived.sort(key=lambda c: (clause_weight(c), c.id))
        for dropped in derived[state.derived_cap:]:
            del state._keys[dropped.canonical_key()]
        derived = derived[:state.derived_cap]
        derived.sort(key=lambda c: c.id)
        state.truncated = True
    for c in derived:
        state.clauses[c.id] = c
    state.steps.append((state.t, action, [c.id for c in derived]))
    if given not in state.processed:
        state.processed.append(given)
    state.actions.remove(action)
    for c in derived:
        for rule in RULES:
            state.actions.append(Action(rule, c))
    state.t += 1
    for c in derived:
        if c.is_empty:
            state.status = Status.REFUTED
            state.empty_clause = c
            break
    if state.status is Status.RUNNING and not state.actions:
        state.status = Status.SATURATED
    return state, derived


@dataclass
class RefutationProof:
    steps: list            # (step index, Action, derived ids in the closure)
    clause_ids: set        # ancestor closure of the empty clause
    total_steps: int
    elapsed: float = 0.0


def extract_proof(state, elapsed=0.0):
    """Ancestor closure of the empty clause under parent links."""
    if state.status is not Status.REFUTED:
        raise EngineError("no refutation to extract")
    closure = set()
    stack = [state.empty_clause.id]
    while stack:
        cid = stack.pop()
        if cid in closure:
            continue
        closure.add(cid)
        for pid, _ in state.clauses[cid].parents:
            stack.append(pid)
    proof_steps = []
    for t, action, derived_ids in state.steps:
        in_proof = [d for d in derived_ids if d in closure]
        if in_proof:
            proof_steps.append((t, action, in_proof))
    return RefutationProof(proof_steps, closure, state.t, elapsed)


@dataclass
class StepRecord:
    t: int
    actions: list                 # (rule, clause id) snapshot
    processed_ids: list
    chosen: int
    distribution: object          # np array or None
    derived_ids: list


@dataclass
class EpisodeTrace:
    problem: fol.Problem
    status: Status
    steps: list
    clauses: dict
    conjecture_ids: list
    total_steps: int
    elapsed: float
    proof: Optional[RefutationProof] = None
    seed: Optional[int] = None

    @property
    def solved(self):
        return self.status is Status.REFUTED


def run_episode(problem, policy: Callable, limits=None, seed=0, rng=None,
                subsumption=False, derived_cap=DERIVED_CAP_DEFAULT):
    """Drive state -> policy -> execute until refuted, saturated, or limit.

    The policy is called as policy(state, rng) and returns (action index,
    distribution-or-None).  A policy failure aborts the episode with limit
    status.  Step limits are the determinism anchor; the wall clock is
    advisory.
    """
    import numpy as np

    limits = limits or Limits()
    if rng is None:
        rng = np.random.default_rng(seed)
    start = time.monotonic()
    state = init(problem, subsumption=subsumption, derived_cap=derived_cap)
    records = []
    while (state.status is Status.RUNNING and state.t < limits.max_steps
           and time.monotonic() - start < limits.max_seconds):
        actions = state.available_actions()
        try:
            chosen, dist = policy(state, rng)
        except Exception:
            state.status = Status.LIMIT
            break
        action = actions[chosen]
        record = StepRecord(state.t, [(a.rule, a.clause.id) for a in actions],
                            [c.id for c in state.processed], chosen, dist, [])
        _, derived = execute(state, action)
        record.derived_ids = [c.id for c in derived]
        records.append(record)
    if state.status is Status.RUNNING:
        state.status = Status.LIMIT
    elapsed = time.monotonic() - start
    trace = EpisodeTrace(problem=problem, status=state.status, steps=records,
                         clauses=dict(state.clauses),
                         conjecture_ids=[c.id for c in state.conjecture],
                         total_steps=state.t, elapsed=elapsed, seed=seed)
    if state.status is Status.REFUTED:
        trace.proof = extract_proof(state, elapsed)
    return trace


# Baseline guidance callbacks -------------------------------------------------

def fifo_policy(state, rng):
    """Always pick the oldest available action (fair / exhaustive)."""
    actions = state.actions
    best = min(range(len(actions)),
               key=lambda i: (actions[i].clause.age, actions[i].clause.id,
                              actions[i].rule.value))
    return best, None


def random_policy(state, rng):
    import numpy as np
    n = len(state.actions)
    dist = np.full(n, 1.0 / n)
    return int(rng.integers(n)), dist


def age_weight_policy(state, rng):
    """Alternate between the youngest-id and lightest available clause."""
    actions = state.actions
    if state.t % 2 == 0:
        best = min(range(len(actions)),
                   key=lambda i: (clause_weight(actions[i].clause),
                                  actions[i].clause.id, actions[i].rule.value))
    else:
        best = min(range(len(actions)),
                   key=lambda i: (actions[i].clause.id, actions[i].rule.value))
    return best, None
