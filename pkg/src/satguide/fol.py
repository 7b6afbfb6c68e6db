"""First-order logic kernel: symbols, terms, literals, clauses, a TPTP-CNF
parser/printer, substitution and unification, and clause-to-DAG conversion.

All values are immutable after construction and can be shared freely; the
fresh-variable counter used by rename_apart is the only mutable piece and is
confined to one proof attempt.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class Kind(Enum):
    PREDICATE = "predicate"
    FUNCTION = "function"
    CONSTANT = "constant"
    VARIABLE = "variable"


@dataclass(frozen=True)
class Symbol:
    id: int
    name: str
    kind: Kind
    arity: int


class SymbolTable:
    """Per-problem symbol interning; (name, kind, arity) determines the id."""

    def __init__(self):
        self._by_key = {}
        self._by_name = {}
        self.symbols = []

    def intern(self, name, kind, arity):
        key = (name, kind)
        if key in self._by_key:
            sym = self._by_key[key]
            if sym.arity != arity:
                raise ParseError(
                    f"symbol '{name}' used with arities {sym.arity} and {arity}")
            return sym
        sym = Symbol(len(self.symbols), name, kind, arity)
        self._by_key[key] = sym
        self.symbols.append(sym)
        return sym

    def fresh_variable(self, index):
        return self.intern(f"V{index}", Kind.VARIABLE, 0)


@dataclass(frozen=True)
class Term:
    """Variable(symbol) or Application(symbol, args); args empty for variables
    and constants."""
    symbol: Symbol
    args: tuple = ()

    def __post_init__(self):
        if self.symbol.kind is Kind.VARIABLE and self.args:
            raise ValueError("variables take no arguments")
        if self.symbol.kind is not Kind.VARIABLE and len(self.args) != self.symbol.arity:
            raise ValueError(f"arity mismatch for {self.symbol.name}")

    @property
    def is_variable(self):
        return self.symbol.kind is Kind.VARIABLE

    def variables(self):
        if self.is_variable:
            yield self.symbol
        for a in self.args:
            yield from a.variables()

    def __str__(self):
        if not self.args:
            return self.symbol.name
        return f"{self.symbol.name}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Literal:
    positive: bool
    predicate: Symbol
    args: tuple = ()

    def __post_init__(self):
        if len(self.args) != self.predicate.arity:
            raise ValueError(f"arity mismatch for {self.predicate.name}")

    def negate(self):
        return Literal(not self.positive, self.predicate, self.args)

    def variables(self):
        for a in self.args:
            yield from a.variables()

    def __str__(self):
        atom = self.predicate.name
        if self.args:
            atom += f"({','.join(str(a) for a in self.args)})"
        return atom if self.positive else "~" + atom


class Role(Enum):
    AXIOM = "axiom"
    NEGATED_CONJECTURE = "negated_conjecture"
    DERIVED = "derived"


def _term_skeleton(t):
    """Structure string with variables wildcarded; renaming-invariant."""
    if t.is_variable:
        return "*"
    if not t.args:
        return t.symbol.name
    return f"{t.symbol.name}({','.join(_term_skeleton(a) for a in t.args)})"


def _literal_key(lit):
    skel = lit.predicate.name
    if lit.args:
        skel += f"({','.join(_term_skeleton(a) for a in lit.args)})"
    # tiebreak: variables numbered by first occurrence within this literal,
    # so the order is deterministic and renaming-invariant
    mapping = {}

    def canon(t):
        if t.is_variable:
            if t.symbol not in mapping:
                mapping[t.symbol] = f"_{len(mapping)}"
            return mapping[t.symbol]
        if not t.args:
            return t.symbol.name
        return f"{t.symbol.name}({','.join(canon(a) for a in t.args)})"

    canon_str = lit.predicate.name + "".join(canon(a) for a in lit.args)
    return (skel, not lit.positive, canon_str)


@dataclass(frozen=True)
class Clause:
    """Disjunction of literals with provenance metadata.

    Literals are kept in a canonical renaming-invariant order so variant
    detection is order-insensitive.  An empty literal tuple is the empty
    clause (refutation marker).
    """
    id: int
    literals: tuple
    age: int = 0
    role: Role = Role.AXIOM
    parents: tuple = ()  # (clause id, inference rule id) pairs
    sos: bool = False
    name: Optional[str] = None

    def __post_init__(self):
        unique = list({lit: None for lit in self.literals})
        object.__setattr__(self, "literals",
                           tuple(sorted(unique, key=_literal_key)))

    @property
    def is_empty(self):
        return not self.literals

    def variables(self):
        seen = []
        for lit in self.literals:
            for v in lit.variables():
                if v not in seen:
                    seen.append(v)
        return seen

    def canonical_key(self):
        """Variant-detection key: literals in canonical order, variables
        renamed by first occurrence."""
        mapping = {}

        def rt(t):
            if t.is_variable:
                if t.symbol not in mapping:
                    mapping[t.symbol] = f"_{len(mapping)}"
                return mapping[t.symbol]
            if not t.args:
                return t.symbol.name
            return f"{t.symbol.name}({','.join(rt(a) for a in t.args)})"

        parts = []
        for lit in self.literals:
            s = lit.predicate.name
            if lit.args:
                s += f"({','.join(rt(a) for a in lit.args)})"
            parts.append(("" if lit.positive else "~") + s)
        return "|".join(parts)

    def is_tautology(self):
        atoms = {(lit.predicate.id, lit.args) for lit in self.literals if lit.positive}
        return any((lit.predicate.id, lit.args) in atoms
                   for lit in self.literals if not lit.positive)

    def __str__(self):
        if self.is_empty:
            return "$false"
        return " | ".join(str(lit) for lit in self.literals)


@dataclass
class Problem:
    name: str
    axioms: list
    negated_conjecture: list
    symbols: SymbolTable = field(default_factory=SymbolTable)

    @property
    def clauses(self):
        return self.axioms + self.negated_conjecture


def clause_weight(c):
    """Total count of predicate, function, constant and variable occurrences."""

    def tw(t):
        return 1 + sum(tw(a) for a in t.args)

    return sum(1 + sum(tw(a) for a in lit.args) for lit in c.literals)


# ---------------------------------------------------------------------------
# Substitution and unification


def substitute_term(sigma, t):
    if t.is_variable:
        return sigma.get(t.symbol, t)
    if not t.args:
        return t
    return Term(t.symbol, tuple(substitute_term(sigma, a) for a in t.args))


def substitute_literal(sigma, lit):
    return Literal(lit.positive, lit.predicate,
                   tuple(substitute_term(sigma, a) for a in lit.args))


def apply_substitution(sigma, clause, new_id=None):
    """Simultaneous substitution over all literals; duplicates collapse via
    the canonical literal set."""
    lits = tuple(substitute_literal(sigma, lit) for lit in clause.literals)
    return Clause(new_id if new_id is not None else clause.id, lits,
                  clause.age, clause.role, clause.parents, clause.sos, clause.name)


class UnifyFailure:
    __slots__ = ("reason",)

    def __init__(self, reason):
        self.reason = reason  # "clash" or "occurs-check"

    def __repr__(self):
        return f"UnifyFailure({self.reason})"


def _occurs(var, t, sigma):
    if t.is_variable:
        if t.symbol == var:
            return True
        if t.symbol in sigma:
            return _occurs(var, sigma[t.symbol], sigma)
        return False
    return any(_occurs(var, a, sigma) for a in t.args)


def _resolve(t, sigma):
    while t.is_variable and t.symbol in sigma:
        t = sigma[t.symbol]
    return t


def unify(t1, t2, sigma=None):
    """Most general unifier with occurs check.

    Accepts terms or (predicate, args) atom tuples.  Returns a substitution
    dict mapping variable symbols to terms, or a UnifyFailure.
    """
    if sigma is None:
        sigma = {}
    stack = [(t1, t2)]
    while stack:
        a, b = stack.pop()
        if isinstance(a, tuple):  # atom: (Symbol, args)
            if not isinstance(b, tuple) or a[0] != b[0]:
                return UnifyFailure("clash")
            stack.extend(zip(a[1], b[1]))
            continue
        a, b = _resolve(a, sigma), _resolve(b, sigma)
        if a.is_variable and b.is_variable and a.symbol == b.symbol:
            continue
        if a.is_variable:
            if _occurs(a.symbol, b, sigma):
                return UnifyFailure("occurs-check")
            sigma[a.symbol] = b
            continue
        if b.is_variable:
            if _occurs(b.symbol, a, sigma):
                return UnifyFailure("occurs-check")
            sigma[b.symbol] = a
            continue
        if a.symbol != b.symbol:
            return UnifyFailure("clash")
        stack.extend(zip(a.args, b.args))
    # flatten to an idempotent substitution
    out = {}
    for v in sigma:
        out[v] = _deep_resolve(Term(v), sigma)
    return out


def _deep_resolve(t, sigma):
    t = _resolve(t, sigma)
    if t.is_variable or not t.args:
        return t
    return Term(t.symbol, tuple(_deep_resolve(a, sigma) for a in t.args))


def unify_atoms(lit1, lit2):
    """Unify the atoms of two literals, ignoring polarity."""
    return unify((lit1.predicate, lit1.args), (lit2.predicate, lit2.args))


class FreshVariables:
    """Per-attempt counter handing out variables not used anywhere else."""

    def __init__(self, table, start=0):
        self.table = table
        self.counter = start

    def next(self):
        while True:
            sym = self.table.intern(f"V_{self.counter}", Kind.VARIABLE, 0)
            self.counter += 1
            return sym


def rename_apart(clause, fresh):
    sigma = {v: Term(fresh.next()) for v in clause.variables()}
    if not sigma:
        return clause
    return apply_substitution(sigma, clause)


# ---------------------------------------------------------------------------
# TPTP CNF parsing and printing


class ParseError(ValueError):
    def __init__(self, message, line=None, column=None):
        loc = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


_ROLE_MAP = {
    "axiom": Role.AXIOM,
    "hypothesis": Role.AXIOM,
    "negated_conjecture": Role.NEGATED_CONJECTURE,
}


class _Lexer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, msg):
        raise ParseError(msg, self.line, self.col)

    def _advance(self, n):
        for ch in self.text[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
            elif ch == "%":
                end = self.text.find("\n", self.pos)
                self._advance((end if end != -1 else len(self.text)) - self.pos)
            else:
                break

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, token):
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            self.error(f"expected '{token}'")
        self._advance(len(token))

    def name(self):
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum()
                                             or self.text[self.pos] == "_"):
            self._advance(1)
        if self.pos == start:
            self.error("expected a name")
        return self.text[start:self.pos]


def parse_tptp(text, problem_name="problem"):
    """Parse TPTP cnf(...) statements into a Problem.

    Supported roles: axiom, hypothesis (mapped to axiom), negated_conjecture.
    '|' is disjunction, '~' negation; uppercase-initial names are variables.
    """
    lex = _Lexer(text)
    table = SymbolTable()
    axioms, conjecture = [], []
    next_id = 0
    while lex.peek():
        lex.expect("cnf")
        lex.expect("(")
        cname = lex.name()
        lex.expect(",")
        role_name = lex.name()
        if role_name not in _ROLE_MAP:
            lex.error(f"unknown role '{role_name}'")
        role = _ROLE_MAP[role_name]
        lex.expect(",")
        paren = lex.peek() == "("
        if paren:
            lex.expect("(")
        literals = [_parse_literal(lex, table)]
        while lex.peek() == "|":
            lex.expect("|")
            literals.append(_parse_literal(lex, table))
        if paren:
            lex.expect(")")
        lex.expect(")")
        lex.expect(".")
        clause = Clause(next_id, tuple(literals), age=0, role=role,
                        sos=(role is Role.NEGATED_CONJECTURE), name=cname)
        next_id += 1
        (conjecture if role is Role.NEGATED_CONJECTURE else axioms).append(clause)
    return Problem(problem_name, axioms, conjecture, table)


def _parse_literal(lex, table):
    positive = True
    while lex.peek() == "~":
        lex.expect("~")
        positive = not positive
    if lex.peek() == "$":
        lex.expect("$false")
        lex.error("$false is not a literal")
    name = lex.name()
    args = []
    if lex.peek() == "(":
        lex.expect("(")
        args.append(_parse_term(lex, table))
        while lex.peek() == ",":
            lex.expect(",")
            args.append(_parse_term(lex, table))
        lex.expect(")")
    pred = table.intern(name, Kind.PREDICATE, len(args))
    return Literal(positive, pred, tuple(args))


def _parse_term(lex, table):
    name = lex.name()
    if name[0].isupper() or name[0] == "_":
        return Term(table.intern(name, Kind.VARIABLE, 0))
    args = []
    if lex.peek() == "(":
        lex.expect("(")
        args.append(_parse_term(lex, table))
        while lex.peek() == ",":
            lex.expect(",")
            args.append(_parse_term(lex, table))
        lex.expect(")")
    kind = Kind.FUNCTION if args else Kind.CONSTANT
    return Term(table.intern(name, kind, len(args)), tuple(args))


def clause_to_tptp(clause):
    role = "negated_conjecture" if clause.role is Role.NEGATED_CONJECTURE else "axiom"
    name = clause.name or f"c{clause.id}"
    body = " | ".join(str(lit) for lit in clause.literals) or "$false"
    return f"cnf({name}, {role}, {body})."


def print_problem(problem):
    return "\n".join(clause_to_tptp(c) for c in problem.clauses) + "\n"


# ---------------------------------------------------------------------------
# Clause -> DAG conversion


class NodeClass(Enum):
    CLAUSE_ROOT = "clause-root"
    NEGATION = "literal-negation"
    PREDICATE = "predicate"
    FUNCTION = "function"
    CONSTANT = "constant"
    VARIABLE = "variable-token"


# edge types: 0 root->literal, 1 negation->atom, 2..9 argument positions 1..8,
# 10 overflow positions
EDGE_ROOT = 0
EDGE_NEG = 1
MAX_ARG_POSITION = 8
N_EDGE_TYPES = 11


def arg_edge_type(position):
    return 1 + position if position <= MAX_ARG_POSITION else 2 + MAX_ARG_POSITION


@dataclass
class FormulaDag:
    """Shared-subtree DAG of a clause.

    nodes: list of (node id, NodeClass, payload) where payload is the symbol
    name for predicates/functions/constants and None for the generic classes.
    edges: (parent id, child id, edge type).  Distinct variables stay distinct
    nodes but all carry the generic variable-token label, so consistent
    renaming yields an isomorphic, identically labeled DAG.
    """
    nodes: list
    edges: list
    root: int

    def children(self, node_id):
        return [(c, t) for p, c, t in self.edges if p == node_id]


def clause_to_dag(clause):
    nodes, edges = [], []
    memo = {}

    def mk(node_class, payload):
        nodes.append((len(nodes), node_class, payload))
        return len(nodes) - 1

    def term_node(t):
        if t.is_variable:
            key = ("var", t.symbol.id)
            if key not in memo:
                memo[key] = mk(NodeClass.VARIABLE, None)
            return memo[key]
        child_ids = tuple(term_node(a) for a in t.args)
        key = ("app", t.symbol.id, child_ids)
        if key not in memo:
            cls = NodeClass.FUNCTION if t.args else NodeClass.CONSTANT
            nid = mk(cls, t.symbol.name)
            memo[key] = nid
            for pos, cid in enumerate(child_ids, start=1):
                edges.append((nid, cid, arg_edge_type(pos)))
        return memo[key]

    def literal_node(lit):
        child_ids = tuple(term_node(a) for a in lit.args)
        akey = ("atom", lit.predicate.id, child_ids)
        if akey not in memo:
            nid = mk(NodeClass.PREDICATE, lit.predicate.name)
            memo[akey] = nid
            for pos, cid in enumerate(child_ids, start=1):
                edges.append((nid, cid, arg_edge_type(pos)))
        atom_id = memo[akey]
        if lit.positive:
            return atom_id
        nkey = ("neg", atom_id)
        if nkey not in memo:
            nid = mk(NodeClass.NEGATION, None)
            memo[nkey] = nid
            edges.append((nid, atom_id, EDGE_NEG))
        return memo[nkey]

    root = mk(NodeClass.CLAUSE_ROOT, None)
    for lit in clause.literals:
        edges.append((root, literal_node(lit), EDGE_ROOT))
    return FormulaDag(nodes, edges, root)
