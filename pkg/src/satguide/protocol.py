"""Line-delimited JSON guidance protocol.

The guidance side holds the policy: an external saturation reasoner drives
the loop by sending `init`, then alternating `state` (answered with
`select`) and optional `executed` notifications, ending with `done`.
Clauses travel as TPTP text; the guidance side re-parses and vectorizes
them, so the protocol stays prover-agnostic.  Sessions are isolated by id.
"""

from __future__ import annotations

import json
import socket
import socketserver
import sys
from types import SimpleNamespace

import numpy as np

from . import engine, fol
from .engine import Action, InferenceRule
from .policy import NeuralPolicy

PROTOCOL_VERSION = 1


class GuidanceSession:
    """Per-session clause store and policy state."""

    def __init__(self, session_id, make_policy, seed, mode):
        self.id = session_id
        self.policy = make_policy(mode)
        self.rng = np.random.default_rng(seed)
        self.symbols = fol.SymbolTable()
        self.clauses = {}        # wire clause id -> Clause
        self.conjecture = {}     # tptp text -> Clause

    def _parse_clause(self, text, clause_id, age, sos, role=fol.Role.AXIOM):
        wrapped = text if text.startswith("cnf(") else f"cnf(wire, axiom, {text})."
        problem = fol.parse_tptp(wrapped, problem_name="wire")
        src = problem.clauses[0]
        # re-intern symbols into the session table for stable feature hashing
        lits = tuple(self._reintern_literal(lit) for lit in src.literals)
        return fol.Clause(clause_id, lits, age=age,
                          role=role, sos=sos)

    def _reintern_literal(self, lit):
        pred = self.symbols.intern(lit.predicate.name, fol.Kind.PREDICATE,
                                   lit.predicate.arity)
        return fol.Literal(lit.positive, pred,
                           tuple(self._reintern_term(a) for a in lit.args))

    def _reintern_term(self, t):
        sym = self.symbols.intern(t.symbol.name, t.symbol.kind, t.symbol.arity)
        return fol.Term(sym, tuple(self._reintern_term(a) for a in t.args))

    def clause_from_wire(self, spec):
        cid = spec["clause_id"]
        if cid not in self.clauses:
            self.clauses[cid] = self._parse_clause(
                spec["clause_tptp"], cid, spec.get("age", 0),
                spec.get("sos", False))
        return self.clauses[cid]

    def conjecture_clause(self, text, index):
        if text not in self.conjecture:
            self.conjecture[text] = self._parse_clause(
                text, -(index + 1), 0, True, role=fol.Role.NEGATED_CONJECTURE)
        return self.conjecture[text]

    def select(self, msg):
        actions = msg.get("actions", [])
        if not actions:
            raise ProtocolError("no actions")
        wire_actions = []
        for spec in actions:
            clause = self.clause_from_wire(spec)
            rule = InferenceRule(spec["rule"])
            wire_actions.append(Action(rule, clause))
        processed = [self.clauses[cid] for cid in msg.get("processed", [])
                     if cid in self.clauses]
        conjecture = [self.conjecture_clause(text, i)
                      for i, text in enumerate(msg.get("conjecture", []))]
        state = SimpleNamespace(t=msg.get("step", 0), actions=wire_actions,
                                processed=processed, conjecture=conjecture)
        index, _ = self.policy(state, self.rng)
        return index


class ProtocolError(ValueError):
    pass


class GuidanceServer:
    """Message-level protocol handler, transport-agnostic."""

    def __init__(self, make_policy):
        self.make_policy = make_policy
        self.sessions = {}

    def handle_line(self, line):
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"type": "error", "message": f"malformed message: {exc}"}
        try:
            return self.handle(msg)
        except ProtocolError as exc:
            return {"type": "error", "session": msg.get("session"),
                    "message": str(exc)}
        except Exception as exc:  # malformed content; session preserved
            return {"type": "error", "session": msg.get("session"),
                    "message": f"{type(exc).__name__}: {exc}"}

    def handle(self, msg):
        mtype = msg.get("type")
        session_id = msg.get("session")
        if mtype == "init":
            version = msg.get("version")
            if version != PROTOCOL_VERSION:
                raise ProtocolError(
                    f"protocol version mismatch: got {version}, "
                    f"want {PROTOCOL_VERSION}")
            self.sessions[session_id] = GuidanceSession(
                session_id, self.make_policy, msg.get("seed", 0),
                msg.get("mode", "eval"))
            return {"type": "ok", "session": session_id}
        if session_id not in self.sessions:
            raise ProtocolError(f"unknown session '{session_id}'")
        if mtype == "state":
            index = self.sessions[session_id].select(msg)
            return {"type": "select", "session": session_id,
                    "action_index": index}
        if mtype == "executed":
            return {"type": "ok", "session": session_id}
        if mtype == "done":
            del self.sessions[session_id]
            return {"type": "ok", "session": session_id}
        raise ProtocolError(f"unknown message type '{mtype}'")


def serve_stream(server, reader, writer):
    """Blocking loop over newline-delimited JSON on text streams."""
    for line in reader:
        line = line.strip()
        if not line:
            continue
        reply = server.handle_line(line)
        writer.write(json.dumps(reply) + "\n")
        writer.flush()


class _TCPHandler(socketserver.StreamRequestHandler):
    def handle(self):
        reader = (line.decode("utf-8") for line in self.rfile)
        writer = _BytesWriter(self.wfile)
        serve_stream(self.server.guidance, reader, writer)


class _BytesWriter:
    def __init__(self, raw):
        self.raw = raw

    def write(self, text):
        self.raw.write(text.encode("utf-8"))

    def flush(self):
        self.raw.flush()


def serve_tcp(host, port, make_policy):
    srv = socketserver.ThreadingTCPServer((host, port), _TCPHandler,
                                          bind_and_activate=False)
    srv.daemon_threads = True
    srv.allow_reuse_address = True
    srv.server_bind()
    srv.server_activate()
    srv.guidance = GuidanceServer(make_policy)
    return srv


# ---------------------------------------------------------------------------
# Reasoner side: drive the built-in engine through the protocol


class ProtocolClient:
    """Engine guidance callback that asks a protocol peer for selections."""

    def __init__(self, send, recv, session_id, seed, mode="eval",
                 problem_name=None):
        self.send = send
        self.recv = recv
        self.session = session_id
        reply = self._roundtrip({"type": "init", "session": session_id,
                                 "version": PROTOCOL_VERSION, "seed": seed,
                                 "mode": mode, "problem": problem_name})
        if reply.get("type") != "ok":
            raise ProtocolError(f"init rejected: {reply}")

    def _roundtrip(self, msg):
        self.send(json.dumps(msg) + "\n")
        return json.loads(self.recv())

    def __call__(self, state, rng):
        msg = {
            "type": "state",
            "session": self.session,
            "step": state.t,
            "status": state.status.value,
            "actions": [{
                "rule": a.rule.value,
                "clause_tptp": str(a.clause) if a.clause.literals else "$false",
                "clause_id": a.clause.id,
                "age": a.clause.age,
                "sos": a.clause.sos,
            } for a in state.actions],
            "processed": [c.id for c in state.processed],
            "conjecture": [str(c) for c in state.conjecture],
        }
        reply = self._roundtrip(msg)
        if reply.get("type") != "select":
            raise ProtocolError(f"unexpected reply: {reply}")
        return reply["action_index"], None

    def finish(self, status):
        self._roundtrip({"type": "done", "session": self.session,
                         "status": status.value})


def run_episode_via_protocol(problem, send, recv, limits=None, seed=0,
                             mode="eval", session_id="s0"):
    """Run the built-in engine with selections supplied over the protocol."""
    client = ProtocolClient(send, recv, session_id, seed,
                            mode=mode, problem_name=problem.name)
    trace = engine.run_episode(problem, client, limits=limits, seed=seed)
    client.finish(trace.status)
    return trace


def loopback_pair(make_policy):
    """In-process send/recv handles wired to a GuidanceServer."""
    server = GuidanceServer(make_policy)
    replies = []

    def send(line):
        replies.append(json.dumps(server.handle_line(line)))

    def recv():
        return replies.pop(0)

    return send, recv
