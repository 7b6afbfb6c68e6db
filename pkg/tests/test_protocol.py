"""Guidance protocol: message handling, sessions, and loopback equivalence."""

import json
import socket
import threading

import numpy as np
import pytest

from satguide import engine, protocol
from satguide.engine import Limits
from satguide.fol import parse_tptp
from satguide.policy import NeuralPolicy, PolicyConfig, init_params
from satguide.protocol import (GuidanceServer, PROTOCOL_VERSION,
                               loopback_pair, run_episode_via_protocol)
from satguide.vectorize import VectorizerConfig

VEC = VectorizerConfig(n_age=6, chain_dim=16, walk_lengths=(1,), walk_dim=8)
POL = PolicyConfig(embed_dim=5, dropout=0.0)


def problem():
    return parse_tptp(
        "cnf(a, axiom, p(c)).\n"
        "cnf(r, axiom, ~p(X) | q(X)).\n"
        "cnf(g, negated_conjecture, ~q(c)).", problem_name="t")


def make_policy_factory(seed=0):
    params = init_params(VEC.feature_length, POL, VEC,
                         np.random.default_rng(seed))
    return lambda mode: NeuralPolicy(params, POL, VEC, mode=mode), params


class TestMessageHandling:
    def setup_method(self):
        self.server = GuidanceServer(make_policy_factory()[0])

    def init_msg(self, session="s1", version=PROTOCOL_VERSION):
        return {"type": "init", "session": session, "version": version,
                "seed": 0, "mode": "eval"}

    def test_init_ok(self):
        reply = self.server.handle(self.init_msg())
        assert reply == {"type": "ok", "session": "s1"}

    def test_version_mismatch_rejected(self):
        reply = self.server.handle_line(
            json.dumps(self.init_msg(version=99)))
        assert reply["type"] == "error"
        assert "version" in reply["message"]
        assert "s1" not in self.server.sessions

    def test_malformed_json_is_error_not_crash(self):
        reply = self.server.handle_line("{nope")
        assert reply["type"] == "error"
        assert "malformed" in reply["message"]

    def test_unknown_session_rejected(self):
        reply = self.server.handle_line(
            json.dumps({"type": "state", "session": "ghost", "actions": []}))
        assert reply["type"] == "error"

    def test_unknown_type_rejected(self):
        self.server.handle(self.init_msg())
        reply = self.server.handle_line(
            json.dumps({"type": "frobnicate", "session": "s1"}))
        assert reply["type"] == "error"

    def test_malformed_state_preserves_session(self):
        self.server.handle(self.init_msg())
        reply = self.server.handle_line(json.dumps(
            {"type": "state", "session": "s1",
             "actions": [{"rule": "binary_resolution"}]}))  # missing fields
        assert reply["type"] == "error"
        assert "s1" in self.server.sessions

    def test_select_returns_valid_index(self):
        self.server.handle(self.init_msg())
        reply = self.server.handle(
            {"type": "state", "session": "s1", "step": 0,
             "actions": [
                 {"rule": "binary_resolution", "clause_tptp": "p(c)",
                  "clause_id": 0, "age": 0, "sos": False},
                 {"rule": "factoring", "clause_tptp": "~p(X) | q(X)",
                  "clause_id": 1, "age": 0, "sos": False},
             ],
             "processed": [], "conjecture": ["~q(c)"]})
        assert reply["type"] == "select"
        assert reply["action_index"] in (0, 1)

    def test_done_removes_session(self):
        self.server.handle(self.init_msg())
        self.server.handle({"type": "done", "session": "s1"})
        assert "s1" not in self.server.sessions

    def test_sessions_are_isolated(self):
        self.server.handle(self.init_msg("a"))
        self.server.handle(self.init_msg("b"))
        assert self.server.sessions["a"] is not self.server.sessions["b"]
        self.server.handle({"type": "done", "session": "a"})
        assert "b" in self.server.sessions


class TestLoopbackEquivalence:
    def test_trajectory_identical_to_in_process(self):
        make_policy, params = make_policy_factory()
        in_proc = engine.run_episode(problem(), make_policy("eval"),
                                     limits=Limits(max_steps=50), seed=3)
        send, recv = loopback_pair(make_policy)
        via = run_episode_via_protocol(problem(), send, recv,
                                       limits=Limits(max_steps=50), seed=3)
        assert via.status == in_proc.status
        assert [s.chosen for s in via.steps] == \
               [s.chosen for s in in_proc.steps]
        assert [s.derived_ids for s in via.steps] == \
               [s.derived_ids for s in in_proc.steps]

    def test_train_mode_sampling_matches_with_same_seed(self):
        make_policy, _ = make_policy_factory()
        in_proc = engine.run_episode(problem(), make_policy("train"),
                                     limits=Limits(max_steps=50), seed=11)
        send, recv = loopback_pair(make_policy)
        via = run_episode_via_protocol(problem(), send, recv, mode="train",
                                       limits=Limits(max_steps=50), seed=11)
        assert [s.chosen for s in via.steps] == \
               [s.chosen for s in in_proc.steps]

    def test_clause_reparse_preserves_features(self):
        # the guidance side vectorizes from re-parsed TPTP text; its feature
        # vector must match the reasoner side's
        from satguide.vectorize import sparse_vector
        make_policy, _ = make_policy_factory()
        server = GuidanceServer(make_policy)
        server.handle({"type": "init", "session": "s", "seed": 0,
                       "version": PROTOCOL_VERSION, "mode": "eval"})
        session = server.sessions["s"]
        original = problem().clauses[1]
        wire = session.clause_from_wire(
            {"clause_tptp": str(original), "clause_id": original.id,
             "age": original.age, "sos": original.sos})
        assert np.array_equal(sparse_vector(original, VEC),
                              sparse_vector(wire, VEC))


class TestTcpTransport:
    def test_round_trip_over_socket(self):
        make_policy, _ = make_policy_factory()
        srv = protocol.serve_tcp("127.0.0.1", 0, make_policy)
        host, port = srv.server_address
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        try:
            sock = socket.create_connection((host, port))
            reader = sock.makefile("r", encoding="utf-8")
            writer = sock.makefile("w", encoding="utf-8")

            def send(line):
                writer.write(line)
                writer.flush()

            trace = run_episode_via_protocol(
                problem(), send, reader.readline,
                limits=Limits(max_steps=50), seed=3)
            assert trace.status is engine.Status.REFUTED
            reader.close()
            writer.close()
            sock.close()
        finally:
            srv.shutdown()
            srv.server_close()
