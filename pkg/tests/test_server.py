import json
import socket
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multinav.server import (MAX_LINE, Client, FrozenPolicy, RequestError, Session, infer,
                             parse_request, start_server)
from multinav.seeding import make_rng
from multinav.train import init_train_state, run_curriculum

from conftest import tiny_config

B = 32


@pytest.fixture(scope="module")
def model():
    state = run_curriculum(tiny_config(), max_iterations=1)
    return FrozenPolicy.from_checkpoint(state)


@pytest.fixture(scope="module")
def server(model):
    srv = start_server(model)
    yield srv
    srv.shutdown()
    srv.server_close()


def random_request(rng):
    return (rng.uniform(0, 4, (3, B)).tolist(), [float(rng.uniform(0, 8)), float(rng.uniform(-3, 3))],
            [float(rng.uniform(0, 1)), float(rng.uniform(-1, 1))])


def test_tcp_matches_in_process(model, server):
    rng = np.random.default_rng(0)
    with Client("127.0.0.1", server.port) as c:
        for _ in range(200):
            scan, goal, vel = random_request(rng)
            reply = c.request(scan, goal, vel)
            assert (reply["v"], reply["w"]) == infer(model, scan, goal, vel)
            assert 0 <= reply["v"] <= 1 and -1 <= reply["w"] <= 1


def test_seed_handshake_makes_sampling_reproducible(model, server):
    scan, goal, vel = random_request(np.random.default_rng(1))
    replies = []
    for _ in range(2):
        with Client("127.0.0.1", server.port) as c:
            assert c.send_raw(b'{"seed": 17}') == {"ok": True, "seed": 17}
            replies.append([c.request(scan, goal, vel, deterministic=False) for _ in range(3)])
    assert replies[0] == replies[1]
    rng = make_rng(17)
    expected = [infer(model, scan, goal, vel, False, rng) for _ in range(3)]
    assert [(r["v"], r["w"]) for r in replies[0]] == expected


@pytest.mark.parametrize("line, code", [
    (b"not json", "parse"),
    (b"[1, 2]", "parse"),
    (b"\xff\xfe", "parse"),
    (b'{"goal": [1, 0], "vel": [0, 0]}', "bad_request"),
    (b'{"scan": [[1]], "goal": [1, 0], "vel": [0, 0]}', "bad_request"),
    (b'{"scan": [[1], [1], [1]], "goal": [1, 0], "vel": [0, 0]}', "beam_mismatch"),
    (json.dumps({"scan": [[1.0] * B] * 3, "goal": [1, "x"], "vel": [0, 0]}).encode(), "bad_request"),
    (json.dumps({"scan": [[1.0] * B] * 3, "goal": [1, 0], "vel": [0, 0],
                 "deterministic": "yes"}).encode(), "bad_request"),
    (b'{"seed": -1}', "bad_request"),
    (b'{"seed": true}', "bad_request"),
    (b"[" * 100000, "parse"),
])
def test_error_codes(model, line, code):
    reply = Session(model).handle(line)
    assert reply["error"] == code and reply["msg"]


def test_non_finite_rejected(model):
    with pytest.raises(RequestError) as exc:
        parse_request(b'{"scan": [[NaN]], "goal": [1, 0], "vel": [0, 0]}', 1)
    assert exc.value.code == "bad_request"


def test_too_long_line_then_connection_survives(model, server):
    with Client("127.0.0.1", server.port) as c:
        reply = c.send_raw(b"x" * (MAX_LINE + 10))
        assert reply["error"] == "too_long"
        scan, goal, vel = random_request(np.random.default_rng(2))
        assert "v" in c.request(scan, goal, vel)


@given(st.binary(max_size=300))
@settings(max_examples=300)
def test_session_never_raises(model, blob):
    reply = Session(model).handle(blob)
    assert isinstance(reply, dict) and ("error" in reply or "v" in reply or "ok" in reply)
    json.dumps(reply)


def test_concurrent_clients(model, server):
    results = {}

    def worker(k):
        rng = np.random.default_rng(k)
        with Client("127.0.0.1", server.port) as c:
            results[k] = all((c.request(*req)["v"], c.request(*req)["w"]) == infer(model, *req)
                             for req in (random_request(rng) for _ in range(20)))

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {0: True, 1: True, 2: True, 3: True}


def test_abrupt_disconnect_does_not_kill_server(server):
    s = socket.create_connection(("127.0.0.1", server.port))
    s.sendall(b'{"scan": [')
    s.close()
    with Client("127.0.0.1", server.port) as c:
        assert c.send_raw(b"{}")["error"] == "bad_request"


def test_model_is_read_only(model):
    with pytest.raises(ValueError):
        model.policy["out.w"][0, 0] = 1.0
