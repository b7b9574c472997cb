import hashlib

import pytest
from fastapi.testclient import TestClient

from storygen.service import create_app

from _helpers import TINY_SENTS as SENTS, tiny_bundle


@pytest.fixture()
def client():
    app = create_app(tiny_bundle(), checkpoint_id="tiny")
    with TestClient(app) as c:
        yield c


def create(client, seed=0, checkpoint=None):
    body = {"seed": seed}
    if checkpoint is not None:
        body["checkpoint"] = checkpoint
    r = client.post("/sessions", json=body)
    assert r.status_code == 200, r.text
    return r.json()["id"]


def extend(client, sid, sentence):
    return client.post(f"/sessions/{sid}/frames", json={"sentence": sentence})


def hashes(client, sid):
    frames = client.get(f"/sessions/{sid}").json()["frames"]
    return [hashlib.sha256(f["image_base64"].encode()).hexdigest() for f in frames]


class TestSessions:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "checkpoint": "tiny"}

    def test_create_distinct_ids(self, client):
        assert create(client) != create(client)

    def test_unknown_checkpoint_rejected(self, client):
        r = client.post("/sessions", json={"seed": 0, "checkpoint": "nope"})
        assert r.status_code == 404
        blob = r.json()
        assert blob["code"] == "unknown_checkpoint"
        assert "nope" in blob["message"]

    def test_fresh_session_empty(self, client):
        sid = create(client)
        blob = client.get(f"/sessions/{sid}").json()
        assert blob["length"] == 0
        assert blob["frames"] == []
        assert blob["parent"] is None

    def test_unknown_session(self, client):
        r = client.get("/sessions/nothere")
        assert r.status_code == 404
        assert r.json()["code"] == "unknown_session"
        r = extend(client, "nothere", SENTS[0])
        assert r.status_code == 404


class TestExtend:
    def test_sequential_indices(self, client):
        sid = create(client)
        r0 = extend(client, sid, SENTS[0])
        r1 = extend(client, sid, SENTS[1])
        assert r0.json()["index"] == 0
        assert r1.json()["index"] == 1
        blob = client.get(f"/sessions/{sid}").json()
        assert blob["length"] == 2
        assert [f["sentence"] for f in blob["frames"]] == SENTS[:2]
        assert [f["index"] for f in blob["frames"]] == [0, 1]

    def test_empty_sentence_rejected(self, client):
        sid = create(client)
        r = extend(client, sid, "   ")
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_sentence"

    def test_same_seed_reproducible(self, client):
        a, b = create(client, seed=7), create(client, seed=7)
        fa = extend(client, a, SENTS[0]).json()
        fb = extend(client, b, SENTS[0]).json()
        assert fa["image_base64"] == fb["image_base64"]
        c = create(client, seed=8)
        fc = extend(client, c, SENTS[0]).json()
        assert fc["image_base64"] != fa["image_base64"]

    def test_busy_session_conflicts(self, client):
        sid = create(client)
        record = client.app.state.service.records[sid]
        assert record.lock.acquire(blocking=False)
        try:
            r = extend(client, sid, SENTS[0])
            assert r.status_code == 409
            assert r.json()["code"] == "busy"
        finally:
            record.lock.release()
        assert extend(client, sid, SENTS[0]).status_code == 200


class TestBranch:
    def test_branch_at_zero_empty(self, client):
        sid = create(client)
        extend(client, sid, SENTS[0])
        r = client.post(f"/sessions/{sid}/branch", json={"at": 0})
        child = r.json()["id"]
        blob = client.get(f"/sessions/{child}").json()
        assert blob["length"] == 0
        assert blob["parent"] == {"id": sid, "at": 0}

    def test_branch_full_copy(self, client):
        sid = create(client)
        extend(client, sid, SENTS[0])
        extend(client, sid, SENTS[1])
        child = client.post(f"/sessions/{sid}/branch", json={"at": 2}).json()["id"]
        assert hashes(client, child) == hashes(client, sid)

    def test_out_of_range_rejected(self, client):
        sid = create(client)
        extend(client, sid, SENTS[0])
        r = client.post(f"/sessions/{sid}/branch", json={"at": 5})
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_branch_point"
        assert client.post(f"/sessions/{sid}/branch", json={"at": -1}).status_code == 400

    def test_divergent_suffixes_shared_prefix(self, client):
        """Parent and child keep byte-identical prefixes after divergence."""
        sid = create(client, seed=3)
        extend(client, sid, SENTS[0])
        extend(client, sid, SENTS[1])
        before = hashes(client, sid)

        child = client.post(f"/sessions/{sid}/branch", json={"at": 2}).json()["id"]
        extend(client, sid, SENTS[2])
        extend(client, child, SENTS[3])

        parent_h = hashes(client, sid)
        child_h = hashes(client, child)
        assert parent_h[:2] == before
        assert child_h[:2] == before
        assert parent_h[2] != child_h[2]

    def test_same_sentence_after_branch_reproduces(self, client):
        sid = create(client, seed=3)
        extend(client, sid, SENTS[0])
        child = client.post(f"/sessions/{sid}/branch", json={"at": 1}).json()["id"]
        fp = extend(client, sid, SENTS[1]).json()
        fc = extend(client, child, SENTS[1]).json()
        assert fp["image_base64"] == fc["image_base64"]


class TestSnapshots:
    def test_sessions_survive_restart(self, tmp_path):
        bundle = tiny_bundle()
        with TestClient(create_app(bundle, "tiny", tmp_path)) as c:
            sid = create(c, seed=5)
            extend(c, sid, SENTS[0])
            extend(c, sid, SENTS[1])
            want = hashes(c, sid)
        with TestClient(create_app(bundle, "tiny", tmp_path)) as c:
            assert hashes(c, sid) == want
            r = extend(c, sid, SENTS[2])
            assert r.status_code == 200
            assert r.json()["index"] == 2

    def test_stale_snapshots_skipped(self, tmp_path):
        with TestClient(create_app(tiny_bundle(step=0), "tiny", tmp_path)) as c:
            sid = create(c)
            extend(c, sid, SENTS[0])
        with TestClient(create_app(tiny_bundle(step=1), "tiny", tmp_path)) as c:
            assert c.get(f"/sessions/{sid}").status_code == 404

    def test_png_files_written(self, tmp_path):
        with TestClient(create_app(tiny_bundle(), "tiny", tmp_path)) as c:
            sid = create(c)
            extend(c, sid, SENTS[0])
        assert (tmp_path / f"{sid}.pt").exists()
        assert (tmp_path / f"{sid}_frame_0.png").exists()
