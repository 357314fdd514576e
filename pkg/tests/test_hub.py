"""Data-hub API contract tests over a live HTTP server."""

import json
import threading

import numpy as np
import pytest
import requests

from teleosim.config import ServerConfig
from teleosim.episode import MODE_INLINE, Recorder, parse_episode
from teleosim.hub import start_http
from teleosim.server import TeleopServer
from teleosim.store import EpisodeStore, StoreError, TokenRegistry


def synthetic_episode(rng, n=2, m=1, ticks=5, scene="sort_bolts") -> bytes:
    rec = Recorder(user_id="maker", scene_id=scene, model_hash="feed",
                   n=n, m=m, gripper_count=0, dt=0.005, mode=MODE_INLINE)
    for tick in range(1, ticks + 1):
        rec.append(tick, tick * 0.005, rng.normal(size=n), rng.normal(size=n),
                   np.zeros(0), rng.bytes(700) if tick % 2 else None,
                   0, rng.normal(size=(m, 7)))
    return rec.finalize(ended_us=99)


@pytest.fixture()
def hub(tmp_path):
    config = ServerConfig(stream_port=0, http_port=0, store_dir=tmp_path / "store")
    server = TeleopServer(config)
    server.start()
    httpd = start_http(server, "127.0.0.1", 0)
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    alice = server.tokens.issue("alice")
    bob = server.tokens.issue("bob")
    admin = server.tokens.issue("root", admin=True)
    yield {"server": server, "base": base, "alice": alice, "bob": bob,
           "admin": admin, "store": server.store}
    httpd.shutdown()
    server.stop()


def auth(token):
    return {"Authorization": f"Bearer {token.token}"}


def test_upload_list_fetch_happy_path(hub):
    rng = np.random.default_rng(1)
    data = synthetic_episode(rng)
    r = requests.post(f"{hub['base']}/api/v1/log", data=data,
                      headers=auth(hub["alice"]))
    assert r.status_code == 200
    episode_id = r.json()["episode_id"]

    r = requests.get(f"{hub['base']}/api/v1/get-my-data",
                     headers=auth(hub["alice"]))
    assert r.status_code == 200
    listing = r.json()
    assert [e["episode_id"] for e in listing] == [episode_id]
    assert listing[0]["scene_id"] == "sort_bolts"
    assert listing[0]["size"] == len(data)

    r = requests.get(f"{hub['base']}{listing[0]['url']}",
                     headers=auth(hub["alice"]))
    assert r.status_code == 200
    assert r.content == data  # exact stored bytes
    assert parse_episode(r.content).episode_id == episode_id


def test_listing_is_newest_first(hub):
    rng = np.random.default_rng(2)
    ids = []
    for k in range(3):
        data = synthetic_episode(rng, ticks=3 + k)
        r = requests.post(f"{hub['base']}/api/v1/log", data=data,
                          headers=auth(hub["alice"]))
        ids.append(r.json()["episode_id"])
    listing = requests.get(f"{hub['base']}/api/v1/get-my-data",
                           headers=auth(hub["alice"])).json()
    created = [e["created_at"] for e in listing]
    assert created == sorted(created, reverse=True)
    assert set(e["episode_id"] for e in listing) == set(ids)


def test_new_user_empty_list(hub):
    r = requests.get(f"{hub['base']}/api/v1/get-my-data",
                     headers=auth(hub["bob"]))
    assert r.status_code == 200
    assert r.json() == []


def test_bad_token_401(hub):
    r = requests.get(f"{hub['base']}/api/v1/get-my-data",
                     headers={"Authorization": "Bearer nope"})
    assert r.status_code == 401
    r = requests.get(f"{hub['base']}/api/v1/get-my-data")
    assert r.status_code == 401


def test_revoked_token_401_and_nothing_persisted(hub):
    rng = np.random.default_rng(3)
    hub["server"].tokens.revoke(hub["bob"].token)
    data = synthetic_episode(rng)
    r = requests.post(f"{hub['base']}/api/v1/log", data=data,
                      headers=auth(hub["bob"]))
    assert r.status_code == 401
    assert hub["store"].list_user("bob") == []


def test_cross_user_fetch_403_then_curated_200(hub):
    rng = np.random.default_rng(4)
    data = synthetic_episode(rng)
    episode_id = requests.post(f"{hub['base']}/api/v1/log", data=data,
                               headers=auth(hub["alice"])).json()["episode_id"]
    r = requests.get(f"{hub['base']}/api/v1/episodes/{episode_id}",
                     headers=auth(hub["bob"]))
    assert r.status_code == 403

    # non-admin cannot curate
    r = requests.post(f"{hub['base']}/api/v1/admin/curate/{episode_id}",
                      headers=auth(hub["bob"]))
    assert r.status_code == 403

    r = requests.post(f"{hub['base']}/api/v1/admin/curate/{episode_id}",
                      headers=auth(hub["admin"]))
    assert r.status_code == 200
    r = requests.get(f"{hub['base']}/api/v1/episodes/{episode_id}",
                     headers=auth(hub["bob"]))
    assert r.status_code == 200
    assert r.content == data

    globals_list = requests.get(f"{hub['base']}/api/v1/get-global-data",
                                headers=auth(hub["bob"])).json()
    assert [e["episode_id"] for e in globals_list] == [episode_id]


def test_duplicate_upload_idempotent(hub):
    rng = np.random.default_rng(5)
    data = synthetic_episode(rng)
    first = requests.post(f"{hub['base']}/api/v1/log", data=data,
                          headers=auth(hub["alice"])).json()["episode_id"]
    second = requests.post(f"{hub['base']}/api/v1/log", data=data,
                           headers=auth(hub["alice"])).json()["episode_id"]
    assert first == second
    files = list((hub["store"].users_dir / "alice").glob("*.dxe"))
    assert len(files) == 1


def test_same_id_different_content_409(hub):
    rng = np.random.default_rng(6)
    data = synthetic_episode(rng)
    requests.post(f"{hub['base']}/api/v1/log", data=data,
                  headers=auth(hub["alice"]))
    tampered = data[:-1] + bytes([data[-1] ^ 1])
    r = requests.post(f"{hub['base']}/api/v1/log", data=tampered,
                      headers=auth(hub["alice"]))
    assert r.status_code == 409


def test_malformed_upload_400(hub):
    r = requests.post(f"{hub['base']}/api/v1/log", data=b"garbage",
                      headers=auth(hub["alice"]))
    assert r.status_code == 400


def test_unknown_episode_404(hub):
    r = requests.get(f"{hub['base']}/api/v1/episodes/deadbeef",
                     headers=auth(hub["alice"]))
    assert r.status_code == 404


def test_store_full_507(tmp_path):
    store = EpisodeStore(tmp_path / "tiny", max_bytes=600)
    rng = np.random.default_rng(7)
    data = synthetic_episode(rng)  # several kB
    with pytest.raises(StoreError) as exc:
        store.store_bytes("alice", data)
    assert exc.value.status == 507


def test_manifest_and_sessions_endpoints(hub):
    r = requests.get(f"{hub['base']}/api/v1/manifest")
    assert r.status_code == 200
    manifest = r.json()
    assert set(manifest["models"]) == {"planar1", "planar2", "dualarm7"}
    assert {s["scene_id"] for s in manifest["scenes"]} == \
        {"sort_bolts", "mug_basket"}
    da = manifest["models"]["dualarm7"]
    assert da["dof"] == 16 and len(da["grippers"]) == 2

    r = requests.get(f"{hub['base']}/api/v1/sessions")
    assert r.json() == {"sessions": []}


# ---------------------------------------------------------------------------
# store-level properties
# ---------------------------------------------------------------------------

def test_index_rebuild_equivalence(tmp_path):
    store = EpisodeStore(tmp_path / "store")
    rng = np.random.default_rng(8)
    ids = [store.store_bytes(user, synthetic_episode(rng))
           for user in ("alice", "alice", "bob")]
    store.set_curated(ids[1], True)
    before = {e.episode_id: (e.user_id, e.size, e.digest, e.curated)
              for e in store.entries()}

    (store.index_path).unlink()
    fresh = EpisodeStore(tmp_path / "store")
    after = {e.episode_id: (e.user_id, e.size, e.digest, e.curated)
             for e in fresh.entries()}
    assert before == after


def test_interrupted_write_leaves_consistent_store(tmp_path, monkeypatch):
    store = EpisodeStore(tmp_path / "store")
    rng = np.random.default_rng(9)
    data = synthetic_episode(rng)

    import builtins
    real_open = builtins.open

    class Exploding:
        def __init__(self, fh, blow_after):
            self.fh = fh
            self.remaining = blow_after

        def write(self, b):
            if len(b) > self.remaining:
                self.fh.write(b[:self.remaining])
                raise OSError("disk detached")
            self.remaining -= len(b)
            return self.fh.write(b)

        def __getattr__(self, name):
            return getattr(self.fh, name)

        def __enter__(self):
            return self

        def __exit__(self, *exc):
            self.fh.close()

    for cut in (0, 1, 17, len(data) // 2, len(data) - 1):
        def exploding_open(path, mode="r", *a, **kw):
            fh = real_open(path, mode, *a, **kw)
            if str(path).endswith(".tmp") and "wb" in mode:
                return Exploding(fh, cut)
            return fh

        monkeypatch.setattr(builtins, "open", exploding_open)
        with pytest.raises(OSError):
            store.store_bytes("alice", data)
        monkeypatch.setattr(builtins, "open", real_open)

        assert store.list_user("alice") == []
        assert list((store.users_dir / "alice").glob("*.dxe")) == []
        rebuilt = EpisodeStore(tmp_path / "store")
        assert rebuilt.list_user("alice") == []

    # the store still works after all that abuse
    episode_id = store.store_bytes("alice", data)
    assert store.fetch(episode_id, "alice") == data


def test_round_trip_hundred_random_episodes(tmp_path):
    store = EpisodeStore(tmp_path / "store")
    rng = np.random.default_rng(10)
    for k in range(100):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(0, 5))
        data = synthetic_episode(rng, n=n, m=m, ticks=int(rng.integers(1, 9)))
        episode_id = store.store_bytes("alice", data)
        fetched = store.fetch(episode_id, "alice")
        assert fetched == data
        log = parse_episode(fetched)
        assert log.n == n and log.m == m


def test_attribution_is_exclusive_under_interleaving(tmp_path):
    store = EpisodeStore(tmp_path / "store")
    rng = np.random.default_rng(11)
    owners = {}
    for k in range(40):
        user = "alice" if rng.integers(2) else "bob"
        episode_id = store.store_bytes(user, synthetic_episode(rng,
                                                               ticks=1 + k % 4))
        owners[episode_id] = user
    alice_ids = {e.episode_id for e in store.list_user("alice")}
    bob_ids = {e.episode_id for e in store.list_user("bob")}
    assert alice_ids.isdisjoint(bob_ids)
    assert alice_ids | bob_ids == set(owners)
    for episode_id, user in owners.items():
        other = "bob" if user == "alice" else "alice"
        with pytest.raises(StoreError) as exc:
            store.fetch(episode_id, other)
        assert exc.value.status == 403


def test_concurrent_uploads_safe(tmp_path):
    store = EpisodeStore(tmp_path / "store")
    rng = np.random.default_rng(12)
    payloads = [synthetic_episode(rng) for _ in range(16)]
    errors = []

    def worker(i):
        try:
            store.store_bytes(f"user{i % 4}", payloads[i])
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(store.entries()) == 16
