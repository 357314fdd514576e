"""Acceptance criteria, one test per criterion.

Each test prints `ACCEPTANCE PASS|FAIL: <criterion>` and enforces the
criterion's runtime budget. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import functools
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from teleosim.config import ServerConfig
from teleosim.geometry import Transform
from teleosim.hands import TargetSet, hand_template
from teleosim.ik import IkParams, integrate, solve_velocity, velocity_bounds
from teleosim.kinematics import forward_kinematics, min_self_distance, site_jacobian
from teleosim.qp import solve_qp
from teleosim.session import Session
from teleosim.synth import parse_script, script_events
from teleosim.wire import packet_size_report

import oracles
from conftest import ASSETS, GOLDEN, load_robot, load_scene

CLI = [sys.executable, "-m", "teleosim.cli"]


def criterion(name: str, budget_s: float):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE FAIL: {name}")
                raise
            elapsed = time.monotonic() - start
            assert elapsed < budget_s, \
                f"{name}: {elapsed:.1f}s exceeded the {budget_s:.0f}s budget"
            print(f"\nACCEPTANCE PASS: {name} ({elapsed:.1f}s)")
        return run
    return wrap


# ---------------------------------------------------------------------------
# Table reproduction
# ---------------------------------------------------------------------------

@criterion("Table I packet-size reproduction (exact)", 10.0)
def test_table_one_reproduction():
    # zero-tolerance arithmetic, checked in-process and through the CLI
    t0 = time.monotonic()
    r = packet_size_report(58, 50)
    assert r["tracking"] == 700
    assert r["tracking_with_head"] == 728
    assert r["state"] == 1632
    assert r["stereo_baseline"] == 1_843_200
    assert r["ratio"] >= 1000
    assert time.monotonic() - t0 < 1.0  # the report itself is instant

    out = subprocess.run(CLI + ["report", "packet-sizes", "--n", "58",
                               "--m", "50"],
                         capture_output=True, text=True, timeout=30)
    assert out.returncode == 0
    text = out.stdout.replace(",", "")
    for token in ("700", "728", "1632", "1843200"):
        assert token in text, f"missing {token} in report:\n{out.stdout}"
    ratio = int(re.search(r"ratio: (\d+)x", text).group(1))
    assert ratio >= 1000


def _free_port():
    import socket
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _serve(tmp_path, name):
    stream, http = _free_port(), _free_port()
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(f"stream_port {stream}\nhttp_port {http}\n"
                   f"store_dir {tmp_path / (name + '_store')}\n")
    proc = subprocess.Popen(CLI + ["serve", "--config", str(cfg)],
                            stdout=subprocess.PIPE,
                            stderr=subprocess.STDOUT, text=True)
    import requests
    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        try:
            requests.get(f"http://127.0.0.1:{http}/api/v1/manifest", timeout=1)
            return proc, stream, http
        except requests.RequestException:
            assert proc.poll() is None, proc.stdout.read()
            time.sleep(0.1)
    raise RuntimeError("server did not come up")


@criterion("Table II latency-profile shape at desk scale", 30.0)
def test_table_two_shape(tmp_path):
    proc, stream, http = _serve(tmp_path, "t2")
    try:
        out = subprocess.run(
            CLI + ["report", "latency", "--addr", f"127.0.0.1:{stream}",
                   "--http-port", str(http), "--ticks", "1000"],
            capture_output=True, text=True, timeout=120)
        assert out.returncode == 0, out.stderr
        for row in ("Packet Travel Time", "Simulation Step", "Total"):
            assert row in out.stdout
        step_mean = float(re.search(
            r"Simulation Step\s+mean\s+([\d.]+) ms", out.stdout).group(1))
        total_mean = float(re.search(
            r"Total\s+mean\s+([\d.]+) ms", out.stdout).group(1))
        assert step_mean <= 5.0, f"mean step {step_mean} ms"
        assert total_mean <= 10.0, f"mean loopback total {total_mean} ms"
    finally:
        proc.terminate()
        proc.wait(timeout=10)


# ---------------------------------------------------------------------------
# Solver correctness
# ---------------------------------------------------------------------------

@criterion("Velocity solver correctness (closed form, oracle QPs, "
           "convergence, bounds)", 60.0)
def test_velocity_solver_correctness():
    planar1 = load_robot("planar1")
    planar2 = load_robot("planar2")
    dualarm7 = load_robot("dualarm7")

    # (a) 1-DoF closed form within 1e-4
    theta = 0.01
    params = IkParams(alpha=10.0, damping=1e-6)
    cmd = solve_velocity(planar1, np.zeros(1),
                         TargetSet([("tip", np.array([np.cos(theta),
                                                      np.sin(theta), 0.0]))]),
                         params)
    assert abs(cmd.v[0] - params.alpha * theta / (1 + params.damping)) <= 1e-4

    # (b) 30 random box-QP instances against independent oracles
    rng = np.random.default_rng(42)
    for trial in range(30):
        n = int(rng.integers(1, 17))
        k = int(rng.integers(0, 5))
        m = rng.normal(size=(n, n))
        H = m @ m.T + 0.5 * n * np.eye(n)
        g = rng.normal(size=n) * 2
        lo = -rng.uniform(0.1, 2.0, size=n)
        hi = rng.uniform(0.1, 2.0, size=n)
        A = b = None
        if k:
            A = rng.normal(size=(k, n))
            b = A @ rng.uniform(lo, hi) - rng.uniform(0.01, 0.5, size=k)
        res = solve_qp(H, g, lo, hi, A, b)
        ref = (oracles.enumerate_qp(H, g, lo, hi, A, b) if n <= 7
               else oracles.cvxpy_qp(H, g, lo, hi, A, b))
        gap = oracles.qp_objective(H, g, res.x) - oracles.qp_objective(H, g, ref)
        assert gap <= 1e-6, f"trial {trial}: gap {gap}"
        assert np.all(res.x >= lo - 1e-8) and np.all(res.x <= hi + 1e-8)
        if A is not None:
            assert np.all(A @ res.x >= b - 1e-8)

    # (c) planar2 converges to <= 1e-3 m within 2 s of simulated time
    params = IkParams(dt=0.005)
    q = np.array([0.3, 0.2])
    target = TargetSet([("tip", np.array([0.5, 1.0, 0.0]))])
    for _ in range(400):
        q = integrate(planar2, q, solve_velocity(planar2, q, target, params).v,
                      params.dt)
    tip = forward_kinematics(planar2, q).site_position("tip")
    assert np.linalg.norm(tip - target.entries[0][1]) <= 1e-3

    # (d) hard bound compliance over 1e5 random solves
    rng = np.random.default_rng(7)
    cases = [(planar1, ["tip"], 60_000), (planar2, ["tip", "mid"], 36_000),
             (dualarm7, ["l_thumb_tip", "r_index_tip"], 4_000)]
    total = 0
    for model, sites, count in cases:
        lo, hi = model.joint_limits()
        for _ in range(count):
            q = rng.uniform(lo, hi)
            targets = TargetSet([(s, rng.uniform(-1.5, 1.5, size=3))
                                 for s in sites])
            cmd = solve_velocity(model, q, targets, params)
            v_lo, v_hi = velocity_bounds(model, q, params)
            if not (np.all(cmd.v >= v_lo) and np.all(cmd.v <= v_hi)):
                raise AssertionError(
                    f"bound violation on {model.name} at q={q}: {cmd.v}")
            total += 1
    assert total == 100_000


@criterion("Kinematics properties (Jacobian FD, FK oracle)", 10.0)
def test_kinematics_properties():
    rng = np.random.default_rng(19)
    for name, sites in (("planar2", ["mid", "tip"]),
                        ("dualarm7", ["l_thumb_tip", "r_index_tip"])):
        model = load_robot(name)
        lo, hi = model.joint_limits()
        for _ in range(50):
            q = rng.uniform(lo, hi)
            for site in sites:
                fd = oracles.fd_jacobian(model, q, site)
                assert np.max(np.abs(site_jacobian(model, q, site) - fd)) <= 1e-5
            for site in sites:
                got = forward_kinematics(model, q).site_position(site)
                want = oracles.fk_site_position(model, q, site)
                assert np.max(np.abs(got - want)) <= 1e-9


@criterion("Safety invariant on the near-collision trajectory", 10.0)
def test_safety_invariant():
    scene = load_scene("sort_bolts")
    model = load_robot("dualarm7")
    session = Session(1, scene, model, Transform.identity(), IkParams(), seed=3)
    directives = parse_script((ASSETS / "near_collision.script").read_text())
    events = script_events(directives)

    d_margin = session.ik_params.d_margin
    assert min_self_distance(model, session.state.q).min_distance >= d_margin

    from teleosim.episode import STATUS_CODE
    from teleosim.wire import Header, KIND_TRACKING, encode_tracking

    seq = 0
    tick_t = 0.0
    min_seen = np.inf
    violations = []
    events_iter = iter(events)
    pending = next(events_iter, None)
    while pending is not None or tick_t < events[-1].t:
        while pending is not None and pending.t <= tick_t:
            if pending.frame_wrist is not None:
                seq += 1
                frame = hand_template(pending.frame_wrist, pending.grip,
                                      timestamp_us=int(tick_t * 1e6) + 1)
                session.feed_tracking(
                    Header(KIND_TRACKING, 1, seq, frame.timestamp_us),
                    encode_tracking(frame), recv_us=frame.timestamp_us + 100)
            pending = next(events_iter, None)
        session.step()
        tick_t = session.state.sim_time
        status = session.recorder._chunks[-1][-1]
        d = min_self_distance(model, session.state.q).min_distance
        min_seen = min(min_seen, d)
        if status != STATUS_CODE["infeasible_relaxed"] and d < d_margin - 1e-6:
            violations.append((session.state.tick, d))
    assert not violations, violations[:5]
    # the trajectory genuinely pushed into the constraint
    assert min_seen <= d_margin + 0.02, f"min clearance only {min_seen}"


# ---------------------------------------------------------------------------
# Protocol fidelity
# ---------------------------------------------------------------------------

@criterion("Protocol fidelity (round-trips, goldens, seq ordering)", 10.0)
def test_protocol_fidelity():
    from teleosim.hands import KEYPOINT_COUNT, HandFrame
    from teleosim.session import Mailbox
    from teleosim.wire import (
        Ack, Control, Header, KIND_TRACKING, WireState,
        decode_ack, decode_control, decode_state, decode_tracking,
        encode_ack, encode_control, encode_state, encode_tracking,
    )

    rng = np.random.default_rng(5)

    # tracking: 10k random frames, float32-lossless
    for _ in range(10_000):
        pos = rng.uniform(-2, 2, size=(KEYPOINT_COUNT, 3)) \
            .astype(np.float32).astype(float)
        quat = rng.normal(size=(KEYPOINT_COUNT, 4))
        quat /= np.linalg.norm(quat, axis=1, keepdims=True)
        quat = quat.astype(np.float32).astype(float)
        quat /= np.linalg.norm(quat, axis=1, keepdims=True)
        frame = HandFrame(pos, quat, 1)
        out = decode_tracking(encode_tracking(frame), 1)
        assert np.array_equal(out.positions, pos)

    # state: 10k random payloads
    for _ in range(10_000):
        n, m = int(rng.integers(0, 24)), int(rng.integers(0, 24))
        q = rng.normal(size=n).astype(np.float32).astype(float)
        poses = rng.normal(size=(m, 7)).astype(np.float32).astype(float)
        st = decode_state(encode_state(WireState(q, poses)))
        assert np.array_equal(st.q, q) and st.m == m

    # control/ack: 10k each
    for _ in range(10_000):
        c = Control(int(rng.integers(1, 5)), "x" * int(rng.integers(0, 30)),
                    int(rng.integers(0, 1 << 63)))
        assert decode_control(encode_control(c)) == c
        a = Ack(int(rng.integers(0, 5)), int(rng.integers(0, 2)),
                "y" * int(rng.integers(0, 30)))
        assert decode_ack(encode_ack(a)) == a

    # goldens byte-exact
    sys.path.insert(0, str(GOLDEN.parents[1] / "scripts"))
    from gen_goldens import golden_hand_frame, golden_state
    assert encode_tracking(golden_hand_frame()) == \
        (GOLDEN / "tracking_payload.bin").read_bytes()
    assert encode_state(golden_state()) == \
        (GOLDEN / "state_payload.bin").read_bytes()
    assert encode_control(Control(2, "mug_basket", 7)) == \
        (GOLDEN / "control_payload.bin").read_bytes()

    # out-of-order seq provably dropped (instrumented counter)
    box = Mailbox()
    box.put(Header(KIND_TRACKING, 1, 7, 70), b"new", 70)
    assert not box.put(Header(KIND_TRACKING, 1, 5, 50), b"old", 75)
    assert box.dropped_stale == 1
    assert box.take()[1] == b"new"


# ---------------------------------------------------------------------------
# End-to-end determinism
# ---------------------------------------------------------------------------

@criterion("End-to-end determinism (serve/synth/fetch/replay, twice)", 60.0)
def test_end_to_end_determinism(tmp_path):
    import requests

    for run in ("one", "two"):  # repeated from a clean store
        proc, stream, http = _serve(tmp_path, f"e2e_{run}")
        try:
            out = subprocess.run(
                CLI + ["synth", "--script", str(ASSETS / "pick_place.script"),
                       "--addr", f"127.0.0.1:{stream}"],
                capture_output=True, text=True, timeout=120)
            assert out.returncode == 0, out.stderr
            ids = [l.split()[1] for l in out.stdout.splitlines()
                   if l.startswith("episode ")]
            assert ids

            token = subprocess.run(
                CLI + ["admin", "issue-token", "--user", "operator",
                       "--store", str(tmp_path / f"e2e_{run}_store")],
                capture_output=True, text=True).stdout.strip()
            data = None
            deadline = time.monotonic() + 10
            while time.monotonic() < deadline:
                r = requests.get(
                    f"http://127.0.0.1:{http}/api/v1/episodes/{ids[-1]}",
                    headers={"Authorization": f"Bearer {token}"})
                if r.status_code == 200:
                    data = r.content
                    break
                time.sleep(0.1)
            assert data is not None, "episode never flushed to the store"

            episode_file = tmp_path / f"{run}.dxe"
            episode_file.write_bytes(data)
            rep = subprocess.run(CLI + ["replay", str(episode_file)],
                                 capture_output=True, text=True, timeout=120)
            assert rep.returncode == 0, rep.stdout + rep.stderr
            assert "MATCH" in rep.stdout and "0 diverging" in rep.stdout
        finally:
            proc.terminate()
            proc.wait(timeout=10)


# ---------------------------------------------------------------------------
# Hub API contract
# ---------------------------------------------------------------------------

@criterion("Data-hub API contract", 30.0)
def test_hub_api_contract(tmp_path):
    import requests
    from teleosim.hub import start_http
    from teleosim.server import TeleopServer
    from teleosim.store import EpisodeStore
    from test_hub import synthetic_episode

    config = ServerConfig(stream_port=0, http_port=0,
                          store_dir=tmp_path / "store")
    server = TeleopServer(config)
    server.start()
    httpd = start_http(server, "127.0.0.1", 0)
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    try:
        alice = server.tokens.issue("alice")
        bob = server.tokens.issue("bob")
        admin = server.tokens.issue("root", admin=True)
        ah = {"Authorization": f"Bearer {alice.token}"}
        bh = {"Authorization": f"Bearer {bob.token}"}

        rng = np.random.default_rng(1)
        data = synthetic_episode(rng)
        episode_id = requests.post(f"{base}/api/v1/log", data=data,
                                   headers=ah).json()["episode_id"]
        listing = requests.get(f"{base}/api/v1/get-my-data", headers=ah).json()
        assert [e["episode_id"] for e in listing] == [episode_id]
        fetched = requests.get(f"{base}/api/v1/episodes/{episode_id}",
                               headers=ah)
        assert fetched.content == data

        assert requests.get(f"{base}/api/v1/get-my-data",
                            headers={"Authorization": "Bearer bad"}
                            ).status_code == 401
        assert requests.get(f"{base}/api/v1/episodes/{episode_id}",
                            headers=bh).status_code == 403
        dup = requests.post(f"{base}/api/v1/log", data=data, headers=ah).json()
        assert dup["episode_id"] == episode_id
        assert len(list((server.store.users_dir / "alice").glob("*.dxe"))) == 1

        requests.post(f"{base}/api/v1/admin/curate/{episode_id}",
                      headers={"Authorization": f"Bearer {admin.token}"})
        assert requests.get(f"{base}/api/v1/episodes/{episode_id}",
                            headers=bh).status_code == 200

        # index rebuild equivalence
        before = {e.episode_id: (e.user_id, e.digest, e.curated)
                  for e in server.store.entries()}
        server.store.index_path.unlink()
        rebuilt = EpisodeStore(tmp_path / "store")
        after = {e.episode_id: (e.user_id, e.digest, e.curated)
                 for e in rebuilt.entries()}
        assert before == after

        # fault injection: truncated uploads never corrupt the index
        for cut in (1, len(data) // 3, len(data) - 2):
            r = requests.post(f"{base}/api/v1/log", data=data[:cut], headers=ah)
            assert r.status_code == 400
        listing = requests.get(f"{base}/api/v1/get-my-data", headers=ah).json()
        assert [e["episode_id"] for e in listing] == [episode_id]
        assert EpisodeStore(tmp_path / "store").fetch(episode_id, "alice") == data
    finally:
        httpd.shutdown()
        server.stop()


# ---------------------------------------------------------------------------
# Reset semantics
# ---------------------------------------------------------------------------

@criterion("Reset semantics (determinism, bounds, uniformity)", 30.0)
def test_reset_semantics():
    from scipy import stats

    scene = load_scene("sort_bolts")
    model = load_robot("dualarm7")
    session = Session(1, scene, model, Transform.identity(), IkParams(), seed=1)

    # seeded determinism
    session.reset(42)
    first = session.state.object_poses.copy()
    session.reset(42)
    assert np.array_equal(session.state.object_poses, first)

    # 1000 seeded resets: bounds + uniform marginals
    randomized = [(i, scene.randomization_for(o.object_id))
                  for i, o in enumerate(scene.objects)
                  if scene.randomization_for(o.object_id) is not None]
    samples = {i: [] for i, _ in randomized}
    for seed in range(1, 1001):
        session.reset(seed)
        for i, rand in randomized:
            pos = session.state.object_poses[i, :3]
            assert np.all(pos >= rand.pos_lo - 1e-12)
            assert np.all(pos <= rand.pos_hi + 1e-12)
            samples[i].append(pos)

    pooled = []
    for i, rand in randomized:
        arr = np.array(samples[i])
        for axis in range(3):
            lo, hi = rand.pos_lo[axis], rand.pos_hi[axis]
            if hi - lo <= 0:
                assert np.all(arr[:, axis] == lo)
                continue
            u = (arr[:, axis] - lo) / (hi - lo)
            pooled.append(u)
            # per-marginal guard at a Bonferroni-tight level
            assert stats.kstest(u, "uniform").pvalue >= 0.001, \
                f"object {i} axis {axis} badly non-uniform"
    pooled = np.concatenate(pooled)
    p = stats.kstest(pooled, "uniform").pvalue
    assert p >= 0.01, f"pooled uniformity p={p}"
