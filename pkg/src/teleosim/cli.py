"""Command-line entry points.

    teleosim serve  --config server.cfg
    teleosim synth  --script pick.script --addr 127.0.0.1:7447
    teleosim replay episode.dxe [--speed 2.0] [--config server.cfg]
    teleosim report packet-sizes [--n 58 --m 50]
    teleosim report latency --addr 127.0.0.1:7447 [--http-port 8447]
    teleosim model validate robot.robot
    teleosim admin issue-token --user alice [--admin] [--store DIR]

Exit codes: 0 ok, 1 runtime failure, 2 bind/connect failure,
3 config/parse failure. TELEOP_STORE_DIR overrides the store location.
"""

from __future__ import annotations

import argparse
import errno
import json
import signal
import socket
import sys
import time
import urllib.request
from pathlib import Path

from .config import ConfigError, ServerConfig, load_config
from .geometry import Transform
from .hands import hand_template
from .parsing import ParseError, parse_robot, parse_scene
from .model import ModelError
from .replay import ReplayError, replay_episode, trajectory_summary
from .server import Registry, TeleopServer
from .store import TokenRegistry
from .synth import ScriptError, SynthClient, parse_script
from .wire import (
    Control,
    KIND_CONTROL,
    KIND_TRACKING,
    OP_START_EPISODE,
    encode_control,
    encode_tracking,
    packet_size_report,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_BIND = 2
EXIT_CONFIG = 3


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    try:
        config = load_config(Path(args.config)) if args.config else ServerConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .hub import start_http

    server = TeleopServer(config)
    try:
        server.start()
        httpd = start_http(server, config.host, config.http_port)
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES):
            print(f"port in use: {exc}", file=sys.stderr)
            return EXIT_BIND
        raise

    print(f"teleosim server up")
    print(f"  stream   tcp://{config.host}:{server.stream_port}")
    print(f"  http     http://{config.host}:{httpd.server_address[1]}"
          f"  (hub API, /ws bridge{', static UI' if config.ui_dir else ''})")
    print(f"  store    {config.resolve_store_dir()}")
    print(f"  scenes   {', '.join(sorted(server.registry.scenes))}")
    print(f"  default  {config.default_scene} | dt {config.ik.dt * 1000:.1f} ms"
          f" | max sessions {config.max_sessions}", flush=True)

    stop = []
    signal.signal(signal.SIGTERM, lambda *a: stop.append(1))
    try:
        while not stop:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    print("shutting down")
    httpd.shutdown()
    server.stop()
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        directives = parse_script(Path(args.script).read_text())
    except (ScriptError, OSError) as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    host, port = _split_addr(args.addr)
    try:
        client = SynthClient(host, port)
    except OSError as exc:
        print(f"cannot connect to {args.addr}: {exc}", file=sys.stderr)
        return EXIT_BIND
    try:
        result = client.run_script(directives, rate_hz=args.rate)
    finally:
        client.close()
    print(f"session {result.session_id}: {result.directives} directives, "
          f"{result.states} state packets")
    for episode_id in result.episode_ids:
        print(f"episode {episode_id}")
    return EXIT_OK


def _build_registry(config_path: str | None) -> Registry:
    registry = Registry()
    registry.load_bundled()
    if config_path:
        config = load_config(Path(config_path))
        for p in config.robot_paths:
            registry.add_robot_text(Path(p).read_text())
        for p in config.scene_paths:
            registry.add_scene_text(Path(p).read_text())
    return registry


def cmd_replay(args) -> int:
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        print(f"cannot read episode: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        registry = _build_registry(args.config)
        if args.speed != 1.0:
            print(trajectory_summary(data))
            return EXIT_OK
        result = replay_episode(data, registry)
    except ReplayError as exc:
        print(f"replay refused: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ParseError, ModelError, ConfigError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if result.match:
        print(f"MATCH: episode {result.episode_id}, "
              f"{result.total_ticks} ticks, 0 diverging")
        return EXIT_OK
    print(f"DIVERGED: episode {result.episode_id}, "
          f"{result.diverging_ticks} of {result.total_ticks} ticks differ, "
          f"first at tick {result.first_divergence}")
    return EXIT_RUNTIME


def cmd_report_packet_sizes(args) -> int:
    r = packet_size_report(args.n, args.m)
    print(f"packet sizes (payload data, n={args.n} joints, m={args.m} objects)")
    print(f"  human->robot  hand tracking   {r['tracking']:>9,} B"
          f"   (25 keypoints x 28 B)")
    print(f"  human->robot  + head pose     {r['tracking_with_head']:>9,} B"
          f"   (26 x 28 B)")
    print(f"  robot->human  sim state       {r['state']:>9,} B"
          f"   (4n + 28m)")
    print(f"  robot->human  stereo baseline {r['stereo_baseline']:>9,} B"
          f"   (2 x 480 x 640 x 3)")
    print(f"  reduction ratio: {r['ratio']:,.0f}x smaller than the image stream")
    return EXIT_OK


def cmd_report_latency(args) -> int:
    host, port = _split_addr(args.addr)
    try:
        client = SynthClient(host, port)
    except OSError as exc:
        print(f"cannot connect to {args.addr}: {exc}", file=sys.stderr)
        return EXIT_BIND

    ticks_wanted = args.ticks
    pose = Transform((1.2, 0.4, 0.3))
    try:
        if not client.wait_for_session(5.0):
            print("no state packets from server", file=sys.stderr)
            return EXIT_RUNTIME
        t0 = time.monotonic()
        seq_period = 1.0 / 90.0
        sent = 0
        # hold a steady pose; the point is the timing pipeline, not motion
        while client.states < ticks_wanted:
            frame = hand_template(pose, 0.2, timestamp_us=time.time_ns() // 1000)
            client._send_frame(KIND_TRACKING, encode_tracking(frame))
            sent += 1
            time.sleep(seq_period)
            if time.monotonic() - t0 > 120:
                print("timed out waiting for ticks", file=sys.stderr)
                return EXIT_RUNTIME
        session_id = client.session_id
        rtt_us = _control_roundtrip_us(client)
    finally:
        client.close()

    url = f"http://{host}:{args.http_port}/api/v1/sessions/{session_id}/timing"
    try:
        with urllib.request.urlopen(url, timeout=5) as resp:
            summary = json.loads(resp.read())
    except OSError as exc:
        print(f"cannot fetch timing profile: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"timing profile over {ticks_wanted} ticks "
          f"(one-way packet travel, sender clock)")
    for row in ("Packet Travel Time", "Simulation Step", "Total"):
        s = summary[row]
        print(f"  {row:<20} mean {s['mean'] / 1000:8.3f} ms   "
              f"p50 {s['p50'] / 1000:8.3f} ms   p99 {s['p99'] / 1000:8.3f} ms   "
              f"({s['count']} samples)")
    if rtt_us is not None:
        print(f"  control round-trip / 2: {rtt_us / 2000:.3f} ms "
              f"(client-side, informational)")
    return EXIT_OK


def _control_roundtrip_us(client: SynthClient) -> float | None:
    samples = []
    for _ in range(5):
        before = len(client.acks)
        t0 = time.perf_counter_ns()
        client._send_frame(KIND_CONTROL, encode_control(Control(OP_START_EPISODE)))
        if not client.wait_for_acks(before + 1, timeout=2.0):
            return None
        samples.append((time.perf_counter_ns() - t0) / 1000)
    return sorted(samples)[len(samples) // 2]


def cmd_model_validate(args) -> int:
    path = Path(args.file)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"cannot read: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if path.suffix == ".scene":
            scene = parse_scene(text)
            print(f"OK scene '{scene.scene_id}': {scene.object_count} objects, "
                  f"{len(scene.randomizations)} randomized, robots "
                  f"{[r for r, _ in scene.robot_refs]}")
        else:
            model = parse_robot(text)
            print(f"OK robot '{model.name}': dof={model.dof}, "
                  f"{len(model.links)} links, {len(model.sites)} sites, "
                  f"{len(model.collision_spheres)} spheres, "
                  f"{len(model.grippers)} grippers, hash {model.content_hash()}")
    except (ParseError, ModelError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_admin_issue_token(args) -> int:
    import os
    store_dir = Path(args.store or os.environ.get("TELEOP_STORE_DIR",
                                                  "teleosim_store"))
    store_dir.mkdir(parents=True, exist_ok=True)
    registry = TokenRegistry(store_dir / "tokens.txt")
    info = registry.issue(args.user, admin=args.admin)
    print(info.token)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleosim",
        description="State-streaming teleoperation simulation server and tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the combined stream + hub server")
    p.add_argument("--config", help="server config file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="run a synthetic operator script")
    p.add_argument("--script", required=True)
    p.add_argument("--addr", default="127.0.0.1:7447")
    p.add_argument("--rate", type=float, default=90.0,
                   help="tracking packet rate, Hz")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="replay a recorded episode")
    p.add_argument("file")
    p.add_argument("--speed", type=float, default=1.0,
                   help="1.0 verifies bit-exact determinism; other values "
                        "print a trajectory summary")
    p.add_argument("--config", help="config providing extra robots/scenes")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="print protocol/timing reports")
    rsub = p.add_subparsers(dest="report_kind", required=True)
    rp = rsub.add_parser("packet-sizes")
    rp.add_argument("--n", type=int, default=58)
    rp.add_argument("--m", type=int, default=50)
    rp.set_defaults(func=cmd_report_packet_sizes)
    rl = rsub.add_parser("latency")
    rl.add_argument("--addr", default="127.0.0.1:7447")
    rl.add_argument("--http-port", type=int, default=8447)
    rl.add_argument("--ticks", type=int, default=1000)
    rl.set_defaults(func=cmd_report_latency)

    p = sub.add_parser("model", help="model tooling")
    msub = p.add_subparsers(dest="model_cmd", required=True)
    mv = msub.add_parser("validate")
    mv.add_argument("file")
    mv.set_defaults(func=cmd_model_validate)

    p = sub.add_parser("admin", help="administration")
    asub = p.add_subparsers(dest="admin_cmd", required=True)
    at = asub.add_parser("issue-token")
    at.add_argument("--user", required=True)
    at.add_argument("--admin", action="store_true")
    at.add_argument("--store", help="store directory (default: "
                                    "$TELEOP_STORE_DIR or ./teleosim_store)")
    at.set_defaults(func=cmd_admin_issue_token)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
