"""Record a scripted demonstration offline and replay it bit-exactly.

Runs a session without any sockets: feeds the bundled pick-and-place
script's frames straight into the mailbox, collects the episode, stores it
in a throwaway hub, fetches it back and verifies the replay diverges on
zero ticks.
"""

import tempfile
from pathlib import Path

from teleosim.config import bundled_asset_text
from teleosim.episode import parse_episode
from teleosim.geometry import Transform
from teleosim.hands import hand_template
from teleosim.ik import IkParams
from teleosim.parsing import parse_robot, parse_scene
from teleosim.replay import replay_episode
from teleosim.server import Registry
from teleosim.session import Session
from teleosim.store import EpisodeStore
from teleosim.synth import parse_script, script_events
from teleosim.wire import Header, KIND_TRACKING, encode_tracking

scene = parse_scene(bundled_asset_text("sort_bolts.scene"))
model = parse_robot(bundled_asset_text("dualarm7.robot"))
session = Session(1, scene, model, Transform.identity(), IkParams(), seed=42)

events = script_events(parse_script(bundled_asset_text("pick_place.script")))
print(f"driving {len(events)} rig events through the session "
      f"({events[-1].t:.1f} s of demonstration)...")

seq = 0
pending = iter(events)
ev = next(pending, None)
while ev is not None:
    while ev is not None and ev.t <= session.state.sim_time:
        if ev.frame_wrist is not None:
            seq += 1
            frame = hand_template(ev.frame_wrist, ev.grip,
                                  timestamp_us=int(ev.t * 1e6) + 1)
            session.feed_tracking(Header(KIND_TRACKING, 1, seq,
                                         frame.timestamp_us),
                                  encode_tracking(frame))
        ev = next(pending, None)
    session.step()

episode_id = session._finalize_episode()
_, data = session.finished_episodes.popleft()
log = parse_episode(data)
bolt = log.metadata["object_ids"].split(",").index("bolt1")
start = log.records[0].object_poses[bolt, :3]
end = log.records[-1].object_poses[bolt, :3]
print(f"episode {episode_id}: {len(log.records)} ticks, "
      f"{sum(r.tracking_flag for r in log.records)} packets consumed")
print(f"bolt1 moved {start.round(3)} -> {end.round(3)}")

with tempfile.TemporaryDirectory() as tmp:
    store = EpisodeStore(Path(tmp))
    store.store_bytes("demo", data)
    fetched = store.fetch(episode_id, "demo")
    print(f"stored and fetched {len(fetched)} bytes "
          f"(digest-verified: {fetched == data})")

registry = Registry()
registry.load_bundled()
result = replay_episode(data, registry)
print(f"replay: {result.total_ticks} ticks, "
      f"{result.diverging_ticks} diverging -> "
      f"{'MATCH' if result.match else 'DIVERGED'}")
