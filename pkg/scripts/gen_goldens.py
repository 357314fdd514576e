#!/usr/bin/env python3
"""Generate the checked-in golden wire-format fixtures.

Run from the repo root. The outputs under fixtures/golden/ are frozen:
any byte change is a protocol break and needs a version bump. The UI test
suite consumes the same files, so both codecs are pinned to one truth.
"""

import json
from pathlib import Path

import numpy as np

from teleosim.hands import KEYPOINT_COUNT, HandFrame
from teleosim.wire import (
    Ack,
    Control,
    Header,
    KIND_ACK,
    KIND_CONTROL,
    KIND_STATE,
    KIND_TRACKING,
    WireState,
    encode_ack,
    encode_control,
    encode_state,
    encode_tracking,
    frame_packet,
)

OUT = Path(__file__).resolve().parents[1] / "fixtures" / "golden"

SESSION = 7
TS0 = 1_234_567_890_123_456


def golden_hand_frame() -> HandFrame:
    # Positions exact in float32 (multiples of 1/8); alternating exact quats.
    positions = np.array([[1.0 + 0.125 * k, 2.0 + 0.25 * k, 3.0 + 0.375 * k]
                          for k in range(KEYPOINT_COUNT)])
    quats = np.array([[1.0, 0.0, 0.0, 0.0] if k % 2 == 0
                      else [0.5, 0.5, 0.5, 0.5]
                      for k in range(KEYPOINT_COUNT)])
    return HandFrame(positions, quats, TS0).validate()


def golden_state() -> WireState:
    return WireState(np.array([0.1, -0.2]),
                     np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]]))


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    tracking_payload = encode_tracking(golden_hand_frame())
    tracking_framed = frame_packet(Header(KIND_TRACKING, SESSION, 42, TS0),
                                   tracking_payload)

    state_payload = encode_state(golden_state())
    state_framed = frame_packet(Header(KIND_STATE, SESSION, 43, TS0 + 5000),
                                state_payload)

    control_payload = encode_control(Control(op=2, arg="mug_basket", seed=7))
    control_framed = frame_packet(Header(KIND_CONTROL, SESSION, 44, TS0 + 9000),
                                  control_payload)

    ack_payload = encode_ack(Ack(op=2, status=0, arg="ok:mug_basket"))
    ack_framed = frame_packet(Header(KIND_ACK, SESSION, 1, TS0 + 9500),
                              ack_payload)

    files = {
        "tracking_payload.bin": tracking_payload,
        "tracking_framed.bin": tracking_framed,
        "state_payload.bin": state_payload,
        "state_framed.bin": state_framed,
        "control_payload.bin": control_payload,
        "control_framed.bin": control_framed,
        "ack_payload.bin": ack_payload,
        "ack_framed.bin": ack_framed,
    }
    for name, data in files.items():
        (OUT / name).write_bytes(data)
        print(f"wrote {name}: {len(data)} bytes")

    manifest = {
        "session_id": SESSION,
        "timestamp_us": TS0,
        "tracking": {
            "seq": 42,
            "keypoints": "k -> pos (1+0.125k, 2+0.25k, 3+0.375k); "
                         "quat identity for even k, (0.5,0.5,0.5,0.5) for odd k",
            "payload_bytes": len(tracking_payload),
        },
        "state": {
            "seq": 43,
            "timestamp_us": TS0 + 5000,
            "q": [0.1, -0.2],
            "object_poses": [[0, 0, 0, 1, 0, 0, 0]],
            "payload_bytes": len(state_payload),
        },
        "control": {"seq": 44, "timestamp_us": TS0 + 9000,
                    "op": 2, "arg": "mug_basket", "seed": 7},
        "ack": {"seq": 1, "timestamp_us": TS0 + 9500,
                "op": 2, "status": 0, "arg": "ok:mug_basket"},
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print("wrote manifest.json")


if __name__ == "__main__":
    main()
