"""Packet anatomy and the bandwidth argument.

Encodes one tracking frame and one state snapshot, prints their exact
bytes sizes, and reproduces the packet-size comparison against a stereo
camera stream.
"""

import numpy as np

from teleosim import Transform, hand_template
from teleosim.wire import (
    Header,
    KIND_STATE,
    KIND_TRACKING,
    WireState,
    encode_state,
    encode_tracking,
    frame_packet,
    packet_size_report,
)

frame = hand_template(Transform((0.4, 0.1, 0.3)), grip=0.35, timestamp_us=1000)
payload = encode_tracking(frame)
framed = frame_packet(Header(KIND_TRACKING, 1, 1, 1000), payload)
print(f"tracking payload: {len(payload)} B (25 keypoints x 28 B)")
print(f"  on the wire: {len(framed)} B = 4 length + 20 header + payload")
print(f"  first keypoint bytes: {payload[:28].hex()}")

state = WireState(np.zeros(16), np.zeros((12, 7)))
payload = encode_state(state)
print(f"\nstate payload (n=16, m=12): {len(payload)} B = 4 + 4n + 28m")

print("\nworst-case comparison (n=58 joints, m=50 objects):")
r = packet_size_report(58, 50)
print(f"  hand tracking   {r['tracking']:>9,} B")
print(f"  + head pose     {r['tracking_with_head']:>9,} B")
print(f"  sim state       {r['state']:>9,} B")
print(f"  stereo frames   {r['stereo_baseline']:>9,} B")
print(f"  -> streaming state instead of pixels is {r['ratio']:,.0f}x smaller")
