/** Virtual hand rig: template law, ramps, deterministic event replay. */

import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { encodeTracking, framePacket, KIND_TRACKING } from "../src/protocol.js";
import {
  APERTURE_REF,
  INDEX_TIP,
  RigInputEvent,
  THUMB_TIP,
  VirtualHandRig,
  templateFrame,
} from "../src/rig.js";

function separation(frame: { positions: Float64Array }): number {
  const t = frame.positions.subarray(THUMB_TIP * 3, THUMB_TIP * 3 + 3);
  const i = frame.positions.subarray(INDEX_TIP * 3, INDEX_TIP * 3 + 3);
  return Math.hypot(t[0] - i[0], t[1] - i[1], t[2] - i[2]);
}

describe("hand template", () => {
  it("always emits 25 keypoints with unit quaternions", () => {
    for (const grip of [0, 0.33, 0.7, 1]) {
      const frame = templateFrame([0.4, 0.1, 0.3], [1, 0, 0, 0], grip);
      expect(frame.positions.length).toBe(75);
      expect(frame.quats.length).toBe(100);
      for (let k = 0; k < 25; k++) {
        const n = Math.hypot(
          frame.quats[k * 4], frame.quats[k * 4 + 1],
          frame.quats[k * 4 + 2], frame.quats[k * 4 + 3]);
        expect(Math.abs(n - 1)).toBeLessThan(1e-12);
      }
    }
  });

  it("thumb-index separation shrinks linearly with grip", () => {
    for (let g = 0; g <= 10; g++) {
      const grip = g / 10;
      const frame = templateFrame([0, 0, 0], [1, 0, 0, 0], grip);
      expect(separation(frame)).toBeCloseTo(APERTURE_REF * (1 - grip), 12);
    }
    expect(separation(templateFrame([0, 0, 0], [1, 0, 0, 0], 1))).toBe(0);
  });
});

describe("held-key ramps", () => {
  it("grip is monotonic in hold duration and clamped to [0, 1]", () => {
    const rig = new VirtualHandRig();
    rig.handle({ t: 0, type: "keydown", key: "grip" });
    let last = -1;
    for (let ms = 50; ms <= 1200; ms += 50) {
      rig.advance(ms);
      expect(rig.grip).toBeGreaterThanOrEqual(last);
      last = rig.grip;
    }
    expect(rig.grip).toBe(1);
    rig.handle({ t: 1300, type: "keyup", key: "grip" });
    rig.advance(2000);
    expect(rig.grip).toBeLessThan(1);
  });

  it("pointer motion moves the wrist inside workspace bounds", () => {
    const rig = new VirtualHandRig();
    const before = [...rig.pos];
    rig.handle({ t: 0, type: "pointer", dx: 60, dy: -120 });
    expect(rig.pos[0]).toBeGreaterThan(before[0]); // screen-up = away
    expect(rig.pos[1]).toBeLessThan(before[1]);
    for (let i = 0; i < 200; i++) {
      rig.handle({ t: i + 1, type: "pointer", dx: 10000, dy: 10000 });
    }
    expect(rig.pos[0]).toBeGreaterThanOrEqual(0.1); // clamped, not NaN
    expect(rig.pos[1]).toBeGreaterThanOrEqual(-0.6);
  });
});

// Deterministic scripted session: events in, packet bytes out.
function scriptedEvents(): RigInputEvent[] {
  const events: RigInputEvent[] = [];
  events.push({ t: 5, type: "pointer", dx: 40, dy: -30 });
  events.push({ t: 30, type: "keydown", key: "grip" });
  events.push({ t: 200, type: "pointer", dx: -25, dy: 10 });
  events.push({ t: 350, type: "keyup", key: "grip" });
  events.push({ t: 360, type: "wheel", dy: 240 });
  events.push({ t: 420, type: "keydown", key: "yaw_left" });
  events.push({ t: 700, type: "keyup", key: "yaw_left" });
  return events;
}

function replayStream(): Uint8Array {
  const rig = new VirtualHandRig();
  const events = scriptedEvents();
  let next = 0;
  const chunks: Uint8Array[] = [];
  let seq = 0;
  for (let t = 0; t <= 800; t += 1000 / 75) {
    while (next < events.length && events[next].t <= t) {
      rig.handle(events[next]);
      next += 1;
    }
    const payload = encodeTracking(rig.sample(t));
    seq += 1;
    chunks.push(framePacket(
      { kind: KIND_TRACKING, sessionId: 7, seq, timestampUs: BigInt(Math.round(t * 1000)) },
      payload,
    ));
  }
  const total = chunks.reduce((acc, c) => acc + c.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const c of chunks) {
    out.set(c, off);
    off += c.length;
  }
  return out;
}

describe("scripted event replay", () => {
  it("reproduces the recorded tracking byte stream", () => {
    const stream = replayStream();
    expect(stream).toEqual(replayStream()); // deterministic twice over

    const fixtureDir = join(__dirname, "fixtures");
    const fixture = join(fixtureDir, "rig_stream.bin");
    if (!existsSync(fixture)) {
      mkdirSync(fixtureDir, { recursive: true });
      writeFileSync(fixture, stream); // first run freezes the recording
    }
    expect(stream).toEqual(new Uint8Array(readFileSync(fixture)));
  });

  it("stream decodes back to frames that followed the script", () => {
    const stream = replayStream();
    // 61 samples at 75 Hz over 800 ms
    const frameSize = 4 + 20 + 700;
    expect(stream.length % frameSize).toBe(0);
    const count = stream.length / frameSize;
    // ~75 Hz over 800 ms; float step accumulation decides the exact count
    expect(count).toBeGreaterThanOrEqual(60);
    expect(count).toBeLessThanOrEqual(61);
    // grip closed during the hold: separation at t=350 well under open
    const at = (i: number) =>
      stream.slice(i * frameSize + 24, (i + 1) * frameSize);
    const early = separation({
      positions: new Float64Array(
        [...Array(75).keys()].map((j) =>
          new DataView(at(1).buffer, at(1).byteOffset).getFloat32(
            Math.floor(j / 3) * 28 + (j % 3) * 4, true))),
    } as never);
    const mid = separation({
      positions: new Float64Array(
        [...Array(75).keys()].map((j) =>
          new DataView(at(25).buffer, at(25).byteOffset).getFloat32(
            Math.floor(j / 3) * 28 + (j % 3) * 4, true))),
    } as never);
    expect(mid).toBeLessThan(early);
  });
});
