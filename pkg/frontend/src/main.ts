/**
 * Browser entry point: wires DOM input to the rig, streams tracking at
 * 75 Hz, and renders the latest decoded state every animation frame.
 */

import { SessionClient } from "./client.js";
import { OrbitCamera } from "./math3.js";
import { encodeTracking } from "./protocol.js";
import { VirtualHandRig } from "./rig.js";
import { handPrimitives, paint, scenePrimitives } from "./render.js";

const TRACKING_RATE_HZ = 75; // inside the 60-90 Hz envelope

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d")!;
const hud = el<HTMLDivElement>("hud");
const banner = el<HTMLDivElement>("banner");
const toast = el<HTMLDivElement>("toast");
const taskSelect = el<HTMLSelectElement>("task");
const resetButton = el<HTMLButtonElement>("reset");
const gripGauge = el<HTMLDivElement>("grip-fill");

const camera = new OrbitCamera();
const rig = new VirtualHandRig();
const client = new SessionClient(location.origin, {
  wsFactory: (url) => new WebSocket(url) as never,
  fetchFn: (url) => fetch(url),
});

let currentScene = "";
let toastTimer: number | undefined;

function showToast(message: string): void {
  toast.textContent = message;
  toast.style.opacity = "1";
  clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => (toast.style.opacity = "0"), 2500);
}

client.onphase = (phase) => {
  banner.style.display = phase === "live" ? "none" : "block";
  banner.textContent = phase === "retrying"
    ? "connection lost - retrying (session preserved for 30 s)"
    : "connecting...";
};

// ---------------------------------------------------------------------------
// input -> rig (left drag steers the hand, right drag orbits the camera)
// ---------------------------------------------------------------------------

let orbiting = false;
canvas.addEventListener("contextmenu", (e) => e.preventDefault());
canvas.addEventListener("pointerdown", (e) => {
  orbiting = e.button === 2;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointerup", () => (orbiting = false));
canvas.addEventListener("pointermove", (e) => {
  if (!(e.buttons & 3)) return;
  if (orbiting) {
    camera.orbit(-e.movementX * 0.008, e.movementY * 0.008);
  } else {
    rig.handle({ t: e.timeStamp, type: "pointer",
                 dx: e.movementX, dy: e.movementY });
  }
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  if (e.ctrlKey) camera.zoom(e.deltaY > 0 ? 1.1 : 0.9);
  else rig.handle({ t: e.timeStamp, type: "wheel", dy: e.deltaY });
}, { passive: false });

const KEYMAP: Record<string, string> = {
  " ": "grip", q: "yaw_left", e: "yaw_right", Shift: "depth",
};
window.addEventListener("keydown", (e) => {
  const key = KEYMAP[e.key];
  if (key) rig.handle({ t: e.timeStamp, type: "keydown", key });
});
window.addEventListener("keyup", (e) => {
  const key = KEYMAP[e.key];
  if (key) rig.handle({ t: e.timeStamp, type: "keyup", key });
});

resetButton.addEventListener("click", () => {
  if (client.phase !== "live") {
    showToast("not connected - reset ignored");
    return;
  }
  client.reset();
});
taskSelect.addEventListener("change", () => {
  if (client.phase !== "live") {
    showToast("not connected");
    return;
  }
  client.switchTask(taskSelect.value);
  currentScene = taskSelect.value;
});

// ---------------------------------------------------------------------------
// streaming and rendering loops
// ---------------------------------------------------------------------------

window.setInterval(() => {
  if (client.phase !== "live") return;
  client.sendTracking(encodeTracking(rig.sample(performance.now())));
}, 1000 / TRACKING_RATE_HZ);

function resize(): void {
  canvas.width = canvas.clientWidth * devicePixelRatio;
  canvas.height = canvas.clientHeight * devicePixelRatio;
}
window.addEventListener("resize", resize);

function draw(): void {
  requestAnimationFrame(draw);
  const state = client.latestState;
  if (!state || !client.manifest) return;
  rig.advance(performance.now());
  const prims = scenePrimitives(client.manifest, currentScene, state);
  prims.push(...handPrimitives(rig.pos, rig.yaw, rig.grip));
  paint(ctx as never, camera, prims, canvas.width, canvas.height);

  gripGauge.style.width = `${(rig.grip * 100).toFixed(0)}%`;
  hud.textContent = [
    `session ${client.sessionId}`,
    `episode ${client.episodeId || "-"}`,
    `state ${client.stats.stateRateHz} Hz`,
    `travel ~${(client.stats.lastTravelUs / 1000).toFixed(1)} ms`,
    `n=${state.n} m=${state.m}`,
    `grip ${(rig.grip * 100).toFixed(0)}%`,
  ].join("  |  ");
  if (client.toast) {
    showToast(client.toast);
    client.toast = "";
  }
}

async function start(): Promise<void> {
  resize();
  try {
    await client.connect();
  } catch {
    banner.textContent = "server unreachable - reload to retry";
    banner.style.display = "block";
    return;
  }
  const manifest = client.manifest!;
  currentScene = manifest.default_scene;
  for (const scene of manifest.scenes) {
    const opt = document.createElement("option");
    opt.value = scene.scene_id;
    opt.textContent = scene.scene_id;
    opt.selected = scene.scene_id === currentScene;
    taskSelect.appendChild(opt);
  }
  draw();
}

start();
