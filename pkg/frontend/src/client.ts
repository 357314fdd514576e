/**
 * Session client: manifest fetch, websocket bridge, freshest-state cell.
 *
 * The render loop only ever reads `latestState`; network receive decodes
 * into that cell and never blocks drawing. The websocket and fetch
 * implementations are injectable so the whole client runs headless in
 * tests.
 */

import { Manifest } from "./model.js";
import {
  Ack,
  Control,
  FrameSplitter,
  HEADER_SIZE,
  Header,
  KIND_ACK,
  KIND_CONTROL,
  KIND_STATE,
  KIND_TRACKING,
  OP_RESET,
  OP_SWITCH_TASK,
  WireState,
  decodeAck,
  decodePacket,
  decodeState,
  encodeAck,
  encodeControl,
  framePacket,
} from "./protocol.js";

export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer | Uint8Array }) => void) | null;
  send(data: Uint8Array): void;
  close(): void;
}

export interface ClientOptions {
  wsFactory: (url: string) => SocketLike;
  fetchFn: (url: string) => Promise<{ ok: boolean; json(): Promise<unknown> }>;
  nowUs?: () => bigint;
  reconnectDelayMs?: number;
}

export type ConnectionPhase = "connecting" | "live" | "retrying" | "closed";

export interface ClientStats {
  statesReceived: number;
  staleDropped: number;
  lastTick: number;
  stateRateHz: number;
  lastTravelUs: number; // header timestamp -> local receipt (clock caveat)
}

export class SessionClient {
  manifest: Manifest | null = null;
  latestState: WireState | null = null;
  latestSeq = -1;
  sessionId = 0;
  episodeId = "";
  phase: ConnectionPhase = "connecting";
  toast = "";
  stats: ClientStats = {
    statesReceived: 0,
    staleDropped: 0,
    lastTick: 0,
    stateRateHz: 0,
    lastTravelUs: 0,
  };
  onstate: ((s: WireState) => void) | null = null;
  onphase: ((p: ConnectionPhase) => void) | null = null;

  private socket: SocketLike | null = null;
  private splitter = new FrameSplitter();
  private seq = 0;
  private nowUs: () => bigint;
  private rateWindow: number[] = [];
  private closed = false;

  constructor(private baseUrl: string, private opts: ClientOptions) {
    this.nowUs = opts.nowUs ?? (() => BigInt(Math.round(Date.now() * 1000)));
  }

  async connect(): Promise<void> {
    const resp = await this.opts.fetchFn(`${this.baseUrl}/api/v1/manifest`);
    if (!resp.ok) throw new Error("manifest fetch failed");
    this.manifest = (await resp.json()) as Manifest;
    this.openSocket();
  }

  private setPhase(phase: ConnectionPhase): void {
    this.phase = phase;
    this.onphase?.(phase);
  }

  private openSocket(): void {
    const wsUrl = this.baseUrl.replace(/^http/, "ws") + "/ws";
    const socket = this.opts.wsFactory(wsUrl);
    socket.binaryType = "arraybuffer";
    this.socket = socket;
    this.splitter = new FrameSplitter();

    socket.onopen = () => {
      this.setPhase("live");
      this.sendHello();
    };
    socket.onmessage = (ev) => {
      const bytes = ev.data instanceof Uint8Array
        ? ev.data
        : new Uint8Array(ev.data as ArrayBuffer);
      for (const body of this.splitter.feed(bytes)) {
        this.handleFrame(body);
      }
    };
    socket.onclose = () => {
      if (this.closed) return;
      this.setPhase("retrying");
      const delay = this.opts.reconnectDelayMs ?? 1000;
      setTimeout(() => {
        if (!this.closed) this.openSocket();
      }, delay);
    };
    socket.onerror = () => socket.onclose?.();
  }

  private handleFrame(body: Uint8Array): void {
    const { header, payload } = decodePacket(body);
    if (header.kind === KIND_STATE) {
      if (header.seq <= this.latestSeq) {
        this.stats.staleDropped += 1; // out of order: drop, keep the fresher
        return;
      }
      this.latestSeq = header.seq;
      this.sessionId = header.sessionId;
      const state = decodeState(payload);
      this.latestState = state;
      this.stats.statesReceived += 1;
      this.stats.lastTravelUs = Number(this.nowUs() - header.timestampUs);
      const nowMs = Number(this.nowUs() / 1000n);
      this.rateWindow.push(nowMs);
      while (this.rateWindow.length && this.rateWindow[0] < nowMs - 1000) {
        this.rateWindow.shift();
      }
      this.stats.stateRateHz = this.rateWindow.length;
      this.onstate?.(state);
    } else if (header.kind === KIND_ACK) {
      this.handleAck(decodeAck(payload));
    }
  }

  private handleAck(ack: Ack): void {
    if (ack.status !== 0) {
      this.toast = ack.arg || "control rejected";
      return;
    }
    for (const part of ack.arg.split(";")) {
      if (part.startsWith("ep=")) this.episodeId = part.slice(3);
    }
  }

  private sendFrame(kind: number, payload: Uint8Array): void {
    if (!this.socket || this.phase !== "live") return; // dropped while down
    this.seq += 1;
    const header: Header = {
      kind,
      sessionId: this.sessionId,
      seq: this.seq,
      timestampUs: this.nowUs(),
    };
    this.socket.send(framePacket(header, payload));
  }

  private sendHello(): void {
    // any well-formed frame binds the transport; a client ack is inert
    this.sendFrame(KIND_ACK, encodeAck({ op: 0, status: 0, arg: "hello" }));
  }

  sendTracking(payload: Uint8Array): void {
    this.sendFrame(KIND_TRACKING, payload);
  }

  sendControl(control: Control): void {
    this.sendFrame(KIND_CONTROL, encodeControl(control));
  }

  reset(seed = 0n): void {
    this.sendControl({ op: OP_RESET, arg: "", seed });
  }

  switchTask(sceneId: string, seed = 0n): void {
    this.sendControl({ op: OP_SWITCH_TASK, arg: sceneId, seed });
  }

  close(): void {
    this.closed = true;
    this.setPhase("closed");
    this.socket?.close();
  }
}
