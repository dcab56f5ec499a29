// Leader-side session state machine for the console. Mirrors the
// simulator's gating rules so every log this produces passes its
// protocol validator: joint frames only while a drag is held, valve
// commands strictly alternate per unit, nothing flows while paused.

import {
  ButtonEvent,
  encodeMessage,
  decodeMessage,
  Finger,
  FINGERS,
  JointFrame,
  PROTOCOL_VERSION,
  StateBroadcast,
  TeleopMessage,
  Unit,
  UNITS,
  ValveCommand,
} from "./protocol.js";
import { FINGER_SLICES } from "./handModel.js";
import { previewIk, Vec3 } from "./kinematics.js";

export interface Transport {
  send(line: string): void;
  /** bytes queued but not yet on the wire (ws bufferedAmount); 0 if unknown */
  backlog?(): number;
  onLine(cb: (line: string) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export type SessionStatus = "connecting" | "live" | "rejected" | "closed";

const MAX_OUTBOUND_BACKLOG_BYTES = 64 * 1024;

export class ConsoleSession {
  status: SessionStatus = "connecting";
  paused = false;
  latest: StateBroadcast | null = null;

  /** target joints streamed while dragging; reconciled from broadcasts */
  targetQ: number[] = new Array(15).fill(0);

  private drag: Record<Finger, boolean> = { thumb: false, index: false, ring: false };
  private prevDrag: Record<Finger, boolean> = { thumb: false, index: false, ring: false };
  private clicks: Unit[] = [];
  private releaseDue: Unit[] = [];
  // local ledger of what we last commanded per valve; broadcasts confirm
  // it but a pending edge wins so the wire stream keeps strict toggle
  // parity even when a stale broadcast arrives mid-flight
  private valveSent: Record<Unit, boolean> = {
    thumb: false, index: false, ring: false, palm: false,
  };
  private valveInit = false;
  private lastT = -1;
  droppedFrames = 0;

  /** every line actually handed to the transport, for log piping */
  readonly sentLog: string[] = [];

  constructor(private transport: Transport,
              private onBroadcast?: (b: StateBroadcast) => void) {
    transport.onLine((line) => this.handleLine(line));
    transport.onClose(() => {
      // closed before any broadcast means the server refused the session
      // (most likely a second leader); afterwards it is a plain drop
      this.status = this.latest === null ? "rejected" : "closed";
    });
  }

  connect(): void {
    this.sendNow({ type: "hello", version: PROTOCOL_VERSION, role: "leader" });
  }

  private handleLine(line: string): void {
    let msg: TeleopMessage;
    try {
      msg = decodeMessage(line);
    } catch {
      return; // never render from a frame we cannot parse
    }
    if (msg.type !== "state") return;
    this.latest = msg;
    this.status = "live";
    if (!this.valveInit) {
      // seed the toggle ledger from the server's actual valve state once;
      // after that the local ledger keeps wire parity strict even when a
      // broadcast arrives between our command and its application
      for (const u of UNITS) {
        const report = msg.suction[u];
        if (report) this.valveSent[u] = report.valve_open;
      }
      this.valveInit = true;
    }
    if (!this.anyDrag()) {
      this.targetQ = [...msg.q]; // adopt applied joints when not steering
    }
    this.onBroadcast?.(msg);
  }

  private anyDrag(): boolean {
    return FINGERS.some((f) => this.drag[f]);
  }

  pressDrag(finger: Finger): void {
    this.drag[finger] = true;
  }

  releaseDrag(finger: Finger): void {
    this.drag[finger] = false;
  }

  /** Click on a suction button. Presses during a pause never fire. */
  clickSuction(unit: Unit): void {
    if (this.paused) return;
    this.clicks.push(unit);
  }

  /**
   * Pointer drag: move the finger's preview target to a world position.
   * Returns false (red ghost, nothing streamed) when IK cannot reach it.
   */
  dragTo(finger: Finger, target: Vec3): boolean {
    if (!this.drag[finger] || this.paused) return false;
    const s = FINGER_SLICES[finger];
    const solved = previewIk(finger, target, this.targetQ.slice(s, s + 5));
    if (solved === null) return false;
    for (let i = 0; i < 5; i++) this.targetQ[s + i] = solved[i];
    return true;
  }

  pause(tMs: number): void {
    if (this.paused) return;
    this.paused = true;
    this.sendNow({ type: "pause", t_ms: this.takeClock(tMs) });
  }

  resume(tMs: number): void {
    if (!this.paused) return;
    this.paused = false;
    this.sendNow({ type: "resume", t_ms: this.takeClock(tMs) });
  }

  /** Assemble and send this tick's outbound messages. */
  tick(tMs: number): void {
    if (this.paused) {
      this.clicks.length = 0;
      return; // prevDrag stays frozen: edges surface on resume
    }
    const t = this.takeClock(tMs);
    const msgs: TeleopMessage[] = [];

    for (const u of this.releaseDue) {
      msgs.push({ type: "button", t_ms: t, unit: u, kind: "suction",
                  pressed: false } as ButtonEvent);
    }
    this.releaseDue.length = 0;

    for (const f of FINGERS) {
      if (this.drag[f] !== this.prevDrag[f]) {
        msgs.push({ type: "button", t_ms: t, unit: f, kind: "drag",
                    pressed: this.drag[f] } as ButtonEvent);
      }
    }
    this.prevDrag = { ...this.drag };

    for (const u of this.clicks) {
      msgs.push({ type: "button", t_ms: t, unit: u, kind: "suction",
                  pressed: true } as ButtonEvent);
      this.valveSent[u] = !this.valveSent[u];
      msgs.push({ type: "valve", t_ms: t, unit: u,
                  open: this.valveSent[u] } as ValveCommand);
      this.releaseDue.push(u);
    }
    this.clicks.length = 0;

    if (this.anyDrag()) {
      msgs.push({ type: "joints", t_ms: t, q: [...this.targetQ] } as JointFrame);
    }
    for (const m of msgs) this.sendNow(m);
  }

  private takeClock(tMs: number): number {
    const t = Math.max(Math.trunc(tMs), this.lastT); // clock may never regress
    this.lastT = t;
    return t;
  }

  private sendNow(msg: TeleopMessage): void {
    // Non-blocking bounded outbound: joint frames are a stream and the
    // next tick resends the current target, so they are the only thing
    // safe to shed under backpressure. Edges always go out.
    if (msg.type === "joints" && this.transport.backlog &&
        this.transport.backlog() > MAX_OUTBOUND_BACKLOG_BYTES) {
      this.droppedFrames += 1;
      return;
    }
    const line = encodeMessage(msg);
    this.transport.send(line);
    this.sentLog.push(line);
  }
}
