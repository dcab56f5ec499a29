// Wire protocol v1: one JSON object per line, newline terminated.
// Field names and value constraints must match the simulator exactly;
// anything it would reject, we reject here before sending.

export const PROTOCOL_VERSION = "1";
export const FINGERS = ["thumb", "index", "ring"] as const;
export const UNITS = ["thumb", "index", "ring", "palm"] as const;

export type Finger = (typeof FINGERS)[number];
export type Unit = (typeof UNITS)[number];

export interface Hello {
  type: "hello";
  version: string;
  role: "leader" | "follower" | "observer";
}

export interface JointFrame {
  type: "joints";
  t_ms: number;
  q: number[]; // 15 joint angles, radians
}

export interface ButtonEvent {
  type: "button";
  t_ms: number;
  unit: Unit;
  kind: "drag" | "suction";
  pressed: boolean;
}

export interface ValveCommand {
  type: "valve";
  t_ms: number;
  unit: Unit;
  open: boolean;
}

export interface Pause {
  type: "pause";
  t_ms: number;
}

export interface Resume {
  type: "resume";
  t_ms: number;
}

export interface SuctionReport {
  valve_open: boolean;
  sealed: boolean;
  object_id: string | null;
  patch_id: string | null;
  adhesion_limit: number;
  status: string; // ValveClosed | Sealed | Porous | TooFar | Tilted | ...
}

export interface ObjectReport {
  quat: number[]; // w, x, y, z
  pos: number[];
  support: string;
  dropped: boolean;
}

export interface SimEvent {
  time: number;
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface StateBroadcast {
  type: "state";
  t_ms: number;
  q: number[];
  suction: Record<Unit, SuctionReport>;
  objects: Record<string, ObjectReport>;
  events: SimEvent[];
}

export type TeleopMessage =
  | Hello
  | JointFrame
  | ButtonEvent
  | ValveCommand
  | Pause
  | Resume
  | StateBroadcast;

export class MalformedFrame extends Error {}

function checkT(t: unknown): number {
  if (typeof t !== "number" || !Number.isInteger(t) || t < 0) {
    throw new MalformedFrame(`t_ms must be a non-negative integer, got ${t}`);
  }
  return t;
}

function checkUnit(u: unknown): Unit {
  if (!UNITS.includes(u as Unit)) {
    throw new MalformedFrame(`unknown unit ${JSON.stringify(u)}`);
  }
  return u as Unit;
}

function checkQ(q: unknown): number[] {
  if (!Array.isArray(q) || q.length !== 15 ||
      !q.every((v) => typeof v === "number" && Number.isFinite(v))) {
    throw new MalformedFrame("q must be 15 finite numbers");
  }
  return q.map(Number);
}

export function encodeMessage(msg: TeleopMessage): string {
  // validate the outgoing shape so a buggy caller fails here, not server-side
  switch (msg.type) {
    case "hello":
      break;
    case "joints":
      checkT(msg.t_ms);
      checkQ(msg.q);
      break;
    case "button":
      checkT(msg.t_ms);
      checkUnit(msg.unit);
      if (msg.kind === "drag" && msg.unit === "palm") {
        throw new MalformedFrame("the palm has no drag button");
      }
      break;
    case "valve":
      checkT(msg.t_ms);
      checkUnit(msg.unit);
      break;
    case "pause":
    case "resume":
    case "state":
      checkT(msg.t_ms);
      break;
    default:
      throw new MalformedFrame(`not a protocol message: ${JSON.stringify(msg)}`);
  }
  return JSON.stringify(msg) + "\n";
}

export function decodeMessage(line: string): TeleopMessage {
  let doc: any;
  try {
    doc = JSON.parse(line);
  } catch (e) {
    throw new MalformedFrame(`bad JSON: ${e}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new MalformedFrame("frame must be a JSON object");
  }
  switch (doc.type) {
    case "hello":
      if (typeof doc.version !== "string" ||
          !["leader", "follower", "observer"].includes(doc.role)) {
        throw new MalformedFrame("bad hello frame");
      }
      return { type: "hello", version: doc.version, role: doc.role };
    case "joints":
      return { type: "joints", t_ms: checkT(doc.t_ms), q: checkQ(doc.q) };
    case "button":
      if (doc.kind !== "drag" && doc.kind !== "suction") {
        throw new MalformedFrame(`unknown button kind ${JSON.stringify(doc.kind)}`);
      }
      if (doc.kind === "drag" && doc.unit === "palm") {
        throw new MalformedFrame("the palm has no drag button");
      }
      if (typeof doc.pressed !== "boolean") {
        throw new MalformedFrame("pressed must be a boolean");
      }
      return { type: "button", t_ms: checkT(doc.t_ms), unit: checkUnit(doc.unit),
               kind: doc.kind, pressed: doc.pressed };
    case "valve":
      if (typeof doc.open !== "boolean") {
        throw new MalformedFrame("open must be a boolean");
      }
      return { type: "valve", t_ms: checkT(doc.t_ms), unit: checkUnit(doc.unit),
               open: doc.open };
    case "pause":
      return { type: "pause", t_ms: checkT(doc.t_ms) };
    case "resume":
      return { type: "resume", t_ms: checkT(doc.t_ms) };
    case "state":
      if (typeof doc.suction !== "object" || typeof doc.objects !== "object" ||
          !Array.isArray(doc.events)) {
        throw new MalformedFrame("bad state frame");
      }
      return { type: "state", t_ms: checkT(doc.t_ms), q: checkQ(doc.q),
               suction: doc.suction, objects: doc.objects, events: doc.events };
    default:
      throw new MalformedFrame(`unknown message type ${JSON.stringify(doc.type)}`);
  }
}
