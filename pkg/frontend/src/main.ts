// Browser entry point: wires DOM controls to a ConsoleSession and the
// 3D view. Keyboard: 1/2/3 hold finger drag (thumb/index/ring),
// q/w/e/r toggle suction (thumb/index/ring/palm), space pause/resume.
// Pointer drag on the canvas steers the active finger in the camera's
// ground plane.

import { ConsoleSession } from "./session.js";
import { wsTransport } from "./wsTransport.js";
import { HandView } from "./view3d.js";
import { sealIcon } from "./sealIcons.js";
import { Finger, Unit, UNITS } from "./protocol.js";
import { cupPosition, Vec3 } from "./kinematics.js";

const TICK_MS = 20;
const DRAG_KEYS: Record<string, Finger> = { "1": "thumb", "2": "index", "3": "ring" };
const SUCTION_KEYS: Record<string, Unit> = { q: "thumb", w: "index", e: "ring", r: "palm" };

function banner(text: string, isError = false): void {
  const el = document.getElementById("banner")!;
  el.textContent = text;
  el.className = isError ? "banner error" : "banner";
}

async function boot(): Promise<void> {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const view = new HandView(canvas);
  const url = (document.getElementById("url") as HTMLInputElement).value;

  let transport;
  try {
    transport = await wsTransport(url);
  } catch (e) {
    banner(`${e}`, true);
    return; // no partial session; the connect button stays armed
  }

  const session = new ConsoleSession(transport, (state) => {
    view.update(state);
    for (const u of UNITS) {
      const report = state.suction[u];
      if (!report) continue;
      const icon = sealIcon(report);
      const el = document.getElementById(`cup-${u}`)!;
      el.className = `cup ${icon.color}`;
      el.title = icon.reason ?? icon.objectId ?? "";
    }
    const last = state.events[state.events.length - 1];
    if (last) banner(`${last.kind} ${JSON.stringify(last.payload)}`);
  });
  session.connect();

  let activeFinger: Finger | null = null;
  window.addEventListener("keydown", (ev) => {
    if (ev.repeat) return;
    const f = DRAG_KEYS[ev.key];
    if (f) {
      session.pressDrag(f);
      activeFinger = f;
    }
    const u = SUCTION_KEYS[ev.key];
    if (u) session.clickSuction(u);
    if (ev.key === " ") {
      session.paused ? session.resume(performance.now())
                     : session.pause(performance.now());
      banner(session.paused ? "paused" : "live");
    }
  });
  window.addEventListener("keyup", (ev) => {
    const f = DRAG_KEYS[ev.key];
    if (f) {
      session.releaseDrag(f);
      if (activeFinger === f) activeFinger = null;
    }
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (!activeFinger || !(ev.buttons & 1)) return;
    // pointer x/y pan the fingertip in the world XY plane; wheel would
    // change height, kept fixed here for simplicity
    const current = cupPosition(activeFinger, session.targetQ);
    const target: Vec3 = [
      current[0] + ev.movementX * 0.0004,
      current[1] - ev.movementY * 0.0004,
      current[2],
    ];
    if (!session.dragTo(activeFinger, target)) view.showGhost(target);
  });

  setInterval(() => {
    session.tick(performance.now());
    if (session.status === "rejected") {
      banner("server refused the session (is another leader connected?)", true);
    }
    view.render();
  }, TICK_MS);
}

document.getElementById("connect")?.addEventListener("click", () => {
  void boot();
});
