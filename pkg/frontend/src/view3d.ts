// Three.js scene: palm plane, finger chains drawn from the applied
// joints in the latest broadcast, object boxes, and a colored sphere at
// each cup showing its seal icon. Everything rendered here comes from
// the broadcast (or, for the drag ghost, is explicitly marked as a
// preview and colored differently).

import * as THREE from "three";
import { chainFrames, Vec3 } from "./kinematics.js";
import { sealIcon } from "./sealIcons.js";
import { FINGERS, StateBroadcast, Unit } from "./protocol.js";
import { FINGER_SLICES } from "./handModel.js";

const ICON_COLORS = { green: 0x2ecc40, amber: 0xffb000, grey: 0x666666 };

export class HandView {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private fingerLines: Record<string, THREE.Line> = {};
  private cupDots: Record<string, THREE.Mesh> = {};
  private objectMeshes = new Map<string, THREE.Mesh>();
  private ghost: THREE.Mesh;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(
      45, canvas.width / canvas.height, 0.01, 5);
    this.camera.position.set(0.25, -0.25, 0.25);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0, 0, 0.05);

    this.scene.background = new THREE.Color(0x101418);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 0.8);
    sun.position.set(0.3, 0.2, 0.6);
    this.scene.add(sun);

    const palm = new THREE.Mesh(
      new THREE.BoxGeometry(0.24, 0.24, 0.004),
      new THREE.MeshStandardMaterial({ color: 0x2a2f36 }));
    palm.position.z = -0.002;
    this.scene.add(palm);

    for (const f of FINGERS) {
      const geom = new THREE.BufferGeometry();
      geom.setAttribute("position",
        new THREE.BufferAttribute(new Float32Array(7 * 3), 3));
      const line = new THREE.Line(geom,
        new THREE.LineBasicMaterial({ color: 0xdddddd }));
      this.fingerLines[f] = line;
      this.scene.add(line);
    }
    for (const u of [...FINGERS, "palm"] as Unit[]) {
      const dot = new THREE.Mesh(
        new THREE.SphereGeometry(0.007),
        new THREE.MeshStandardMaterial({ color: ICON_COLORS.grey }));
      this.cupDots[u] = dot;
      this.scene.add(dot);
    }
    this.cupDots.palm.position.set(0, 0, 0);

    this.ghost = new THREE.Mesh(
      new THREE.SphereGeometry(0.009),
      new THREE.MeshStandardMaterial({
        color: 0xff3030, transparent: true, opacity: 0.5 }));
    this.ghost.visible = false;
    this.scene.add(this.ghost);
  }

  /** Red marker at an unreachable drag target; cleared on the next update. */
  showGhost(at: Vec3): void {
    this.ghost.position.set(at[0], at[1], at[2]);
    this.ghost.visible = true;
  }

  update(state: StateBroadcast): void {
    this.ghost.visible = false;

    for (const f of FINGERS) {
      const s = FINGER_SLICES[f];
      const frames = chainFrames(f, state.q.slice(s, s + 5));
      const attr = this.fingerLines[f].geometry.getAttribute("position");
      // base origin first, then each joint frame, then the cup
      attr.setXYZ(0, ...frames[0].pos);
      frames.forEach((fr, i) => attr.setXYZ(i + 1, ...fr.pos));
      attr.needsUpdate = true;
      const cup = frames[frames.length - 1].pos;
      this.cupDots[f].position.set(cup[0], cup[1], cup[2]);
    }

    for (const u of Object.keys(this.cupDots) as Unit[]) {
      const report = state.suction[u];
      if (!report) continue;
      const icon = sealIcon(report);
      (this.cupDots[u].material as THREE.MeshStandardMaterial)
        .color.setHex(ICON_COLORS[icon.color]);
    }

    for (const [oid, obj] of Object.entries(state.objects)) {
      let mesh = this.objectMeshes.get(oid);
      if (!mesh) {
        mesh = new THREE.Mesh(
          new THREE.BoxGeometry(0.04, 0.04, 0.04),
          new THREE.MeshStandardMaterial({ color: 0x4488cc }));
        this.objectMeshes.set(oid, mesh);
        this.scene.add(mesh);
      }
      mesh.position.set(obj.pos[0], obj.pos[1], obj.pos[2]);
      const [w, x, y, z] = obj.quat;
      mesh.quaternion.set(x, y, z, w); // three uses x,y,z,w ordering
      (mesh.material as THREE.MeshStandardMaterial).color.setHex(
        obj.dropped ? 0x883333 : 0x4488cc);
    }
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
