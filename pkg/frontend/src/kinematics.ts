// Minimal finger kinematics for the drag preview and 3D view.
// The server's applied joints are authoritative; this exists so the
// console can show where a drag would send the fingertip and refuse
// targets the chain cannot reach.

import { FINGER_SLICES, HAND, JointSpec } from "./handModel.js";

export type Vec3 = [number, number, number];
export type Mat3 = [Vec3, Vec3, Vec3];

export interface Pose {
  rot: Mat3;
  pos: Vec3;
}

export function identity(): Pose {
  return { rot: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], pos: [0, 0, 0] };
}

export function quatToMat(q: [number, number, number, number]): Mat3 {
  const [w, x, y, z] = q;
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
  ];
}

function matMul(a: Mat3, b: Mat3): Mat3 {
  const out: Mat3 = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return out;
}

function matVec(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
    a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
    a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
  ];
}

export function compose(a: Pose, b: Pose): Pose {
  return { rot: matMul(a.rot, b.rot), pos: add(matVec(a.rot, b.pos), a.pos) };
}

function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

function axisAngle(axis: Vec3, angle: number): Mat3 {
  const [x, y, z] = axis;
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const t = 1 - c;
  return [
    [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
    [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
    [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
  ];
}

function jointPose(spec: JointSpec, angle: number): Pose {
  const origin: Pose = { rot: quatToMat(spec.originQuat), pos: [...spec.originPos] };
  return compose(origin, { rot: axisAngle(spec.axis, angle), pos: [0, 0, 0] });
}

/** World pose of every link of one finger, cup frame last. */
export function chainFrames(finger: keyof typeof HAND, qf: number[]): Pose[] {
  const spec = HAND[finger];
  const frames: Pose[] = [];
  let t = identity();
  spec.joints.forEach((joint, i) => {
    t = compose(t, jointPose(joint, qf[i]));
    frames.push(t);
  });
  frames.push(compose(t, { rot: quatToMat(spec.cupQuat), pos: [...spec.cupPos] }));
  return frames;
}

export function cupPosition(finger: keyof typeof HAND, q15: number[]): Vec3 {
  const s = FINGER_SLICES[finger];
  const frames = chainFrames(finger, q15.slice(s, s + 5));
  return frames[frames.length - 1].pos;
}

function clampToLimits(finger: keyof typeof HAND, qf: number[]): number[] {
  return qf.map((v, i) => {
    const [lo, hi] = HAND[finger].joints[i].limits;
    return Math.min(hi, Math.max(lo, v));
  });
}

/**
 * Damped least-squares position IK for one finger. Cosmetic: it backs the
 * drag preview only, so position-only convergence to a millimeter is enough.
 * Returns the updated finger joints, or null when the target is unreachable.
 */
export function previewIk(
  finger: keyof typeof HAND,
  target: Vec3,
  qfSeed: number[],
  tol = 1e-3,
  maxIters = 120,
): number[] | null {
  const damping = 1e-4;
  const eps = 1e-6;
  let qf = clampToLimits(finger, [...qfSeed]);

  const tipError = (qs: number[]): Vec3 => {
    const frames = chainFrames(finger, qs);
    const tip = frames[frames.length - 1].pos;
    return [target[0] - tip[0], target[1] - tip[1], target[2] - tip[2]];
  };

  for (let iter = 0; iter < maxIters; iter++) {
    const err = tipError(qf);
    const norm = Math.hypot(...err);
    if (norm <= tol) return qf;

    // numeric 3x5 jacobian
    const jac: number[][] = [[], [], []];
    for (let j = 0; j < 5; j++) {
      const bumped = [...qf];
      bumped[j] += eps;
      const errB = tipError(bumped);
      for (let r = 0; r < 3; r++) jac[r][j] = (err[r] - errB[r]) / eps;
    }

    // dq = J^T (J J^T + damping I)^-1 err, via the 3x3 normal system
    const jjt: number[][] = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
    for (let r = 0; r < 3; r++) {
      for (let c = 0; c < 3; c++) {
        let s = 0;
        for (let j = 0; j < 5; j++) s += jac[r][j] * jac[c][j];
        jjt[r][c] = s + (r === c ? damping : 0);
      }
    }
    const y = solve3(jjt, err);
    if (!y) return null;
    for (let j = 0; j < 5; j++) {
      qf[j] += jac[0][j] * y[0] + jac[1][j] * y[1] + jac[2][j] * y[2];
    }
    qf = clampToLimits(finger, qf);
  }
  return Math.hypot(...tipError(qf)) <= tol ? qf : null;
}

function solve3(a: number[][], b: Vec3): Vec3 | null {
  // Cramer's rule; the damped normal matrix is tiny and well conditioned
  const det =
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
    a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
    a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (Math.abs(det) < 1e-18) return null;
  const col = (k: number): number[][] =>
    a.map((row, i) => row.map((v, j) => (j === k ? b[i] : v)));
  const detOf = (m: number[][]) =>
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
    m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
    m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  return [detOf(col(0)) / det, detOf(col(1)) / det, detOf(col(2)) / det];
}
