// Canonical hand description, mirrored from the simulator's bundled
// hand file so the console can draw and preview without a fetch.
// If the server ever serves a different hand this copy only affects
// the preview; applied state always comes from broadcasts.

export interface JointSpec {
  axis: [number, number, number];
  originQuat: [number, number, number, number]; // w, x, y, z
  originPos: [number, number, number];
  limits: [number, number];
}

export interface FingerSpec {
  joints: JointSpec[];
  cupQuat: [number, number, number, number];
  cupPos: [number, number, number];
}

const H = 0.7071067811865476;

function distalJoints(
  baseQuat: [number, number, number, number],
  basePos: [number, number, number],
): JointSpec[] {
  // shared 5R layout: yaw at the base, three pitch joints over
  // 50/40/30 mm links, then the cup-axis spin joint
  return [
    { axis: [0, 0, 1], originQuat: baseQuat, originPos: basePos, limits: [-1.57, 1.57] },
    { axis: [0, 1, 0], originQuat: [1, 0, 0, 0], originPos: [0, 0, 0], limits: [-1.57, 1.57] },
    { axis: [0, 1, 0], originQuat: [1, 0, 0, 0], originPos: [0.05, 0, 0], limits: [-1.57, 1.57] },
    { axis: [0, 1, 0], originQuat: [1, 0, 0, 0], originPos: [0.04, 0, 0], limits: [-1.57, 1.57] },
    { axis: [1, 0, 0], originQuat: [1, 0, 0, 0], originPos: [0.03, 0, 0], limits: [-3.14, 3.14] },
  ];
}

const CUP: Pick<FingerSpec, "cupQuat" | "cupPos"> = {
  cupQuat: [H, 0, H, 0],
  cupPos: [0.012, 0, 0],
};

export const HAND: Record<"thumb" | "index" | "ring", FingerSpec> = {
  thumb: { joints: distalJoints([H, 0, -H, 0], [-0.085, 0, -0.02]), ...CUP },
  index: { joints: distalJoints([0, 0, 0, 1], [0.065, 0.035, 0.095]), ...CUP },
  ring: { joints: distalJoints([H, -H, 0, 0], [0, -0.14, 0.05]), ...CUP },
};

export const FINGER_SLICES = { thumb: 0, index: 5, ring: 10 } as const;
