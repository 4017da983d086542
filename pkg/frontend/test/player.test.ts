import { describe, expect, it } from "vitest";

import {
  boneSegments,
  defaultViewport,
  frameIndexAt,
  projectFront,
  projectTop,
  tracePoints,
} from "../src/player.js";
import type { MotionPayload } from "../src/types.js";

const motion: MotionPayload = {
  skeleton: {
    joint_names: ["root", "pelvis", "head"],
    parent_index: [-1, 0, 0],
    bone_lengths: [0.9, 0.1, 0.6],
    heel_toe_indices: [[1, 1], [2, 2]],
  },
  fps: 20,
  n_frames: 3,
  positions: [
    [[0, 0.9, 0], [0, 0.8, 0], [0, 1.5, 0]],
    [[0.2, 0.9, 0.1], [0.2, 0.8, 0.1], [0.2, 1.5, 0.1]],
    [[0.4, 0.9, 0.2], [0.4, 0.8, 0.2], [0.4, 1.5, 0.2]],
  ],
};

describe("projection", () => {
  it("maps world up to screen up and x to the right", () => {
    const v = defaultViewport(200, 220);
    const [x0, y0] = projectFront(v, 0, 0);
    const [x1, y1] = projectFront(v, 1, 1);
    expect(x1).toBeGreaterThan(x0);
    expect(y1).toBeLessThan(y0);
    expect(x0).toBe(100);
  });

  it("maps +z upward in the top view", () => {
    const v = defaultViewport(200, 220);
    const [, yNear] = projectTop(v, 0, 0);
    const [, yFar] = projectTop(v, 0, 2);
    expect(yFar).toBeLessThan(yNear);
  });
});

describe("frame timing", () => {
  it("converts elapsed seconds at the motion fps", () => {
    expect(frameIndexAt(motion, 0)).toBe(0);
    expect(frameIndexAt(motion, 0.049)).toBe(0);
    expect(frameIndexAt(motion, 0.05)).toBe(1);
    expect(frameIndexAt(motion, 0.1)).toBe(2);
  });

  it("loops by default and clamps otherwise", () => {
    expect(frameIndexAt(motion, 0.15)).toBe(0);
    expect(frameIndexAt(motion, 0.15, false)).toBe(2);
  });
});

describe("geometry", () => {
  it("emits one segment per non-root joint, root-relative", () => {
    const v = defaultViewport(300, 300);
    const segments = boneSegments(motion, 1, v);
    expect(segments).toHaveLength(2);
    // camera follows the root: the root-joint end of each bone stays centered
    const pelvis = segments[0]!;
    expect(pelvis.x2).toBeCloseTo(v.centerX);
  });

  it("traces the root path up to the current frame", () => {
    const v = defaultViewport(300, 300);
    expect(tracePoints(motion, 0, v)).toHaveLength(1);
    const pts = tracePoints(motion, 2, v);
    expect(pts).toHaveLength(3);
    expect(pts[2]![0]).toBeGreaterThan(pts[0]![0]);
    expect(pts[2]![1]).toBeLessThan(pts[0]![1]);
  });
});
