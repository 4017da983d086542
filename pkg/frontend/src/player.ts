// Skeleton playback: orthographic front view plus a top-down root trace.

import type { MotionPayload } from "./types.js";

export interface Segment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface Viewport {
  width: number;
  height: number;
  scale: number;      // pixels per meter
  centerX: number;
  centerY: number;    // pixel row of world y = 0
}

export function defaultViewport(width: number, height: number): Viewport {
  return {
    width,
    height,
    scale: height / 2.2,
    centerX: width / 2,
    centerY: height * 0.92,
  };
}

/** World (x, y[, z]) to front-view pixels: x right, y up. */
export function projectFront(
  v: Viewport,
  x: number,
  y: number,
): [number, number] {
  return [v.centerX + v.scale * x, v.centerY - v.scale * y];
}

/** World (x, z) to top-view pixels centered on the viewport. */
export function projectTop(
  v: Viewport,
  x: number,
  z: number,
  scale = 0.35,
): [number, number] {
  return [
    v.centerX + v.scale * scale * x,
    v.height / 2 - v.scale * scale * z,
  ];
}

export function frameIndexAt(
  motion: Pick<MotionPayload, "fps" | "n_frames">,
  elapsedSeconds: number,
  loop = true,
): number {
  const raw = Math.floor(elapsedSeconds * motion.fps);
  if (motion.n_frames <= 0) return 0;
  if (loop) return ((raw % motion.n_frames) + motion.n_frames) % motion.n_frames;
  return Math.min(raw, motion.n_frames - 1);
}

/** Bone line segments for one frame in front view, camera following the
 * root horizontally. */
export function boneSegments(
  motion: MotionPayload,
  frame: number,
  viewport: Viewport,
): Segment[] {
  const positions = motion.positions[frame];
  if (!positions) return [];
  const root = positions[0] ?? [0, 0, 0];
  const segments: Segment[] = [];
  motion.skeleton.parent_index.forEach((parent, joint) => {
    if (parent < 0) return;
    const a = positions[joint];
    const b = positions[parent];
    if (!a || !b) return;
    const [x1, y1] = projectFront(viewport, (a[0] ?? 0) - (root[0] ?? 0), a[1] ?? 0);
    const [x2, y2] = projectFront(viewport, (b[0] ?? 0) - (root[0] ?? 0), b[1] ?? 0);
    segments.push({ x1, y1, x2, y2 });
  });
  return segments;
}

/** Root path points in top view up to (and including) the given frame. */
export function tracePoints(
  motion: MotionPayload,
  frame: number,
  viewport: Viewport,
): [number, number][] {
  const points: [number, number][] = [];
  for (let t = 0; t <= frame && t < motion.n_frames; t++) {
    const root = motion.positions[t]?.[0];
    if (!root) continue;
    points.push(projectTop(viewport, root[0] ?? 0, root[2] ?? 0));
  }
  return points;
}

export class Player {
  private motion: MotionPayload | null = null;
  private playing = false;
  private startedAt = 0;
  private pausedAt = 0;
  private raf = 0;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    readonly onFrame?: (frame: number) => void,
  ) {}

  setMotion(motion: MotionPayload): void {
    this.motion = motion;
    this.pausedAt = 0;
    this.playing = false;
    this.drawFrame(0);
  }

  get frameCount(): number {
    return this.motion?.n_frames ?? 0;
  }

  play(): void {
    if (!this.motion || this.playing) return;
    this.playing = true;
    this.startedAt = performance.now() - this.pausedAt * 1000;
    const tick = () => {
      if (!this.playing || !this.motion) return;
      const elapsed = (performance.now() - this.startedAt) / 1000;
      this.drawFrame(frameIndexAt(this.motion, elapsed));
      this.raf = requestAnimationFrame(tick);
    };
    this.raf = requestAnimationFrame(tick);
  }

  pause(): void {
    if (!this.playing) return;
    this.playing = false;
    cancelAnimationFrame(this.raf);
    this.pausedAt = (performance.now() - this.startedAt) / 1000;
  }

  scrub(frame: number): void {
    this.pause();
    if (!this.motion) return;
    this.pausedAt = frame / this.motion.fps;
    this.drawFrame(frame);
  }

  drawFrame(frame: number): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.motion) return;
    const viewport = defaultViewport(this.canvas.width, this.canvas.height);
    ctx.clearRect(0, 0, viewport.width, viewport.height);

    ctx.strokeStyle = "#2b2b40";
    ctx.beginPath();
    ctx.moveTo(0, viewport.centerY);
    ctx.lineTo(viewport.width, viewport.centerY);
    ctx.stroke();

    ctx.strokeStyle = "#5ad1a5";
    ctx.lineWidth = 3;
    ctx.lineCap = "round";
    for (const s of boneSegments(this.motion, frame, viewport)) {
      ctx.beginPath();
      ctx.moveTo(s.x1, s.y1);
      ctx.lineTo(s.x2, s.y2);
      ctx.stroke();
    }

    ctx.strokeStyle = "#7f8cff";
    ctx.lineWidth = 1;
    const trace = tracePoints(this.motion, frame, viewport);
    if (trace.length > 1) {
      ctx.beginPath();
      const first = trace[0]!;
      ctx.moveTo(first[0], first[1]);
      for (const [x, y] of trace.slice(1)) ctx.lineTo(x, y);
      ctx.stroke();
    }
    this.onFrame?.(frame);
  }
}
