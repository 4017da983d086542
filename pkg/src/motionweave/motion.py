"""Skeleton definition and the per-frame motion feature representation.

A pose is a flat tuple (r_a, r_x, r_z, r_y, j_p, j_v, j_r, c_f): root yaw
velocity, root planar velocities in the facing frame, root height, then
per feature joint root-space positions (3), root-space velocities (3) and
6D bone rotations, and finally four binary heel/toe contact flags. With 8
feature joints the frame dimension is 4 + 24 + 24 + 48 + 4 = 104.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SkeletonSpec:
    joint_names: tuple[str, ...]
    parent_index: tuple[int, ...]          # -1 marks the root (joint 0)
    bone_lengths: tuple[float, ...]        # root entry holds rest height
    heel_toe_indices: tuple[tuple[int, int], tuple[int, int]]
    rest_offsets: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        n = len(self.joint_names)
        if len(self.parent_index) != n or len(self.bone_lengths) != n:
            raise ValueError("per-joint field lengths disagree")
        if self.parent_index[0] != -1:
            raise ValueError("joint 0 must be the root")
        for j, p in enumerate(self.parent_index[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {j} has invalid parent {p}")
        if any(b <= 0 for b in self.bone_lengths):
            raise ValueError("bone lengths must be positive")
        for pair in self.heel_toe_indices:
            for idx in pair:
                if not 0 < idx < n:
                    raise ValueError(f"heel/toe index {idx} out of range")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_feature_joints(self) -> int:
        """Non-root joints carried in the pose feature tuple."""
        return self.n_joints - 1

    @property
    def frame_dim(self) -> int:
        return 8 + 12 * self.n_feature_joints

    @property
    def contact_joints(self) -> tuple[int, int, int, int]:
        (hl, tl), (hr, tr) = self.heel_toe_indices
        return (hl, tl, hr, tr)

    def rest_pose(self) -> np.ndarray:
        """World joint positions of the rest pose, root at the origin in XZ."""
        return np.asarray(self.rest_offsets, dtype=np.float64)


_REST = {
    "root": (0.0, 0.90, 0.0),
    "pelvis": (0.0, 0.78, 0.0),
    "head": (0.0, 1.55, 0.0),
    "left_hand": (-0.45, 1.00, 0.05),
    "right_hand": (0.45, 1.00, 0.05),
    "left_heel": (-0.12, 0.02, -0.04),
    "right_heel": (0.12, 0.02, -0.04),
    "left_toe": (-0.12, 0.01, 0.14),
    "right_toe": (0.12, 0.01, 0.14),
}

_PARENTS = {"root": -1, "pelvis": 0, "head": 0, "left_hand": 0,
            "right_hand": 0, "left_heel": 1, "right_heel": 1,
            "left_toe": 5, "right_toe": 6}


def default_skeleton() -> SkeletonSpec:
    names = tuple(_REST.keys())
    rest = np.array([_REST[n] for n in names])
    parents = tuple(_PARENTS[n] for n in names)
    lengths = [rest[0][1]]  # root: rest height above ground
    for j in range(1, len(names)):
        lengths.append(float(np.linalg.norm(rest[j] - rest[parents[j]])))
    return SkeletonSpec(
        joint_names=names,
        parent_index=parents,
        bone_lengths=tuple(lengths),
        heel_toe_indices=((5, 7), (6, 8)),
        rest_offsets=tuple(map(tuple, rest)),
    )


@dataclass
class MotionSequence:
    frames: np.ndarray          # (L, frame_dim) float
    fps: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or len(self.frames) < 1:
            raise ValueError("frames must be a non-empty (L, dim) array")

    def __len__(self):
        return len(self.frames)

    def slice(self, start: int, stop: int) -> "MotionSequence":
        return MotionSequence(self.frames[start:stop].copy(), self.fps)

    def __eq__(self, other):
        return (isinstance(other, MotionSequence) and self.fps == other.fps
                and self.frames.shape == other.frames.shape
                and bool(np.array_equal(self.frames, other.frames)))


def yaw_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _estimate_yaw(positions: np.ndarray, skeleton: SkeletonSpec) -> np.ndarray:
    """Facing angle per frame from the body's left-to-right axis."""
    names = skeleton.joint_names
    right = [names.index(n) for n in ("right_hand", "right_heel", "right_toe")]
    left = [names.index(n) for n in ("left_hand", "left_heel", "left_toe")]
    lat = positions[:, right].mean(axis=1) - positions[:, left].mean(axis=1)
    theta = np.arctan2(-lat[:, 2], lat[:, 0])
    return np.unwrap(theta)


def foot_contacts(heel_toe_speeds: np.ndarray, threshold: float) -> np.ndarray:
    """Binary contact flags: 1 where speed is strictly below the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    speeds = np.asarray(heel_toe_speeds, dtype=np.float64)
    if np.any(speeds < 0):
        raise ValueError("speeds must be non-negative")
    return (speeds < threshold).astype(np.float64)


def _bone_rotations_6d(local_pos: np.ndarray, skeleton: SkeletonSpec) -> np.ndarray:
    """Per feature joint 6D rotation built from the bone direction.

    The first 3-vector is the unit bone direction; the second is the
    Gram-Schmidt completion of a reference axis against it.
    """
    L = local_pos.shape[0]
    nf = skeleton.n_feature_joints
    out = np.zeros((L, nf, 6))
    for j in range(1, skeleton.n_joints):
        parent = skeleton.parent_index[j]
        pp = local_pos[:, parent] if parent > 0 else np.zeros((L, 3))
        d = local_pos[:, j] - pp
        norm = np.linalg.norm(d, axis=1, keepdims=True)
        a1 = np.divide(d, norm, out=np.tile([0.0, 1.0, 0.0], (L, 1)),
                       where=norm > 1e-9)
        ref = np.tile([0.0, 1.0, 0.0], (L, 1))
        parallel = np.abs(a1[:, 1]) > 0.9
        ref[parallel] = [1.0, 0.0, 0.0]
        a2 = ref - (ref * a1).sum(axis=1, keepdims=True) * a1
        a2 /= np.linalg.norm(a2, axis=1, keepdims=True)
        out[:, j - 1, :3] = a1
        out[:, j - 1, 3:] = a2
    return out


def extract_features(raw_positions: np.ndarray, skeleton: SkeletonSpec,
                     contact_threshold: float = 0.02,
                     fps: float = 20.0) -> MotionSequence:
    """Convert world joint positions (L, n_joints, 3) into pose features."""
    pos = np.asarray(raw_positions, dtype=np.float64)
    if pos.ndim != 3 or pos.shape[1] != skeleton.n_joints or pos.shape[2] != 3:
        raise ValueError(
            f"expected (L, {skeleton.n_joints}, 3) positions, got {pos.shape}")
    if pos.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions contain non-finite values")

    L = pos.shape[0]
    root = pos[:, 0]
    theta = _estimate_yaw(pos, skeleton)

    r_a = np.empty(L)
    r_a[:-1] = np.diff(theta)
    r_a[-1] = r_a[-2] if L > 1 else 0.0

    c, s = np.cos(theta), np.sin(theta)
    dxz = np.empty((L, 2))
    dxz[:-1] = np.diff(root[:, [0, 2]], axis=0)
    dxz[-1] = dxz[-2]
    r_x = c * dxz[:, 0] - s * dxz[:, 1]
    r_z = s * dxz[:, 0] + c * dxz[:, 1]
    r_y = root[:, 1]

    # root-space joint positions: translate to root, rotate by -yaw
    rel = pos[:, 1:] - root[:, None, :]
    local = np.empty_like(rel)
    local[..., 0] = c[:, None] * rel[..., 0] - s[:, None] * rel[..., 2]
    local[..., 1] = rel[..., 1]
    local[..., 2] = s[:, None] * rel[..., 0] + c[:, None] * rel[..., 2]

    j_v = np.empty_like(local)
    j_v[:-1] = np.diff(local, axis=0)
    j_v[-1] = j_v[-2]

    local_all = np.concatenate([np.zeros((L, 1, 3)), local], axis=1)
    j_r = _bone_rotations_6d(local_all, skeleton)

    contact = pos[:, list(skeleton.contact_joints)]
    speeds = np.empty((L, 4))
    speeds[:-1] = np.linalg.norm(np.diff(contact, axis=0), axis=2)
    speeds[-1] = speeds[-2]
    c_f = foot_contacts(speeds, contact_threshold)

    nf = skeleton.n_feature_joints
    frames = np.concatenate([
        r_a[:, None], r_x[:, None], r_z[:, None], r_y[:, None],
        local.reshape(L, 3 * nf), j_v.reshape(L, 3 * nf),
        j_r.reshape(L, 6 * nf), c_f,
    ], axis=1)
    return MotionSequence(frames, fps)


def integrate_root(frames: np.ndarray, origin_xz=(0.0, 0.0),
                   initial_yaw: float = 0.0):
    """Integrate (r_a, r_x, r_z, r_y) back into root positions and yaw."""
    L = len(frames)
    r_a, r_x, r_z, r_y = frames[:, 0], frames[:, 1], frames[:, 2], frames[:, 3]
    theta = np.empty(L)
    theta[0] = initial_yaw
    theta[1:] = initial_yaw + np.cumsum(r_a[:-1])
    root = np.empty((L, 3))
    root[0] = (origin_xz[0], r_y[0], origin_xz[1])
    c, s = np.cos(theta), np.sin(theta)
    dx = c * r_x + s * r_z
    dz = -s * r_x + c * r_z
    root[1:, 0] = origin_xz[0] + np.cumsum(dx[:-1])
    root[1:, 2] = origin_xz[1] + np.cumsum(dz[:-1])
    root[:, 1] = r_y
    return root, theta


def features_to_positions(motion: MotionSequence, skeleton: SkeletonSpec,
                          origin_xz=(0.0, 0.0), initial_yaw: float = 0.0
                          ) -> np.ndarray:
    """Rebuild world joint positions from pose features for playback."""
    frames = motion.frames
    nf = skeleton.n_feature_joints
    if frames.shape[1] != skeleton.frame_dim:
        raise ValueError("frame dimension does not match skeleton")
    root, theta = integrate_root(frames, origin_xz, initial_yaw)
    local = frames[:, 4:4 + 3 * nf].reshape(len(frames), nf, 3)
    c, s = np.cos(theta), np.sin(theta)
    world = np.empty_like(local)
    world[..., 0] = c[:, None] * local[..., 0] + s[:, None] * local[..., 2]
    world[..., 1] = local[..., 1]
    world[..., 2] = -s[:, None] * local[..., 0] + c[:, None] * local[..., 2]
    world += root[:, None, :]
    return np.concatenate([root[:, None, :], world], axis=1)


def playback_dict(motion: MotionSequence, skeleton: SkeletonSpec) -> dict:
    """Standalone JSON-ready payload: skeleton spec plus raw joint positions."""
    positions = features_to_positions(motion, skeleton)
    return {
        "skeleton": {
            "joint_names": list(skeleton.joint_names),
            "parent_index": list(skeleton.parent_index),
            "bone_lengths": list(skeleton.bone_lengths),
            "heel_toe_indices": [list(p) for p in skeleton.heel_toe_indices],
        },
        "fps": motion.fps,
        "n_frames": len(motion),
        "positions": positions.tolist(),
    }
