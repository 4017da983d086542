"""Synthetic motion corpus: procedural local-action primitives composed
into multi-action motions with templated descriptions and gold graphs.

Every entry is a pure function of (seed, index, grammar config): primitives
draw their parameters from a per-entry random stream derived as
SeedSequence(seed, spawn_key=(index,)), so generation can shard by index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import semgraph
from .errors import CorpusFormatError, VersionError
from .motion import MotionSequence, SkeletonSpec, default_skeleton, extract_features
from .semgraph import EdgeType, GraphEdge, GraphNode, SemanticGraph

CORPUS_VERSION = 1

MANNER_MULTIPLIERS = {
    "slowly": 0.6,
    "calmly": 0.8,
    "briskly": 1.3,
    "quickly": 1.5,
    "energetically": 1.4,
}


@dataclass(frozen=True)
class PrimitiveSpec:
    verb: str
    frame_range: tuple[int, int]
    params: dict = field(default_factory=dict)
    allow_manner: bool = True


def default_primitives() -> dict:
    return {
        "walk-forward": PrimitiveSpec("walks", (40, 60), {"speed": (0.03, 0.06)}),
        "walk-circle": PrimitiveSpec("walks", (48, 60),
                                     {"speed": (0.03, 0.05), "radius": (1.0, 2.0)}),
        "turn": PrimitiveSpec("turns", (20, 36), {"angle": (0.7, 1.6)}),
        "raise-arms": PrimitiveSpec("raises", (30, 48), {"lift": (0.45, 0.65)}),
        "wave": PrimitiveSpec("waves", (30, 50), {"amp": (0.10, 0.20)}),
        "crouch": PrimitiveSpec("crouches", (30, 48), {"depth": (0.18, 0.30)}),
        "jump": PrimitiveSpec("jumps", (26, 40), {"height": (0.15, 0.30)}),
    }


@dataclass(frozen=True)
class GrammarConfig:
    primitives: dict = field(default_factory=default_primitives)
    min_actions: int = 1
    max_actions: int = 4
    manner_prob: float = 0.5
    fps: float = 20.0
    contact_threshold: float = 0.02
    crossfade_frames: int = 5
    # per-entry vertical style field on the upper body; raises the corpus's
    # intrinsic dimensionality the way performer variability does in mocap
    style_joints: tuple = ("pelvis", "head", "left_hand", "right_hand")
    style_components: int = 3
    style_amp_range: tuple = (0.02, 0.06)
    style_freq_range: tuple = (1.5, 6.0)

    def validate(self):
        if not self.primitives:
            raise ValueError("empty primitive set")
        for name, spec in self.primitives.items():
            if name not in _BUILDERS:
                raise ValueError(f"unknown primitive {name!r}")
            lo, hi = spec.frame_range
            if not (8 <= lo <= hi):
                raise ValueError(f"invalid frame range for {name!r}: {spec.frame_range}")
            for key, (plo, phi) in spec.params.items():
                if not (np.isfinite(plo) and np.isfinite(phi) and plo <= phi):
                    raise ValueError(f"invalid parameter range {name!r}.{key}")
        if not (1 <= self.min_actions <= self.max_actions):
            raise ValueError("invalid action count range")


@dataclass
class LocalAction:
    description: str
    start: int
    stop: int


@dataclass
class CorpusEntry:
    id: str
    description: str
    motion: MotionSequence
    gold_graph: SemanticGraph
    local_actions: list[LocalAction]

    def local_action_motion(self, k: int) -> MotionSequence:
        seg = self.local_actions[k]
        return self.motion.slice(seg.start, seg.stop)

    def __eq__(self, other):
        return (isinstance(other, CorpusEntry)
                and self.id == other.id
                and self.description == other.description
                and self.motion == other.motion
                and self.gold_graph.to_dict() == other.gold_graph.to_dict()
                and [(a.description, a.start, a.stop) for a in self.local_actions]
                == [(a.description, a.start, a.stop) for a in other.local_actions])


# ------------------------------------------------------------ primitives

@dataclass
class _ActionInstance:
    positions: np.ndarray       # (L, n_joints, 3) local frame, starts yaw 0
    end_yaw: float
    verb: str
    chunks: list                # [(text, EdgeType)]


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _rest_arrays(skeleton: SkeletonSpec, L: int):
    rest = skeleton.rest_pose()
    xz = np.tile(rest[:, [0, 2]], (L, 1, 1))
    y = np.tile(rest[:, 1], (L, 1))
    return xz, y


def _assemble(skeleton, root_xz, yaw, joint_xz_local, joint_y):
    """World positions from root XZ path, yaw, local XZ offsets and heights."""
    L = len(yaw)
    c, s = np.cos(yaw), np.sin(yaw)
    pos = np.empty((L, skeleton.n_joints, 3))
    lx, lz = joint_xz_local[..., 0], joint_xz_local[..., 1]
    pos[..., 0] = root_xz[:, None, 0] + c[:, None] * lx + s[:, None] * lz
    pos[..., 1] = joint_y
    pos[..., 2] = root_xz[:, None, 1] - s[:, None] * lx + c[:, None] * lz
    return pos


def _gait(skeleton, L, speed, xz, y, half=10, lift_h=0.05, hand_swing=0.08):
    """In-place leg/arm cycling for walking: stance feet cancel body motion."""
    names = skeleton.joint_names
    amp = speed * half / 2.0
    t = np.arange(L)
    for side, shift in (("left", 0), ("right", half)):
        p = (t + shift) % (2 * half)
        stance = p < half
        z = np.where(stance, amp * (1.0 - 2.0 * p / half),
                     -amp + 2.0 * amp * (p - half) / half)
        lift = np.where(stance, 0.0, lift_h * np.sin(np.pi * (p - half) / half))
        for joint in (f"{side}_heel", f"{side}_toe"):
            j = names.index(joint)
            xz[:, j, 1] += z
            y[:, j] += lift
        hand = names.index(f"{('right' if side == 'left' else 'left')}_hand")
        xz[:, hand, 1] += hand_swing * np.sin(np.pi * (t + shift) / half)


def _draw(rng, spec, key):
    lo, hi = spec.params[key]
    return float(rng.uniform(lo, hi))


def _frames(rng, spec):
    lo, hi = spec.frame_range
    return int(rng.integers(lo, hi + 1))


def _build_walk_forward(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    v = _draw(rng, spec, "speed") * mult
    xz, y = _rest_arrays(skeleton, L)
    root_xz = np.zeros((L, 2))
    root_xz[:, 1] = v * np.arange(L)
    _gait(skeleton, L, v, xz, y)
    yaw = np.zeros(L)
    pos = _assemble(skeleton, root_xz, yaw, xz, y)
    return _ActionInstance(pos, 0.0, spec.verb, [("forward", EdgeType.ARGM_DIR)])


def _build_walk_circle(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    v = _draw(rng, spec, "speed") * mult
    r = _draw(rng, spec, "radius")
    sign = 1.0 if rng.random() < 0.5 else -1.0
    omega = sign * v / r
    yaw = omega * np.arange(L)
    root_xz = np.zeros((L, 2))
    for t in range(1, L):
        c, s = np.cos(yaw[t - 1]), np.sin(yaw[t - 1])
        root_xz[t] = root_xz[t - 1] + v * np.array([s, c])
    xz, y = _rest_arrays(skeleton, L)
    _gait(skeleton, L, v, xz, y)
    pos = _assemble(skeleton, root_xz, yaw, xz, y)
    return _ActionInstance(pos, float(yaw[-1]), spec.verb,
                           [("in a circle", EdgeType.ARGM_LOC)])


def _build_turn(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    angle = _draw(rng, spec, "angle") * mult
    sign = 1.0 if rng.random() < 0.5 else -1.0
    yaw = sign * angle * _smoothstep(np.arange(L) / (L - 1))
    xz, y = _rest_arrays(skeleton, L)
    pos = _assemble(skeleton, np.zeros((L, 2)), yaw, xz, y)
    side = "right" if sign > 0 else "left"
    return _ActionInstance(pos, float(yaw[-1]), spec.verb,
                           [(f"to the {side}", EdgeType.ARG4)])


def _build_raise_arms(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    lift = _draw(rng, spec, "lift")
    xz, y = _rest_arrays(skeleton, L)
    ramp = _smoothstep(np.arange(L) / max(1, int(0.6 * L)) * mult)
    for joint in ("left_hand", "right_hand"):
        j = skeleton.joint_names.index(joint)
        y[:, j] += lift * ramp
    pos = _assemble(skeleton, np.zeros((L, 2)), np.zeros(L), xz, y)
    return _ActionInstance(pos, 0.0, spec.verb, [("both arms", EdgeType.ARG1)])


def _build_wave(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    amp = _draw(rng, spec, "amp")
    side = "right" if rng.random() < 0.5 else "left"
    j = skeleton.joint_names.index(f"{side}_hand")
    xz, y = _rest_arrays(skeleton, L)
    ramp = _smoothstep(np.arange(L) / max(1, int(0.3 * L)))
    y[:, j] += 0.55 * ramp
    xz[:, j, 0] += amp * ramp * np.sin(2 * np.pi * mult * np.arange(L) / 15.0)
    pos = _assemble(skeleton, np.zeros((L, 2)), np.zeros(L), xz, y)
    return _ActionInstance(pos, 0.0, spec.verb,
                           [(f"the {side} hand", EdgeType.ARG1)])


def _build_crouch(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    depth = _draw(rng, spec, "depth") * min(mult, 1.2)
    u = np.arange(L) / (L - 1)
    dip = depth * np.where(u < 0.4, _smoothstep(u / 0.4),
                           np.where(u < 0.6, 1.0, 1.0 - _smoothstep((u - 0.6) / 0.4)))
    xz, y = _rest_arrays(skeleton, L)
    for joint in ("root", "pelvis", "head", "left_hand", "right_hand"):
        j = skeleton.joint_names.index(joint)
        y[:, j] -= dip
    pos = _assemble(skeleton, np.zeros((L, 2)), np.zeros(L), xz, y)
    return _ActionInstance(pos, 0.0, spec.verb, [("down", EdgeType.ARGM_DIR)])


def _build_jump(rng, spec, skeleton, mult):
    L = _frames(rng, spec)
    height = _draw(rng, spec, "height") * mult
    dip = 0.12
    u = np.arange(L) / (L - 1)
    p = (u - 0.3) / 0.4
    delta = np.where(
        u < 0.3, -dip * _smoothstep(u / 0.3),
        np.where(u > 0.7, -dip * (1.0 - _smoothstep((u - 0.7) / 0.3)),
                 -dip + (height + dip) * 4.0 * p * (1.0 - p)))
    xz, y = _rest_arrays(skeleton, L)
    for joint in ("root", "pelvis", "head", "left_hand", "right_hand"):
        j = skeleton.joint_names.index(joint)
        y[:, j] += delta
    for joint in ("left_heel", "right_heel", "left_toe", "right_toe"):
        j = skeleton.joint_names.index(joint)
        y[:, j] += np.maximum(delta, 0.0)
    pos = _assemble(skeleton, np.zeros((L, 2)), np.zeros(L), xz, y)
    return _ActionInstance(pos, 0.0, spec.verb, [])


_BUILDERS = {
    "walk-forward": _build_walk_forward,
    "walk-circle": _build_walk_circle,
    "turn": _build_turn,
    "raise-arms": _build_raise_arms,
    "wave": _build_wave,
    "crouch": _build_crouch,
    "jump": _build_jump,
}


# ------------------------------------------------------------ composition

def _apply_style_field(positions, rng, config: GrammarConfig,
                       skeleton: SkeletonSpec):
    """Smooth per-entry vertical offsets on selected joints (in place)."""
    if not config.style_joints or config.style_components <= 0:
        return
    L = len(positions)
    t = np.arange(L) / max(1, L - 1)
    lo, hi = config.style_amp_range
    for joint in config.style_joints:
        j = skeleton.joint_names.index(joint)
        delta = np.zeros(L)
        for _ in range(config.style_components):
            amp = rng.uniform(lo, hi)
            freq = rng.uniform(*config.style_freq_range)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            delta += amp * np.sin(2.0 * np.pi * freq * t + phase)
        positions[:, j, 1] += delta


def _assemble_sentence(actions: list[_ActionInstance]):
    tokens = ["a", "person"]
    graph = SemanticGraph(tokens=tokens)  # tokens extended in place below
    spec_counter = 0
    for i, act in enumerate(actions):
        if i:
            tokens.append("and")
        verb_pos = len(tokens)
        tokens.append(act.verb)
        action = GraphNode(f"a{i}", "action", act.verb, (verb_pos, verb_pos + 1))
        graph.nodes.append(action)
        graph.edges.append(GraphEdge(action.id, "m0", EdgeType.ARGM_MA))
        subject = GraphNode(f"s{spec_counter}", "specific", "a person", (0, 2))
        spec_counter += 1
        graph.nodes.append(subject)
        graph.edges.append(GraphEdge(subject.id, action.id, EdgeType.ARG0))
        for text, role in act.chunks:
            words = text.split()
            span = (len(tokens), len(tokens) + len(words))
            tokens.extend(words)
            node = GraphNode(f"s{spec_counter}", "specific", text, span)
            spec_counter += 1
            graph.nodes.append(node)
            graph.edges.append(GraphEdge(node.id, action.id, role))
    motion_node = GraphNode("m0", "motion", " ".join(tokens), (0, len(tokens)))
    graph.nodes.insert(0, motion_node)
    return " ".join(tokens), graph


def _local_description(act: _ActionInstance) -> str:
    return " ".join(["a person", act.verb] + [text for text, _ in act.chunks])


def generate_entry(seed: int, index: int, config: GrammarConfig,
                   skeleton: SkeletonSpec) -> CorpusEntry:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    names = sorted(config.primitives)
    n_actions = int(rng.integers(config.min_actions, config.max_actions + 1))
    actions = []
    for _ in range(n_actions):
        name = names[int(rng.integers(len(names)))]
        spec = config.primitives[name]
        manner = None
        mult = 1.0
        if spec.allow_manner and rng.random() < config.manner_prob:
            manner = sorted(MANNER_MULTIPLIERS)[int(rng.integers(len(MANNER_MULTIPLIERS)))]
            mult = MANNER_MULTIPLIERS[manner]
        inst = _BUILDERS[name](rng, spec, skeleton, mult)
        if manner is not None:
            inst.chunks.append((manner, EdgeType.ARGM_MNR))
        actions.append(inst)

    # chain the segments: each starts at the previous end pose
    yaw_acc = 0.0
    offset = np.zeros(2)
    placed = []
    bounds = []
    cursor = 0
    for inst in actions:
        pos = inst.positions
        c, s = np.cos(yaw_acc), np.sin(yaw_acc)
        world = np.empty_like(pos)
        world[..., 0] = offset[0] + c * pos[..., 0] + s * pos[..., 2]
        world[..., 1] = pos[..., 1]
        world[..., 2] = offset[1] - s * pos[..., 0] + c * pos[..., 2]
        placed.append(world)
        bounds.append((cursor, cursor + len(pos)))
        cursor += len(pos)
        offset = world[-1, 0, [0, 2]]
        yaw_acc += inst.end_yaw

    positions = np.concatenate(placed, axis=0)
    cf = config.crossfade_frames
    for start, _ in bounds[1:]:
        anchor = positions[start - 1].copy()
        for k in range(min(cf, len(positions) - start)):
            w = (k + 1.0) / (cf + 1.0)
            positions[start + k] = (1.0 - w) * anchor + w * positions[start + k]

    _apply_style_field(positions, rng, config, skeleton)
    motion = extract_features(positions, skeleton, config.contact_threshold,
                              config.fps)
    description, gold = _assemble_sentence(actions)
    local = [LocalAction(_local_description(a), b[0], b[1])
             for a, b in zip(actions, bounds)]
    return CorpusEntry(f"entry-{index:06d}", description, motion, gold, local)


def generate_corpus(seed: int, size: int,
                    config: GrammarConfig | None = None,
                    skeleton: SkeletonSpec | None = None) -> list[CorpusEntry]:
    if size < 1:
        raise ValueError("size must be >= 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    config = config or GrammarConfig()
    config.validate()
    skeleton = skeleton or default_skeleton()
    return [generate_entry(seed, i, config, skeleton) for i in range(size)]


# ------------------------------------------------------------ persistence

def save_corpus(entries: list[CorpusEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            record = {
                "v": CORPUS_VERSION,
                "id": e.id,
                "description": e.description,
                "fps": e.motion.fps,
                "frames": e.motion.frames.tolist(),
                "gold_graph": e.gold_graph.to_dict(),
                "local_actions": [{"description": a.description,
                                   "start": a.start, "stop": a.stop}
                                  for a in e.local_actions],
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_corpus(path) -> list[CorpusEntry]:
    entries = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8")
            stripped = line.strip()
            if stripped:
                try:
                    record = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(
                        f"malformed corpus line: {exc.msg}",
                        offset=offset + exc.pos) from exc
                if not isinstance(record, dict) or "v" not in record:
                    raise CorpusFormatError("corpus line missing version field",
                                            offset=offset)
                if record["v"] != CORPUS_VERSION:
                    raise VersionError(
                        f"unsupported corpus version {record['v']!r} "
                        f"(expected {CORPUS_VERSION})")
                try:
                    entries.append(CorpusEntry(
                        id=record["id"],
                        description=record["description"],
                        motion=MotionSequence(np.asarray(record["frames"]),
                                              record["fps"]),
                        gold_graph=SemanticGraph.from_dict(record["gold_graph"]),
                        local_actions=[LocalAction(a["description"], a["start"],
                                                   a["stop"])
                                       for a in record["local_actions"]],
                    ))
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusFormatError(f"invalid corpus record: {exc}",
                                            offset=offset) from exc
            offset += len(raw)
    return entries
