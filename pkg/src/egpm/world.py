"""Procedural egocentric-manipulation world with an exact dynamics oracle.

Episodes are pure functions of (seed, config): a dominant hand starts
within one step of a colored block, grasps it on contact, and carries it
to a named goal region while a second hand idles nearby. Frames, action
vectors, and instruction text are all derived from the same oracle state
sequence, so action/frame alignment is exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, SchemaError
from .seeding import stream

HAND4X2 = "hand4x2"
ROBOT7D = "robot7d"

COLORS = {
    "red": (0.85, 0.20, 0.20),
    "green": (0.20, 0.80, 0.25),
    "blue": (0.25, 0.35, 0.90),
    "yellow": (0.90, 0.85, 0.20),
    "purple": (0.65, 0.30, 0.80),
    "orange": (0.95, 0.55, 0.15),
}
COLOR_NAMES = list(COLORS)

PLACES = {
    "top-left": (0.20, 0.20),
    "top-right": (0.80, 0.20),
    "bottom-left": (0.20, 0.80),
    "bottom-right": (0.80, 0.80),
    "center": (0.50, 0.50),
}
PLACE_NAMES = list(PLACES)

BG_COLOR = (0.12, 0.12, 0.14)
GOAL_COLOR = (0.24, 0.24, 0.28)
HAND_COLOR = (0.95, 0.78, 0.62)
IDLE_HAND_COLOR = (0.55, 0.78, 0.95)

END_TOKEN = "<end>"

# 64-token vocabulary: specials, digits (for the spelled-coordinate action
# arm), colors, places, and enough verbs/nouns for the templates.
VOCAB = (
    [END_TOKEN]
    + [str(d) for d in range(10)] + ["."]
    + COLOR_NAMES
    + PLACE_NAMES
    + ["move", "the", "block", "to", "hand", "arm", "moves", "toward",
       "grasp", "then", "place", "pick", "up", "put", "drop", "at", "near",
       "goal", "target", "object", "robot", "holding", "slide", "push",
       "reach", "box", "left", "right", "top", "bottom", "middle", "now",
       "next", "with", "and", "a", "shift", "carry", "hold", "go", "it"]
)
assert len(VOCAB) == 64, len(VOCAB)
TOKEN_ID = {tok: i for i, tok in enumerate(VOCAB)}
END_ID = TOKEN_ID[END_TOKEN]


def encode_tokens(words):
    return [TOKEN_ID[w] for w in words]


def decode_tokens(ids):
    return [VOCAB[i] for i in ids]


@dataclass(frozen=True)
class WorldConfig:
    frame_size: int = 32
    n_objects: int = 2
    horizon: int = 4
    speed: float = 0.15
    hand_half: float = 0.06
    obj_half_min: float = 0.045
    obj_half_max: float = 0.07
    goal_radius: float = 0.05
    goal_render_half: float = 0.07
    idle_amp: float = 0.02
    schema: str = HAND4X2

    def validate(self):
        if self.frame_size < 16:
            raise ConfigError(f"frame_size must be >= 16, got {self.frame_size}")
        if not 1 <= self.n_objects <= 4:
            raise ConfigError(f"n_objects must be in 1..4, got {self.n_objects}")
        if not 3 <= self.horizon <= 16:
            raise ConfigError(f"horizon must be in 3..16, got {self.horizon}")
        if self.speed <= 0 or self.hand_half <= 0:
            raise ConfigError("speed and hand_half must be positive")
        if self.schema not in (HAND4X2, ROBOT7D):
            raise ConfigError(f"unknown schema {self.schema!r}")
        if 0.9 * (self.horizon - 2) * self.speed < 0.11:
            raise ConfigError("horizon*speed too small for a reachable goal")
        return self

    @property
    def action_dim(self):
        return 8 if self.schema == HAND4X2 else 7


@dataclass(frozen=True)
class ActionVector:
    schema: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", vals)
        want = 8 if self.schema == HAND4X2 else 7
        if self.schema not in (HAND4X2, ROBOT7D):
            raise SchemaError(f"unknown schema {self.schema!r}")
        if vals.shape != (want,):
            raise SchemaError(f"{self.schema} action needs {want} values, got shape {vals.shape}")

    def boxes(self):
        if self.schema != HAND4X2:
            raise SchemaError(f"boxes() requires {HAND4X2}, got {self.schema}")
        return self.values[:4], self.values[4:]


@dataclass(frozen=True)
class WorldState:
    hands: np.ndarray              # [2, 4] boxes (x1, y1, x2, y2); row 0 dominant
    obj_centers: np.ndarray        # [n, 2]
    obj_halves: np.ndarray         # [n]
    obj_colors: np.ndarray         # [n] color ids
    target_object: int
    held_object: int | None
    goal_center: np.ndarray        # [2]
    idle_anchor: np.ndarray        # [2]
    idle_phase: float
    heading: float                 # last dominant move direction (robot pose yaw)
    tick: int

    def dominant_center(self):
        b = self.hands[0]
        return np.array([(b[0] + b[2]) / 2, (b[1] + b[3]) / 2], dtype=np.float32)


def _box_from_center(c, half):
    return np.array([c[0] - half, c[1] - half, c[0] + half, c[1] + half], dtype=np.float32)


def _idle_box(anchor, phase, tick, amp, half):
    c = np.array([anchor[0] + amp * math.sin(0.9 * tick + phase),
                  anchor[1] + amp * math.cos(0.7 * tick + phase)], dtype=np.float32)
    return _box_from_center(c, half)


def _contains(box, point, slack=0.0):
    return (box[0] - slack <= point[0] <= box[2] + slack
            and box[1] - slack <= point[1] <= box[3] + slack)


def step_dynamics(s: WorldState, cfg: WorldConfig) -> WorldState:
    """One oracle step; pure. A completed task is a frozen fixed point."""
    center = s.dominant_center()
    goal = s.goal_center if s.held_object is not None else s.obj_centers[s.target_object]
    delta = goal - center
    dist = float(np.hypot(delta[0], delta[1]))
    if s.held_object == s.target_object and dist == 0.0:
        return s

    tick = s.tick + 1
    heading = s.heading
    if dist <= cfg.speed:
        new_center = goal.astype(np.float32)
    else:
        step = delta / dist * cfg.speed
        new_center = (center + step).astype(np.float32)
    if dist > 0:
        heading = float(math.atan2(delta[1], delta[0]))

    held = s.held_object
    obj_centers = s.obj_centers
    hand_box = _box_from_center(new_center, cfg.hand_half)
    if held is None and _contains(hand_box, s.obj_centers[s.target_object]):
        held = s.target_object
    if held is not None:
        obj_centers = s.obj_centers.copy()
        obj_centers[held] = new_center

    hands = np.stack([hand_box,
                      _idle_box(s.idle_anchor, s.idle_phase, tick, cfg.idle_amp, cfg.hand_half)])
    return replace(s, hands=hands, obj_centers=obj_centers, held_object=held,
                   heading=heading, tick=tick)


def _px(v, size):
    return int(np.clip(round(float(v) * (size - 1)), 0, size - 1))


def _fill_box(frame, box, color, size):
    x1, y1, x2, y2 = (_px(box[0], size), _px(box[1], size), _px(box[2], size), _px(box[3], size))
    frame[y1:y2 + 1, x1:x2 + 1] = color


def _outline_box(frame, box, color, size):
    x1, y1, x2, y2 = (_px(box[0], size), _px(box[1], size), _px(box[2], size), _px(box[3], size))
    frame[y1, x1:x2 + 1] = color
    frame[y2, x1:x2 + 1] = color
    frame[y1:y2 + 1, x1] = color
    frame[y1:y2 + 1, x2] = color


def render_frame(s: WorldState, cfg: WorldConfig) -> np.ndarray:
    """Rasterize a state to an [S, S, 3] float frame in [0, 1]."""
    size = cfg.frame_size
    frame = np.empty((size, size, 3), dtype=np.float32)
    frame[:] = BG_COLOR
    _fill_box(frame, _box_from_center(s.goal_center, cfg.goal_render_half), GOAL_COLOR, size)
    for i in range(len(s.obj_centers)):
        color = COLORS[COLOR_NAMES[int(s.obj_colors[i])]]
        _fill_box(frame, _box_from_center(s.obj_centers[i], float(s.obj_halves[i])), color, size)
    _outline_box(frame, s.hands[1], IDLE_HAND_COLOR, size)
    _outline_box(frame, s.hands[0], HAND_COLOR, size)
    return frame


def action_of_state(s: WorldState, cfg: WorldConfig) -> ActionVector:
    if cfg.schema == HAND4X2:
        return ActionVector(HAND4X2, np.concatenate([s.hands[0], s.hands[1]]))
    c = s.dominant_center()
    z = 0.30 if s.held_object is not None else 0.22
    half = s.heading / 2.0
    quat = np.array([math.cos(half), 0.0, 0.0, math.sin(half)], dtype=np.float32)
    if quat[0] < 0:
        quat = -quat
    quat /= np.linalg.norm(quat)
    return ActionVector(ROBOT7D, np.array([c[0], c[1], z, *quat], dtype=np.float32))


@dataclass
class EpisodeRecord:
    frames: np.ndarray             # [T, S, S, 3]
    actions: np.ndarray            # [T, action_dim]
    instruction: list[int]
    narration_target: list[int]
    success: bool
    seed: int
    schema: str
    states: list[WorldState] = field(default_factory=list, repr=False)
    goal_center: np.ndarray | None = None


def _sample_point(rng, lo, hi):
    return np.array([rng.uniform(lo, hi), rng.uniform(lo, hi)], dtype=np.float32)


def generate_episode(seed: int, cfg: WorldConfig) -> EpisodeRecord:
    cfg.validate()
    rng = stream(seed, "episode")
    pad = 0.14

    place = PLACE_NAMES[int(rng.integers(len(PLACE_NAMES)))]
    goal = np.array(PLACES[place], dtype=np.float32)

    # object within carrying reach of the goal, hand within one step of the
    # object: contact happens at t=1 and arrival before the final frame.
    reach = 0.9 * (cfg.horizon - 2) * cfg.speed
    for _ in range(200):
        r = rng.uniform(0.11, max(0.115, reach))
        ang = rng.uniform(0, 2 * math.pi)
        obj_c = goal + np.array([r * math.cos(ang), r * math.sin(ang)], dtype=np.float32)
        if pad <= obj_c[0] <= 1 - pad and pad <= obj_c[1] <= 1 - pad:
            break
    for _ in range(200):
        r = cfg.speed * rng.uniform(0.4, 0.95)
        ang = rng.uniform(0, 2 * math.pi)
        hand_c = obj_c + np.array([r * math.cos(ang), r * math.sin(ang)], dtype=np.float32)
        if pad <= hand_c[0] <= 1 - pad and pad <= hand_c[1] <= 1 - pad:
            break

    colors = rng.permutation(len(COLOR_NAMES))[:cfg.n_objects]
    halves = rng.uniform(cfg.obj_half_min, cfg.obj_half_max, cfg.n_objects).astype(np.float32)
    centers = [obj_c]
    for _ in range(cfg.n_objects - 1):
        for _ in range(200):
            c = _sample_point(rng, pad, 1 - pad)
            if np.hypot(*(c - obj_c)) > 0.18 and np.hypot(*(c - goal)) > 0.16:
                centers.append(c)
                break
    idle_anchor = None
    for _ in range(200):
        c = _sample_point(rng, pad, 1 - pad)
        if np.hypot(*(c - obj_c)) > 0.2 and np.hypot(*(c - goal)) > 0.2:
            idle_anchor = c
            break
    if idle_anchor is None:
        idle_anchor = _sample_point(rng, pad, 1 - pad)
    idle_phase = float(rng.uniform(0, 2 * math.pi))

    state = WorldState(
        hands=np.stack([_box_from_center(hand_c, cfg.hand_half),
                        _idle_box(idle_anchor, idle_phase, 0, cfg.idle_amp, cfg.hand_half)]),
        obj_centers=np.stack(centers).astype(np.float32),
        obj_halves=halves,
        obj_colors=colors.astype(np.int64),
        target_object=0,
        held_object=None,
        goal_center=goal,
        idle_anchor=idle_anchor,
        idle_phase=idle_phase,
        heading=0.0,
        tick=0,
    )

    states = [state]
    for _ in range(cfg.horizon - 1):
        states.append(step_dynamics(states[-1], cfg))

    frames = np.stack([render_frame(s, cfg) for s in states])
    actions = np.stack([action_of_state(s, cfg).values for s in states])

    color_name = COLOR_NAMES[int(colors[0])]
    instruction = encode_tokens(["move", "the", color_name, "block", "to", place])
    subject = "hand" if cfg.schema == HAND4X2 else "arm"
    narration = encode_tokens([subject, "moves", color_name, "block", "toward", place, END_TOKEN])

    return EpisodeRecord(
        frames=frames, actions=actions, instruction=instruction,
        narration_target=narration,
        success=check_success(states[-1], goal, cfg.goal_radius),
        seed=seed, schema=cfg.schema, states=states, goal_center=goal,
    )


def check_success(s: WorldState, goal_center, goal_radius) -> bool:
    obj = s.obj_centers[s.target_object]
    return float(np.hypot(obj[0] - goal_center[0], obj[1] - goal_center[1])) <= goal_radius


def execute_actions(start: WorldState, actions, cfg: WorldConfig) -> WorldState:
    """Replay a predicted action sequence through the grasp/carry rules.

    The dominant hand teleports to each action's box (or pose position);
    grasping and object tracking follow the same rules as step_dynamics,
    so replaying the oracle's own actions reproduces its trajectory.
    """
    s = start
    for a in actions:
        vals = a.values if isinstance(a, ActionVector) else np.asarray(a, dtype=np.float32)
        if cfg.schema == HAND4X2:
            box = vals[:4]
            center = np.array([(box[0] + box[2]) / 2, (box[1] + box[3]) / 2], dtype=np.float32)
        else:
            center = vals[:2]
            box = _box_from_center(center, cfg.hand_half)
        held = s.held_object
        obj_centers = s.obj_centers
        if held is None and _contains(box, s.obj_centers[s.target_object], slack=0.01):
            held = s.target_object
        if held is not None:
            obj_centers = s.obj_centers.copy()
            obj_centers[held] = center
        hands = np.stack([box.astype(np.float32), s.hands[1]])
        s = replace(s, hands=hands, obj_centers=obj_centers, held_object=held,
                    tick=s.tick + 1)
    return s


# -- spelled-coordinate actions (the plain-text ablation arm) -------------------


def action_to_text_ids(action: ActionVector) -> list[int]:
    """Quantize coordinates to 2 decimals and spell them as digit tokens."""
    ids = []
    for v in action.values:
        q = round(float(np.clip(v, 0.0, 1.0)) * 100)
        whole, frac = divmod(q, 100)
        ids.extend(encode_tokens([str(whole), ".", str(frac // 10), str(frac % 10)]))
    return ids


def text_ids_to_action(ids, schema: str) -> ActionVector | None:
    """Parse spelled coordinates back; None when the token layout is invalid."""
    dim = 8 if schema == HAND4X2 else 7
    if len(ids) != 4 * dim:
        return None
    vals = []
    for i in range(dim):
        group = decode_tokens(ids[4 * i:4 * i + 4])
        if group[1] != "." or not all(g.isdigit() for g in (group[0], group[2], group[3])):
            return None
        vals.append(float(group[0]) + 0.1 * float(group[2]) + 0.01 * float(group[3]))
    return ActionVector(schema, np.array(vals, dtype=np.float32))
