"""Synthetic grounding scenes: objects, LiDAR/radar returns, templated prompts.

Prompts come from a fixed grammar, and :func:`evaluate_prompt` recovers the
referred set from the prompt text alone, so grounding ground truth is exact.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import Box3D, nearest_edge
from .kernels import rect_iou

CLASSES = ("Car", "Pedestrian", "Cyclist")
PROMPT_KINDS = ("motion", "depth", "velocity", "mixed")

# nominal (l, w, h) and dimension jitter
CLASS_DIMS = {"Car": (4.2, 1.8, 1.6), "Pedestrian": (0.7, 0.7, 1.75), "Cyclist": (1.8, 0.7, 1.7)}
CLASS_SPEED = {"Car": (2.0, 12.0), "Pedestrian": (0.8, 2.0), "Cyclist": (2.0, 6.0)}
CLASS_RCS = {"Car": 10.0, "Pedestrian": -5.0, "Cyclist": 2.0}
CLASS_INTENSITY = {"Car": 0.6, "Pedestrian": 0.3, "Cyclist": 0.45}

LIDAR_DENSITY = 6000.0  # expected returns * m^2
RADAR_DENSITY = 600.0
RADAR_VEL_NOISE = 0.1  # m/s
RADAR_POS_NOISE = 0.1  # m
MOTION_EPS = 0.5  # m/s, radial speed separating static from moving
DEPTH_TOL = 2.0  # m
SPEED_TOL = 1.0  # m/s
BEARING_DEG = 12.0

PLACE_X = (4.0, 48.0)
PLACE_Y = (-22.0, 22.0)


class SceneError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass
class SceneObject:
    box: Box3D
    cls: str
    velocity: tuple[float, float]

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    def radial_velocity(self) -> float:
        """Velocity component along the sensor line of sight to the box center (+ = receding)."""
        r = math.hypot(self.box.x, self.box.y)
        return (self.velocity[0] * self.box.x + self.velocity[1] * self.box.y) / r

    def depth(self) -> float:
        """Distance from the sensor to the nearest footprint edge."""
        return nearest_edge(self.box).distance

    def motion(self) -> str:
        v = self.radial_velocity()
        if v < -MOTION_EPS:
            return "approaching"
        if v > MOTION_EPS:
            return "leaving"
        return "static"

    def bearing(self) -> str:
        ang = math.degrees(math.atan2(self.box.y, self.box.x))
        if ang > BEARING_DEG:
            return "left"
        if ang < -BEARING_DEG:
            return "right"
        return "ahead"


@dataclass
class Scene:
    seed: int
    objects: list[SceneObject]
    referred: list[int]
    prompt: str
    kind: str
    lidar: np.ndarray | None = None
    radar: np.ndarray | None = None

    def referred_boxes(self) -> list[Box3D]:
        return [self.objects[i].box for i in self.referred]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        same = (self.seed, self.objects, self.referred, self.prompt, self.kind) == (
            other.seed, other.objects, other.referred, other.prompt, other.kind)
        for a, b in ((self.lidar, other.lidar), (self.radar, other.radar)):
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return same


# ---------------------------------------------------------------------------
# prompt grammar
# ---------------------------------------------------------------------------

def _noun(cls: str) -> str:
    return cls.lower()


def render_prompt(obj: SceneObject, kind: str) -> str:
    noun = _noun(obj.cls)
    if kind == "depth":
        return f"the {noun} about {round(obj.depth())} meters away"
    if kind == "motion":
        side = "ahead" if obj.bearing() == "ahead" else f"on the {obj.bearing()}"
        return f"the {obj.motion()} {noun} {side}"
    if kind == "velocity":
        if obj.speed < MOTION_EPS:
            return f"the {noun} standing still"
        return f"the {noun} moving at about {round(obj.speed)} meters per second"
    if kind == "mixed":
        side = "ahead" if obj.bearing() == "ahead" else f"on the {obj.bearing()}"
        return f"the {obj.motion()} {noun} about {round(obj.depth())} meters away {side}"
    raise ValueError(f"unknown prompt kind {kind!r}")


_CLS = "(car|pedestrian|cyclist)"
_MOTION = "(approaching|leaving|static)"
_SIDE = "(ahead|on the left|on the right)"
_PATTERNS = {
    "depth": re.compile(rf"^the {_CLS} about (\d+) meters away$"),
    "motion": re.compile(rf"^the {_MOTION} {_CLS} {_SIDE}$"),
    "velocity": re.compile(rf"^the {_CLS} moving at about (\d+) meters per second$"),
    "still": re.compile(rf"^the {_CLS} standing still$"),
    "mixed": re.compile(rf"^the {_MOTION} {_CLS} about (\d+) meters away {_SIDE}$"),
}


def _side(obj: SceneObject) -> str:
    return "ahead" if obj.bearing() == "ahead" else f"on the {obj.bearing()}"


def evaluate_prompt(prompt: str, objects: list[SceneObject]) -> list[int]:
    """Indices of all objects satisfying the prompt's predicate."""
    for key, pat in _PATTERNS.items():
        m = pat.match(prompt)
        if m is None:
            continue
        g = m.groups()
        if key == "depth":
            pred = lambda o: _noun(o.cls) == g[0] and abs(o.depth() - int(g[1])) <= DEPTH_TOL
        elif key == "motion":
            pred = lambda o: (o.motion(), _noun(o.cls), _side(o)) == g
        elif key == "velocity":
            pred = lambda o: (_noun(o.cls) == g[0] and o.speed >= MOTION_EPS
                              and abs(o.speed - int(g[1])) <= SPEED_TOL)
        elif key == "still":
            pred = lambda o: _noun(o.cls) == g[0] and o.speed < MOTION_EPS
        else:
            pred = lambda o: ((o.motion(), _noun(o.cls), _side(o)) == (g[0], g[1], g[3])
                              and abs(o.depth() - int(g[2])) <= DEPTH_TOL)
        return [i for i, o in enumerate(objects) if pred(o)]
    raise ValueError(f"prompt outside the grammar: {prompt!r}")


def prompt_corpus() -> list[str]:
    """Every word the grammar can emit, as sentences, for vocabulary building."""
    words = ["the", "about", "meters", "away", "moving", "at", "per", "second", "standing",
             "still", "on", "left", "right", "ahead", "approaching", "leaving", "static"]
    words += [_noun(c) for c in CLASSES]
    numbers = [str(i) for i in range(0, 80)]
    return [" ".join(words), " ".join(numbers)]


# ---------------------------------------------------------------------------
# scene generation
# ---------------------------------------------------------------------------

def _sample_object(rng: np.random.Generator) -> SceneObject:
    cls = CLASSES[rng.integers(len(CLASSES))]
    l0, w0, h0 = CLASS_DIMS[cls]
    l, w, h = (d * rng.uniform(0.9, 1.1) for d in (l0, w0, h0))
    x = rng.uniform(*PLACE_X)
    y = rng.uniform(*PLACE_Y)
    yaw = rng.uniform(-math.pi, math.pi)
    box = Box3D(x, y, 0.5 * h, l, w, h, yaw)
    if rng.uniform() < 0.65:
        speed = rng.uniform(*CLASS_SPEED[cls])
        vel = (speed * math.cos(box.yaw), speed * math.sin(box.yaw))
    else:
        vel = (0.0, 0.0)
    return SceneObject(box, cls, vel)


def _overlaps(a: Box3D, objs: list[SceneObject], margin: float = 0.6) -> bool:
    big = (a.x, a.y, a.l + 2 * margin, a.w + 2 * margin, a.yaw)
    return any(rect_iou(big, o.box.bev()) > 0 for o in objs)


def gen_scene(seed: int, n_objects: int, prompt_kind: str = "mixed", max_tries: int = 200) -> Scene:
    """Deterministic scene whose prompt refers to the smallest achievable set (ideally one object)."""
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    if prompt_kind not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind {prompt_kind!r}")
    rng = np.random.default_rng(seed)
    objs: list[SceneObject] = []
    tries = 0
    while len(objs) < n_objects:
        tries += 1
        if tries > max_tries:
            raise SceneError(f"seed {seed}: cannot place {n_objects} objects without overlap")
        o = _sample_object(rng)
        if not _overlaps(o.box, objs):
            objs.append(o)

    best = None
    for t in rng.permutation(n_objects):
        prompt = render_prompt(objs[t], prompt_kind)
        ref = evaluate_prompt(prompt, objs)
        if best is None or len(ref) < len(best[1]):
            best = (prompt, ref)
        if len(ref) == 1:
            break
    return Scene(seed, objs, best[1], best[0], prompt_kind)


# ---------------------------------------------------------------------------
# sensor simulation
# ---------------------------------------------------------------------------

def expected_lidar_count(distance: float) -> float:
    return LIDAR_DENSITY / max(distance, 1.0) ** 2


def expected_radar_count(distance: float) -> float:
    return RADAR_DENSITY / max(distance, 1.0) ** 2


def _visible_faces(box: Box3D, sensor=np.zeros(2)) -> list[tuple[np.ndarray, np.ndarray]]:
    """Vertical faces whose outward normal points toward the sensor."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    fwd, left = np.array([c, s]), np.array([-s, c])
    ctr = np.array([box.x, box.y])
    faces = []
    for normal, half, span in ((fwd, hl, left * hw), (-fwd, hl, left * hw),
                               (left, hw, fwd * hl), (-left, hw, fwd * hl)):
        fc = ctr + normal * half
        if normal @ (sensor - fc) > 0:
            faces.append((fc - span, fc + span))
    return faces


def _face_points(box: Box3D, n: int, rng: np.random.Generator) -> np.ndarray:
    faces = _visible_faces(box)
    if n == 0 or not faces:
        return np.zeros((0, 3))
    lengths = np.array([np.linalg.norm(b - a) for a, b in faces])
    which = rng.choice(len(faces), size=n, p=lengths / lengths.sum())
    t = rng.uniform(size=n)
    a = np.array([faces[k][0] for k in which])
    b = np.array([faces[k][1] for k in which])
    xy = a + t[:, None] * (b - a)
    z = rng.uniform(box.z - 0.5 * box.h, box.z + 0.5 * box.h, size=n)
    return np.column_stack([xy, z])


def sample_pointclouds(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """LiDAR (x,y,z,intensity) and radar (x,y,z,rcs,v) returns for a scene."""
    rng = np.random.default_rng([scene.seed, 1])
    lidar, radar = [], []
    for o in scene.objects:
        d = max(math.hypot(o.box.x, o.box.y), 1.0)
        n_l = rng.poisson(expected_lidar_count(d))
        p = _face_points(o.box, n_l, rng)
        ins = np.clip(CLASS_INTENSITY[o.cls] + rng.normal(0, 0.05, len(p)), 0.0, 1.0)
        lidar.append(np.column_stack([p, ins]))

        n_r = max(1, rng.poisson(expected_radar_count(d)))
        q = _face_points(o.box, n_r, rng)
        q[:, :2] += rng.normal(0, RADAR_POS_NOISE, (len(q), 2))
        rcs = CLASS_RCS[o.cls] + rng.normal(0, 1.0, len(q))
        los = q[:, :2] / np.linalg.norm(q[:, :2], axis=1, keepdims=True)
        v = los @ np.asarray(o.velocity) + rng.normal(0, RADAR_VEL_NOISE, len(q))
        radar.append(np.column_stack([q, rcs, v]))

    # ground clutter
    n_g = 60
    g = np.column_stack([rng.uniform(*PLACE_X, n_g), rng.uniform(*PLACE_Y, n_g),
                         rng.uniform(-0.05, 0.05, n_g), rng.uniform(0.0, 0.1, n_g)])
    lidar.append(g)
    n_c = 4
    c = np.column_stack([rng.uniform(*PLACE_X, n_c), rng.uniform(*PLACE_Y, n_c),
                         rng.uniform(0.0, 1.0, n_c), rng.normal(-10.0, 2.0, n_c),
                         rng.normal(0.0, RADAR_VEL_NOISE, n_c)])
    radar.append(c)
    return np.vstack(lidar), np.vstack(radar)


def with_pointclouds(scene: Scene) -> Scene:
    if scene.lidar is None or scene.radar is None:
        scene.lidar, scene.radar = sample_pointclouds(scene)
    return scene


def make_scenes(n: int, seed: int = 0, n_objects: tuple[int, int] = (3, 5),
                kinds: Iterable[str] = PROMPT_KINDS) -> list[Scene]:
    kinds = list(kinds)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k = int(rng.integers(n_objects[0], n_objects[1] + 1))
        out.append(with_pointclouds(gen_scene(seed * 100003 + i, k, kinds[i % len(kinds)])))
    return out


# ---------------------------------------------------------------------------
# dataset file: one JSON object per line
# ---------------------------------------------------------------------------

_FIELDS = ("seed", "kind", "prompt", "objects", "referred", "lidar", "radar")


def scene_to_record(scene: Scene) -> dict:
    scene = with_pointclouds(scene)
    return {
        "seed": scene.seed,
        "kind": scene.kind,
        "prompt": scene.prompt,
        "objects": [{"cls": o.cls, "box": o.box.as_array().tolist(), "velocity": list(o.velocity)}
                    for o in scene.objects],
        "referred": list(scene.referred),
        "lidar": scene.lidar.tolist(),
        "radar": scene.radar.tolist(),
    }


def record_to_scene(rec: dict) -> Scene:
    missing = [k for k in _FIELDS if k not in rec]
    if missing:
        raise KeyError(f"missing fields {missing}")
    objs = [SceneObject(Box3D.from_array(o["box"]), o["cls"], tuple(float(v) for v in o["velocity"]))
            for o in rec["objects"]]
    lidar = np.asarray(rec["lidar"], dtype=np.float64).reshape(-1, 4)
    radar = np.asarray(rec["radar"], dtype=np.float64).reshape(-1, 5)
    return Scene(int(rec["seed"]), objs, [int(i) for i in rec["referred"]], rec["prompt"],
                 rec["kind"], lidar, radar)


def write_dataset(scenes: Iterable[Scene], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scenes:
            fh.write(json.dumps(scene_to_record(s), separators=(",", ":")) + "\n")


def read_dataset(path: str | Path) -> list[Scene]:
    scenes = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                scenes.append(record_to_scene(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{path}: line {n}: malformed scene record: {exc}") from exc
    return scenes
