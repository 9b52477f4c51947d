"""Trajectory dataset: synthesis, disk layout, loading, and splits.

A trajectory is an ordered list of (observation, action) frames plus
free-form metadata. The on-disk layout is inspectable and diff-able:

    <root>/manifest.json
    <root>/<traj_id>/frames.jsonl     one frame per line
    <root>/<traj_id>/imgs/<step>.png  8-bit grayscale observations

The synthesizer scripts small pick-and-place episodes on a 32x32 canvas:
an effector approaches an object, grasps it, carries it to a named goal
position, and releases. The goal is recorded only in the metadata (and
hence in the instruction text), never rendered, so goal-directed motion
is predictable from pixels alone only while the object is visible ahead
of the gripper; the transport leg requires reading the instruction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .actions import ACTION_DIMS

IMAGE_SIZE = 32

XY_SCALE = 0.01  # pixels -> meters
MAX_STEP_PX = 2.0
APPROACH_GAIN = 0.6
GRASP_RADIUS_PX = 1.0
MARGIN = 2  # keep the effector cross inside the canvas

COLORS = {"red": 140, "green": 160, "blue": 180, "yellow": 200}
SHAPES = ("block", "ball", "cup", "plate")

# Named goal anchors in (x, y) pixel coordinates; x grows rightward,
# y grows downward.
GOALS = {
    "upper left corner": (5, 5),
    "upper right corner": (26, 5),
    "lower left corner": (5, 26),
    "lower right corner": (26, 26),
    "top edge": (16, 5),
    "bottom edge": (16, 26),
    "left edge": (5, 16),
    "right edge": (26, 16),
    "center": (16, 16),
}


@dataclass
class Trajectory:
    id: str
    frames: list[tuple[np.ndarray, np.ndarray]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.frames:
            raise ValueError(f"trajectory {self.id} has no frames")
        for obs, action in self.frames:
            if obs.shape != (IMAGE_SIZE, IMAGE_SIZE):
                raise ValueError(f"trajectory {self.id}: bad observation shape {obs.shape}")
            if action.shape != (ACTION_DIMS,) or not np.all(np.isfinite(action)):
                raise ValueError(f"trajectory {self.id}: non-finite or malformed action")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def observations(self) -> list[np.ndarray]:
        return [obs for obs, _ in self.frames]

    @property
    def actions(self) -> np.ndarray:
        return np.stack([a for _, a in self.frames])


@dataclass(frozen=True)
class DatasetSplit:
    train: list[str]
    test: list[str]


class LoadError(Exception):
    pass


@dataclass
class LoadResult:
    trajectories: list[Trajectory]
    failures: list[tuple[str, str]]


def _draw_object(img: np.ndarray, x: int, y: int, shape: str, intensity: int) -> None:
    if shape == "block":
        img[y - 1 : y + 2, x - 1 : x + 2] = intensity
    elif shape == "ball":
        img[y, x - 1 : x + 2] = intensity
        img[y - 1 : y + 2, x] = intensity
    elif shape == "cup":
        img[y - 1 : y + 2, x - 1 : x + 2] = intensity
        img[y, x] = 0
    elif shape == "plate":
        img[y, x - 1 : x + 2] = intensity
    else:
        raise ValueError(f"unknown shape {shape!r}")


def render_scene(eff_xy, obj_xy, shape: str, intensity: int, holding: bool) -> np.ndarray:
    """Render one observation as float64 in [0, 1] on an exact uint8 grid."""
    img = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    ox, oy = int(round(obj_xy[0])), int(round(obj_xy[1]))
    _draw_object(img, ox, oy, shape, intensity)
    ex, ey = int(round(eff_xy[0])), int(round(eff_xy[1]))
    img[ey, max(ex - 2, 0) : ex + 3] = 255
    img[max(ey - 2, 0) : ey + 3, ex] = 255
    if holding:
        img[0:2, 0:2] = 255  # gripper-closed indicator
    return img.astype(np.float64) / 255.0


def _step_toward(pos: np.ndarray, target: np.ndarray) -> np.ndarray:
    delta = APPROACH_GAIN * (target - pos)
    return np.clip(delta, -MAX_STEP_PX, MAX_STEP_PX)


def _action_vector(dx_px: float, dy_px: float, grip: float) -> np.ndarray:
    dx = dx_px * XY_SCALE
    dy = dy_px * XY_SCALE
    return np.array(
        [
            dx,
            dy,
            0.5 * dy - 0.3 * dx,
            0.4 * dx + 0.2 * dy,
            -0.5 * dy,
            0.25 * dx - 0.25 * dy,
            grip,
        ]
    )


def synthesize(n_trajectories: int, steps: int = 25, seed: int = 0) -> list[Trajectory]:
    """Generate scripted pick-and-place episodes, fully seed-deterministic."""
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    if steps < 3:
        raise ValueError("need at least three steps per trajectory")

    rng = np.random.default_rng(seed)
    trajectories = []
    goal_names = list(GOALS)
    color_names = list(COLORS)

    for idx in range(n_trajectories):
        color = color_names[rng.integers(len(color_names))]
        shape = SHAPES[rng.integers(len(SHAPES))]
        goal_name = goal_names[rng.integers(len(goal_names))]
        goal = np.array(GOALS[goal_name], dtype=np.float64)
        intensity = COLORS[color]

        obj = rng.integers(6, 26, size=2).astype(np.float64)
        angle = rng.uniform(0, 2 * np.pi)
        radius = rng.uniform(4.0, 7.0)
        eff = obj + radius * np.array([np.cos(angle), np.sin(angle)])
        eff = np.clip(eff, MARGIN, IMAGE_SIZE - 1 - MARGIN)

        holding = False
        released = False
        frames = []
        for _ in range(steps):
            obs = render_scene(eff, obj, shape, intensity, holding)
            if released:
                delta = np.zeros(2)
                grip = 0.0
            elif holding:
                if np.linalg.norm(goal - eff) <= GRASP_RADIUS_PX:
                    delta = np.zeros(2)
                    grip = 0.0
                    released = True
                else:
                    delta = _step_toward(eff, goal)
                    grip = 1.0
            else:
                if np.linalg.norm(obj - eff) <= GRASP_RADIUS_PX:
                    delta = np.zeros(2)
                    grip = 1.0
                    holding = True
                else:
                    delta = _step_toward(eff, obj)
                    grip = 0.0

            frames.append((obs, _action_vector(delta[0], delta[1], grip)))
            eff = np.clip(eff + delta, MARGIN, IMAGE_SIZE - 1 - MARGIN)
            if holding:
                obj = eff.copy()

        metadata = {
            "color": color,
            "shape": shape,
            "object": f"{color} {shape}",
            "goal": goal_name,
            "goal_state": f"{color} {shape} at {goal_name}",
        }
        trajectories.append(Trajectory(id=f"traj-{idx:03d}", frames=frames, metadata=metadata))
    return trajectories


def export(trajectories: list[Trajectory], root: str | Path, provenance: dict | None = None) -> Path:
    """Write the dataset layout under root; byte-identical for identical inputs."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    entries = []

    for traj in trajectories:
        traj_dir = root / traj.id
        img_dir = traj_dir / "imgs"
        img_dir.mkdir(parents=True, exist_ok=True)
        lines = []
        for step, (obs, action) in enumerate(traj.frames):
            img_name = f"imgs/{step}.png"
            pixels = np.round(obs * 255.0).astype(np.uint8)
            Image.fromarray(pixels, mode="L").save(img_dir / f"{step}.png")
            digest.update(pixels.tobytes())
            lines.append(
                json.dumps({"step": step, "action": action.tolist(), "image": img_name})
            )
        jsonl = "\n".join(lines) + "\n"
        (traj_dir / "frames.jsonl").write_text(jsonl)
        digest.update(jsonl.encode("utf-8"))
        entries.append({"id": traj.id, "steps": len(traj), "metadata": traj.metadata})

    manifest = {
        "version": 1,
        "trajectories": entries,
        "checksum": digest.hexdigest(),
    }
    if provenance:
        manifest["provenance"] = provenance
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root


def _load_one(root: Path, entry: dict) -> Trajectory:
    traj_id = entry["id"]
    traj_dir = root / traj_id
    jsonl = traj_dir / "frames.jsonl"
    if not jsonl.exists():
        raise LoadError("missing frames.jsonl")

    frames = []
    for lineno, line in enumerate(jsonl.read_text().splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            action = np.asarray(record["action"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"corrupt frame at line {lineno}: {exc}") from exc
        if action.shape != (ACTION_DIMS,):
            raise LoadError(f"frame {lineno}: expected {ACTION_DIMS} action values")
        if not np.all(np.isfinite(action)):
            raise LoadError(f"frame {lineno}: non-finite action")
        img_path = traj_dir / record["image"]
        if not img_path.exists():
            raise LoadError(f"frame {lineno}: missing image {record['image']}")
        with Image.open(img_path) as im:
            obs = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        if obs.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise LoadError(f"frame {lineno}: bad image shape {obs.shape}")
        frames.append((obs, action))

    if len(frames) != entry["steps"]:
        raise LoadError(f"expected {entry['steps']} frames, found {len(frames)}")
    return Trajectory(id=traj_id, frames=frames, metadata=entry.get("metadata", {}))


def load(root: str | Path) -> LoadResult:
    """Load and validate a dataset; invalid trajectories are itemized, not fatal."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ValueError("no manifest")
    manifest = json.loads(manifest_path.read_text())

    trajectories = []
    failures = []
    for entry in manifest["trajectories"]:
        try:
            trajectories.append(_load_one(root, entry))
        except (LoadError, ValueError) as exc:
            failures.append((entry["id"], str(exc)))
    return LoadResult(trajectories=trajectories, failures=failures)


def split(trajectories: list[Trajectory], test_fraction: float, seed: int) -> DatasetSplit:
    """Seeded shuffle-then-partition into disjoint train/test id lists."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    ids = [t.id for t in trajectories]
    order = np.random.default_rng(seed).permutation(len(ids))
    n_test = min(max(int(round(len(ids) * test_fraction)), 1), len(ids) - 1)
    shuffled = [ids[i] for i in order]
    return DatasetSplit(train=sorted(shuffled[n_test:]), test=sorted(shuffled[:n_test]))


def by_id(trajectories: list[Trajectory]) -> dict[str, Trajectory]:
    return {t.id: t for t in trajectories}
