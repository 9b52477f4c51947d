"""Instruction synthesis workflow: prompts, candidate parsing, curation, pairing.

The prompt shown to the language model is a fixed template carrying three
keyframes (first, intermediate, last) of a trajectory. Responses must list
exactly five instructions as "No. <k>" lines; a human then curates the
usable subset, and training randomly pairs one curated instruction with
its trajectory each epoch.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .trajectories import Trajectory

N_CANDIDATES = 5

SYSTEM_MESSAGE = (
    "You are a linguistic expert specializing in robotic task annotation. "
    "Your goal is to provide diverse, natural language instructions based on "
    "visual observations of robot manipulation."
)

_IMAGE_PLACEHOLDERS = (
    "{Image 1: First frame of the trajectory}",
    "{Image 2: Intermediate frame of the trajectory}",
    "{Image 3: Last frame of the trajectory}",
)

USER_TEMPLATE = """{Image 1: First frame of the trajectory}
{Image 2: Intermediate frame of the trajectory}
{Image 3: Last frame of the trajectory}

Task:
1. Scene Analysis: Briefly identify the primary object and the robot's objective from the provided image.
2. Instruction Generation: Synthesize exactly 5 distinct natural language instructions for the observed task.

Requirements:
- Ensure linguistic variety: Use different sentence structures (Imperative, Goal-oriented, and Conditional).
- Vary the level of abstraction: Include instructions ranging from low-level motor descriptions to high-level intent.
- Vocabulary diversity: Use synonyms for objects (e.g., "item," "target," "utensil") and actions (e.g., "grasp," "pick up," "relocate").
- Format: Return only the 5 instructions, each on a new line starting with "No. [Number]"."""


@dataclass(frozen=True)
class PromptBundle:
    trajectory_id: str
    system_message: str
    user_message: str
    keyframes: tuple[tuple[int, str], ...]  # (frame index, image reference)
    metadata: dict = field(default_factory=dict)


def keyframe_indices(n_frames: int) -> tuple[int, int, int]:
    return 0, (n_frames - 1) // 2, n_frames - 1


def build_prompt(traj: Trajectory) -> PromptBundle:
    """Render the instruction-generation prompt for one trajectory."""
    if len(traj) < 3:
        raise ValueError("trajectory too short")
    indices = keyframe_indices(len(traj))
    refs = tuple((k, f"{traj.id}/imgs/{k}.png") for k in indices)

    user = USER_TEMPLATE
    for placeholder, (slot, (_, ref)) in zip(_IMAGE_PLACEHOLDERS, enumerate(refs, start=1)):
        user = user.replace(placeholder, f"{{Image {slot}: {ref}}}")
    return PromptBundle(
        trajectory_id=traj.id,
        system_message=SYSTEM_MESSAGE,
        user_message=user,
        keyframes=refs,
        metadata=dict(traj.metadata),
    )


@dataclass(frozen=True)
class CandidateSet:
    trajectory_id: str
    candidates: tuple[tuple[int, str], ...]

    def __post_init__(self):
        indices = [i for i, _ in self.candidates]
        if len(self.candidates) != N_CANDIDATES or sorted(indices) != list(range(1, N_CANDIDATES + 1)):
            raise ValueError(f"candidate set needs indices 1..{N_CANDIDATES} exactly once")
        if any(not text.strip() for _, text in self.candidates):
            raise ValueError("candidate texts must be non-empty")

    @property
    def texts(self) -> list[str]:
        return [text for _, text in sorted(self.candidates)]

    def to_payload(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "candidates": [{"index": i, "text": t} for i, t in sorted(self.candidates)],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "CandidateSet":
        return cls(
            trajectory_id=payload["trajectory_id"],
            candidates=tuple((c["index"], c["text"]) for c in payload["candidates"]),
        )


# Accepts "No. 1 text", "No.1 text", "No. 1: text", and markdown bullets
# in front of the "No." prefix.
_CANDIDATE_LINE = re.compile(r"^\s*(?:[-*•]\s*)?no\.\s*(\d+)\s*:?\s*(\S.*)$", re.IGNORECASE)
_TRAILING_ELLIPSIS = re.compile(r"(?:\.{3}|…)\s*$")


def parse_candidates(raw: str, trajectory_id: str) -> CandidateSet:
    """Extract the five "No. <k>" instruction lines from a model response.

    Surrounding prose is ignored; trailing ellipses are tolerated and
    stripped. Anything other than exactly one line per index 1..5 is an
    error.
    """
    found: dict[int, str] = {}
    for line in raw.splitlines():
        match = _CANDIDATE_LINE.match(line)
        if not match:
            continue
        index = int(match.group(1))
        if not 1 <= index <= N_CANDIDATES:
            continue
        if index in found:
            raise ValueError(f"duplicate instruction index {index}")
        text = _TRAILING_ELLIPSIS.sub("", match.group(2)).strip()
        if text:
            found[index] = text
    if len(found) != N_CANDIDATES:
        raise ValueError(f"malformed response (found {len(found)})")
    return CandidateSet(
        trajectory_id=trajectory_id,
        candidates=tuple(sorted(found.items())),
    )


def render_candidates(candidate_set: CandidateSet) -> str:
    """Serialize back to the "No. k" line format (inverse of parse_candidates)."""
    return "\n".join(f"No. {i} {t}" for i, t in sorted(candidate_set.candidates))


@dataclass(frozen=True)
class CuratedSet:
    trajectory_id: str
    selected: tuple[str, ...]
    curator: str
    timestamp: str

    def __post_init__(self):
        if not 1 <= len(self.selected) <= N_CANDIDATES:
            raise ValueError(f"curation must select between 1 and {N_CANDIDATES} instructions")
        if any(not s.strip() for s in self.selected):
            raise ValueError("selected instructions must be non-empty")

    def to_payload(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "selected": list(self.selected),
            "curator": self.curator,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "CuratedSet":
        return cls(
            trajectory_id=payload["trajectory_id"],
            selected=tuple(payload["selected"]),
            curator=payload["curator"],
            timestamp=payload["timestamp"],
        )


def pair(curated: dict[str, CuratedSet], trajectory_id: str, epoch: int, seed: int) -> str:
    """Deterministic uniform draw of one curated instruction for an epoch.

    The draw is a pure function of (seed, epoch, trajectory_id), stable
    across platforms and runs.
    """
    if trajectory_id not in curated:
        raise ValueError("trajectory uncurated")
    selected = curated[trajectory_id].selected
    digest = hashlib.sha256(f"{seed}|{epoch}|{trajectory_id}".encode("utf-8")).digest()
    return selected[int.from_bytes(digest[:8], "big") % len(selected)]


def canonical_instruction(metadata: dict) -> str:
    """The single fixed-phrasing instruction used for baseline training."""
    obj = metadata.get("object", "object")
    goal = metadata.get("goal", "target")
    return f"move the {obj} to the {goal}."


class InstructionStore:
    """JSON persistence for candidate sets and curations, one file per trajectory.

    Writes are atomic (tmp file + rename) and serialized; a re-submitted
    curation replaces the previous one for that trajectory.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.candidates_dir = self.root / "candidates"
        self.curations_dir = self.root / "curations"
        self.candidates_dir.mkdir(parents=True, exist_ok=True)
        self.curations_dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _write_atomic(self, path: Path, payload: dict) -> None:
        with self._write_lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
            os.replace(tmp, path)

    def save_candidates(self, candidate_set: CandidateSet) -> None:
        path = self.candidates_dir / f"{candidate_set.trajectory_id}.json"
        self._write_atomic(path, candidate_set.to_payload())

    def load_candidates(self, trajectory_id: str) -> CandidateSet:
        path = self.candidates_dir / f"{trajectory_id}.json"
        if not path.exists():
            raise KeyError(f"no candidates for trajectory {trajectory_id}")
        return CandidateSet.from_payload(json.loads(path.read_text()))

    def candidate_ids(self) -> list[str]:
        return sorted(p.stem for p in self.candidates_dir.glob("*.json"))

    def save_curation(self, curated: CuratedSet) -> None:
        candidates = self.load_candidates(curated.trajectory_id)
        allowed = set(candidates.texts)
        stray = [s for s in curated.selected if s not in allowed]
        if stray:
            raise ValueError(f"selected instructions not among candidates: {stray}")
        path = self.curations_dir / f"{curated.trajectory_id}.json"
        self._write_atomic(path, curated.to_payload())

    def load_curation(self, trajectory_id: str) -> CuratedSet:
        path = self.curations_dir / f"{trajectory_id}.json"
        if not path.exists():
            raise KeyError(f"trajectory uncurated: {trajectory_id}")
        return CuratedSet.from_payload(json.loads(path.read_text()))

    def curation_ids(self) -> list[str]:
        return sorted(p.stem for p in self.curations_dir.glob("*.json"))

    def all_curations(self) -> dict[str, CuratedSet]:
        return {tid: self.load_curation(tid) for tid in self.curation_ids()}

    def is_curated(self, trajectory_id: str) -> bool:
        return (self.curations_dir / f"{trajectory_id}.json").exists()


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
