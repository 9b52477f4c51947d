"""Continuous 7-DoF actions <-> discrete bins <-> reserved vocabulary tokens.

An action is (dx, dy, dz, droll, dpitch, dyaw, gripper): Cartesian
displacement in meters, orientation delta in radians, and a unitless
gripper command. Each dimension is normalized to [-1, 1] against
per-dimension bounds fitted on the training split, discretized into 256
uniform bins, and mapped onto a contiguous block of reserved token IDs
at the tail of the policy vocabulary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTION_DIMS = 7
NUM_BINS = 256
DIM_NAMES = ("dx", "dy", "dz", "droll", "dpitch", "dyaw", "gripper")

# Percentile bounds used by fit_stats; percentile-based bounds shrug off
# the outliers a scripted collection policy produces.
LOWER_PERCENTILE = 1.0
UPPER_PERCENTILE = 99.0
DEGENERATE_WIDTH = 1e-6


def as_action(values) -> np.ndarray:
    """Coerce to a float64 action vector, enforcing shape and finiteness."""
    a = np.asarray(values, dtype=np.float64)
    if a.shape != (ACTION_DIMS,):
        raise ValueError(f"invalid action: expected {ACTION_DIMS} dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("invalid action")
    return a


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension [lo, hi] bounds in raw action units."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (ACTION_DIMS,) or hi.shape != (ACTION_DIMS,):
            raise ValueError("stats must cover exactly 7 dimensions")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("stats must be finite")
        if not np.all(lo < hi):
            raise ValueError("stats require lo < hi in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_json(self) -> str:
        return json.dumps({"lo": self.lo.tolist(), "hi": self.hi.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NormalizationStats":
        payload = json.loads(text)
        return cls(lo=np.array(payload["lo"]), hi=np.array(payload["hi"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "NormalizationStats":
        return cls.from_json(Path(path).read_text())


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    # Nearest-rank percentile: value at rank ceil(p/100 * n), 1-based.
    n = len(sorted_values)
    rank = max(1, math.ceil(percentile / 100.0 * n))
    return float(sorted_values[min(rank, n) - 1])


def fit_stats(actions) -> NormalizationStats:
    """Fit per-dimension bounds from training-split actions.

    Bounds are the 1st/99th nearest-rank percentiles; a dimension whose
    bounds coincide is widened symmetrically by ``DEGENERATE_WIDTH``.
    """
    arr = np.asarray(list(actions), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no actions")
    if arr.ndim != 2 or arr.shape[1] != ACTION_DIMS:
        raise ValueError(f"invalid action: expected shape (n, {ACTION_DIMS}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("invalid action")

    lo = np.empty(ACTION_DIMS)
    hi = np.empty(ACTION_DIMS)
    for d in range(ACTION_DIMS):
        col = np.sort(arr[:, d])
        lo[d] = _nearest_rank(col, LOWER_PERCENTILE)
        hi[d] = _nearest_rank(col, UPPER_PERCENTILE)
        if lo[d] == hi[d]:
            lo[d] -= DEGENERATE_WIDTH
            hi[d] += DEGENERATE_WIDTH
    return NormalizationStats(lo=lo, hi=hi)


def normalize(action, stats: NormalizationStats) -> np.ndarray:
    """Map a raw action into [-1, 1] per dimension, clamping out-of-range values."""
    a = as_action(action)
    v = 2.0 * (a - stats.lo) / (stats.hi - stats.lo) - 1.0
    return np.clip(v, -1.0, 1.0)


def quantize(v) -> np.ndarray:
    """Discretize a normalized vector into bin indices 0..255 (uniform bins)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ACTION_DIMS,):
        raise ValueError(f"expected {ACTION_DIMS} normalized values, got shape {v.shape}")
    if np.any(v < -1.0) or np.any(v > 1.0) or not np.all(np.isfinite(v)):
        raise ValueError("normalized values must lie in [-1, 1]")
    bins = np.floor((v + 1.0) / 2.0 * NUM_BINS).astype(np.int64)
    return np.minimum(bins, NUM_BINS - 1)


def dequantize(bins) -> np.ndarray:
    """Map bin indices back to bin-center values in [-1, 1]."""
    b = validate_bins(bins)
    return -1.0 + (b + 0.5) * (2.0 / NUM_BINS)


def denormalize(v, stats: NormalizationStats) -> np.ndarray:
    """Inverse of normalize (without clamping): [-1, 1] back to raw units."""
    v = np.asarray(v, dtype=np.float64)
    return stats.lo + (v + 1.0) / 2.0 * (stats.hi - stats.lo)


def validate_bins(bins) -> np.ndarray:
    b = np.asarray(bins)
    if b.shape != (ACTION_DIMS,):
        raise ValueError(f"expected {ACTION_DIMS} bins, got shape {b.shape}")
    if not np.issubdtype(b.dtype, np.integer):
        if not np.all(b == np.floor(b)):
            raise ValueError("bins must be integers")
        b = b.astype(np.int64)
    if np.any(b < 0) or np.any(b >= NUM_BINS):
        raise ValueError(f"bins must lie in [0, {NUM_BINS - 1}]")
    return b.astype(np.int64)


@dataclass(frozen=True)
class TokenMap:
    """Mapping between bins 0..255 and a reserved block of vocabulary IDs.

    The reserved block defaults to the last 256 IDs of the vocabulary,
    standing in for the least frequently used tokens of a real tokenizer.
    """

    base_vocab_size: int
    action_token_offset: int = -1

    def __post_init__(self):
        if self.base_vocab_size < NUM_BINS:
            raise ValueError(f"vocabulary must hold at least {NUM_BINS} reserved tokens")
        if self.action_token_offset < 0:
            object.__setattr__(self, "action_token_offset", self.base_vocab_size - NUM_BINS)
        if self.action_token_offset + NUM_BINS > self.base_vocab_size:
            raise ValueError("reserved token range exceeds vocabulary")

    def is_action_token(self, token_id: int) -> bool:
        return self.action_token_offset <= token_id < self.action_token_offset + NUM_BINS


def bins_to_tokens(bins, token_map: TokenMap) -> np.ndarray:
    """Shift bin indices into the reserved token range."""
    b = validate_bins(bins)
    return b + token_map.action_token_offset


def tokens_to_bins(token_ids, token_map: TokenMap) -> np.ndarray:
    """Shift reserved token IDs back to bin indices; exact inverse of bins_to_tokens."""
    ids = np.asarray(token_ids)
    if ids.shape != (ACTION_DIMS,):
        raise ValueError(f"expected {ACTION_DIMS} token IDs, got shape {ids.shape}")
    lo = token_map.action_token_offset
    hi = lo + NUM_BINS
    if np.any(ids < lo) or np.any(ids >= hi):
        raise ValueError("not an action token")
    return ids.astype(np.int64) - lo
