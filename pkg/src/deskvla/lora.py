"""Low-rank adaptation of frozen weight matrices.

A frozen base matrix W0 (out x in) is augmented with trainable factors
B (out x r) and A (r x in) so the effective weight is
W0 + (alpha / r) * B @ A. B starts at zero, so a fresh adapter computes
exactly the frozen-base product; training moves only A and B.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INIT_STD = 0.02
_MAGIC = b"LORA"


@dataclass
class AdapterGrads:
    """Gradients for the trainable factors; shapes match A and B."""

    d_a: np.ndarray
    d_b: np.ndarray


class LoraAdapter:
    """Frozen base matrix plus trainable low-rank correction."""

    def __init__(self, w0: np.ndarray, rank: int, alpha: float, seed: int):
        w0 = np.asarray(w0, dtype=np.float64)
        if w0.ndim != 2:
            raise ValueError("base matrix must be 2-D")
        out_dim, in_dim = w0.shape
        if rank < 1 or rank > min(out_dim, in_dim):
            raise ValueError(f"rank {rank} out of range for a {out_dim}x{in_dim} matrix")

        self.w0 = w0
        self.w0.flags.writeable = False
        self.rank = rank
        self.alpha = float(alpha)
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.a = rng.normal(0.0, INIT_STD, size=(rank, in_dim))
        self.b = np.zeros((out_dim, rank))

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    @property
    def shape(self) -> tuple[int, int]:
        return self.w0.shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        """y = x @ W0.T + (alpha/r) * (x @ A.T) @ B.T for a (batch, in) input."""
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.w0.shape[1]:
            raise ValueError(f"input width {x.shape} does not match base matrix {self.w0.shape}")
        return x @ self.w0.T + self.scaling * (x @ self.a.T) @ self.b.T

    def backward(self, x: np.ndarray, dy: np.ndarray) -> tuple[AdapterGrads, np.ndarray]:
        """Gradients of a scalar loss given upstream dy = dL/dy.

        Returns (AdapterGrads, dx). The frozen base receives no gradient.
        """
        x = np.asarray(x)
        dy = np.asarray(dy)
        out_dim, in_dim = self.w0.shape
        if x.ndim != 2 or x.shape[1] != in_dim:
            raise ValueError("input shape does not conform")
        if dy.shape != (x.shape[0], out_dim):
            raise ValueError("upstream gradient shape does not conform")

        s = self.scaling
        d_b = s * dy.T @ (x @ self.a.T)
        d_a = s * self.b.T @ dy.T @ x
        dx = dy @ self.w0 + s * dy @ self.b @ self.a
        return AdapterGrads(d_a=d_a, d_b=d_b), dx

    def merge(self) -> np.ndarray:
        """Fold the adaptation into a plain weight matrix."""
        return self.w0 + self.scaling * self.b @ self.a

    def save(self, path: str | Path) -> None:
        """Write the trainable factors: JSON header + little-endian f32 payloads."""
        header = json.dumps(
            {
                "rank": self.rank,
                "alpha": self.alpha,
                "seed": self.seed,
                "a_shape": list(self.a.shape),
                "b_shape": list(self.b.shape),
            }
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(self.a.astype("<f4").tobytes(order="C"))
            fh.write(self.b.astype("<f4").tobytes(order="C"))

    def load_factors(self, path: str | Path) -> None:
        """Restore A and B from a checkpoint written by save()."""
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError("not an adapter checkpoint")
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            a_shape = tuple(header["a_shape"])
            b_shape = tuple(header["b_shape"])
            if a_shape != self.a.shape or b_shape != self.b.shape:
                raise ValueError("checkpoint shapes do not match adapter")
            a = np.frombuffer(fh.read(4 * a_shape[0] * a_shape[1]), dtype="<f4")
            b = np.frombuffer(fh.read(4 * b_shape[0] * b_shape[1]), dtype="<f4")
        self.a = a.reshape(a_shape).astype(np.float64)
        self.b = b.reshape(b_shape).astype(np.float64)
