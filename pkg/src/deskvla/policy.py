"""Desk-scale VLA surrogate: patch encoder + decoder transformer in numpy.

The model is deliberately tiny (2 pre-LN decoder blocks, d=64 by
default) but structurally faithful: observation patches and instruction
word-pieces form the prefix, seven action slots are decoded
autoregressively over a reserved 256-token tail of the vocabulary, and
LoRA adapters sit on the Q/K/V/O attention projections. Forward and
backward passes are handwritten in float64 so adapter gradients can be
checked against finite differences.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .actions import ACTION_DIMS, NUM_BINS
from .lora import LoraAdapter
from .text import ACT_ID, PAD_ID, Vocab

_LN_EPS = 1e-5
_MASK_VALUE = -1e30
_GELU_C = math.sqrt(2.0 / math.pi)

ADAPTER_PROJECTIONS = ("q", "k", "v", "o")


@dataclass(frozen=True)
class PolicyConfig:
    image_size: int = 32
    patch_size: int = 8
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    base_vocab_size: int = 1024
    max_seq_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError("image size must be divisible by patch size")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def vocab_size(self) -> int:
        return self.base_vocab_size + NUM_BINS


@dataclass(frozen=True)
class TrainingExample:
    observation: np.ndarray
    instruction: str
    target_tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.target_tokens) != ACTION_DIMS:
            raise ValueError(f"expected {ACTION_DIMS} target tokens")


@dataclass(frozen=True)
class AssembledExample:
    patches: np.ndarray      # (n_patches, patch_size**2)
    token_ids: np.ndarray    # instruction ++ [ACT] ++ first 6 targets
    target_ids: np.ndarray   # (7,)
    start: int               # absolute index of the first action slot

    @property
    def length(self) -> int:
        return self.patches.shape[0] + self.token_ids.shape[0]


def as_observation(image, image_size: int) -> np.ndarray:
    obs = np.asarray(image, dtype=np.float64)
    if obs.shape != (image_size, image_size):
        raise ValueError(f"observation must be {image_size}x{image_size}, got {obs.shape}")
    if not np.all(np.isfinite(obs)) or obs.min() < 0.0 or obs.max() > 1.0:
        raise ValueError("observation pixels must lie in [0, 1]")
    return obs


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    du = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du


def _layer_norm(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv)


def _layer_norm_backward(dy, gamma, cache):
    xhat, inv = cache
    d_gamma = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    d_beta = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    dx = inv * (dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, d_gamma, d_beta


class PolicyModel:
    """Transformer surrogate over [patches ++ instruction ++ action slots]."""

    def __init__(self, config: PolicyConfig | None = None, vocab: Vocab | None = None):
        self.config = config or PolicyConfig()
        self.vocab = vocab or Vocab(base_size=self.config.base_vocab_size)
        if self.vocab.size != self.config.vocab_size:
            raise ValueError("vocab size does not match config")
        self.params: dict[str, np.ndarray] = {}
        self.adapters: dict[str, LoraAdapter] = {}
        self._init_params()

    # ---- parameters -------------------------------------------------

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        pp = cfg.patch_size ** 2

        def normal(shape):
            return rng.normal(0.0, 0.02, size=shape)

        self.params["tok_emb"] = normal((cfg.vocab_size, cfg.d_model))
        self.params["patch_w"] = normal((cfg.d_model, pp))
        self.params["patch_b"] = np.zeros(cfg.d_model)
        self.params["pos_emb"] = normal((cfg.max_seq_len, cfg.d_model))
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            self.params[p + "ln1.g"] = np.ones(cfg.d_model)
            self.params[p + "ln1.b"] = np.zeros(cfg.d_model)
            for proj in ADAPTER_PROJECTIONS:
                self.params[p + f"attn.{proj}.w"] = normal((cfg.d_model, cfg.d_model))
            self.params[p + "ln2.g"] = np.ones(cfg.d_model)
            self.params[p + "ln2.b"] = np.zeros(cfg.d_model)
            self.params[p + "ffn.w1"] = normal((cfg.d_ff, cfg.d_model))
            self.params[p + "ffn.b1"] = np.zeros(cfg.d_ff)
            self.params[p + "ffn.w2"] = normal((cfg.d_model, cfg.d_ff))
            self.params[p + "ffn.b2"] = np.zeros(cfg.d_model)
        self.params["ln_f.g"] = np.ones(cfg.d_model)
        self.params["ln_f.b"] = np.zeros(cfg.d_model)

    def attach_adapters(self, rank: int = 32, alpha: float = 64.0, seed: int = 0) -> None:
        """Freeze every base weight and wrap Q/K/V/O in LoRA adapters."""
        if self.adapters:
            raise ValueError("adapters already attached")
        for array in self.params.values():
            array.flags.writeable = False
        for i in range(self.config.n_layers):
            for j, proj in enumerate(ADAPTER_PROJECTIONS):
                name = f"layers.{i}.attn.{proj}"
                w0 = self.params[name + ".w"]
                self.adapters[name] = LoraAdapter(
                    w0, rank=rank, alpha=alpha,
                    seed=seed * 1000 + i * len(ADAPTER_PROJECTIONS) + j)

    def adapter_params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, adapter in self.adapters.items():
            out[name + ".a"] = adapter.a
            out[name + ".b"] = adapter.b
        return out

    def frozen_hash(self) -> str:
        """Digest of all base weights; constant across adapter training."""
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()

    # ---- sequence assembly ------------------------------------------

    def _patches(self, obs: np.ndarray) -> np.ndarray:
        cfg = self.config
        n = cfg.image_size // cfg.patch_size
        obs = as_observation(obs, cfg.image_size)
        grid = obs.reshape(n, cfg.patch_size, n, cfg.patch_size)
        return grid.transpose(0, 2, 1, 3).reshape(cfg.n_patches, cfg.patch_size ** 2)

    def assemble_sequence(self, example: TrainingExample) -> AssembledExample:
        """Lay out [patch tokens] ++ [instruction] ++ [7 action slots]."""
        instr_ids = self.vocab.encode(example.instruction)
        if not instr_ids:
            raise ValueError("empty instruction")
        offset = self.vocab.token_map.action_token_offset
        targets = np.asarray(example.target_tokens, dtype=np.int64)
        if targets.min() < offset or targets.max() >= offset + NUM_BINS:
            raise ValueError("target tokens outside reserved action range")
        # Teacher forcing: the [ACT] marker opens decoding, then each slot
        # sees the previous ground-truth action token.
        token_ids = np.concatenate([
            np.asarray(instr_ids, dtype=np.int64),
            np.asarray([ACT_ID], dtype=np.int64),
            targets[:-1],
        ])
        assembled = AssembledExample(
            patches=self._patches(example.observation),
            token_ids=token_ids,
            target_ids=targets,
            start=self.config.n_patches + len(instr_ids),
        )
        if assembled.length > self.config.max_seq_len:
            raise ValueError("sequence exceeds max_seq_len")
        return assembled

    def _collate(self, patches_list, ids_list):
        n_b = len(ids_list)
        tok_len = max(len(ids) for ids in ids_list)
        ids = np.full((n_b, tok_len), PAD_ID, dtype=np.int64)
        for row, seq in enumerate(ids_list):
            ids[row, : len(seq)] = seq
        patches = np.stack(patches_list)
        return patches, ids

    # ---- forward / backward -----------------------------------------

    def _proj_forward(self, name: str, x2d: np.ndarray) -> np.ndarray:
        if self.adapters:
            return self.adapters[name].forward(x2d)
        return x2d @ self.params[name + ".w"].T

    def _forward(self, patches, ids, need_cache: bool):
        """Run the trunk; returns final hidden states and optional cache.

        patches: (B, n_patches, P*P), ids: (B, T_tok) padded with PAD.
        Pads trail the real tokens, so under the causal mask they cannot
        influence any supervised position.
        """
        cfg = self.config
        n_b = patches.shape[0]
        t_total = cfg.n_patches + ids.shape[1]
        dh = cfg.d_model // cfg.n_heads

        patch_emb = patches @ self.params["patch_w"].T + self.params["patch_b"]
        tok_emb = self.params["tok_emb"][ids]
        h = np.concatenate([patch_emb, tok_emb], axis=1) + self.params["pos_emb"][:t_total]

        mask = np.triu(np.full((t_total, t_total), _MASK_VALUE), k=1)
        cache: dict = {"patches": patches, "ids": ids, "layers": []}

        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            lc: dict = {"x0": h}
            x1, lc["ln1"] = _layer_norm(h, self.params[p + "ln1.g"], self.params[p + "ln1.b"])
            x1_2d = x1.reshape(-1, cfg.d_model)
            lc["x1_2d"] = x1_2d

            def heads(m):
                return m.reshape(n_b, t_total, cfg.n_heads, dh).transpose(0, 2, 1, 3)

            q = heads(self._proj_forward(p + "attn.q", x1_2d).reshape(n_b, t_total, -1))
            k = heads(self._proj_forward(p + "attn.k", x1_2d).reshape(n_b, t_total, -1))
            v = heads(self._proj_forward(p + "attn.v", x1_2d).reshape(n_b, t_total, -1))

            scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh) + mask
            scores -= scores.max(axis=-1, keepdims=True)
            attn = np.exp(scores)
            attn /= attn.sum(axis=-1, keepdims=True)

            ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(n_b, t_total, cfg.d_model)
            ctx_2d = ctx.reshape(-1, cfg.d_model)
            out = self._proj_forward(p + "attn.o", ctx_2d).reshape(n_b, t_total, cfg.d_model)
            h1 = h + out
            lc.update(q=q, k=k, v=v, attn=attn, ctx_2d=ctx_2d, h1=h1)

            x2, lc["ln2"] = _layer_norm(h1, self.params[p + "ln2.g"], self.params[p + "ln2.b"])
            f1 = x2 @ self.params[p + "ffn.w1"].T + self.params[p + "ffn.b1"]
            act = _gelu(f1)
            h = h1 + act @ self.params[p + "ffn.w2"].T + self.params[p + "ffn.b2"]
            lc.update(x2=x2, f1=f1, act=act)
            if need_cache:
                cache["layers"].append(lc)

        xf, lnf_cache = _layer_norm(h, self.params["ln_f.g"], self.params["ln_f.b"])
        if need_cache:
            cache["ln_f"] = lnf_cache
            cache["xf"] = xf
            return xf, cache
        return xf, None

    def _backward(self, cache, d_xf, train_base: bool):
        """Backprop d_xf (B,T,d) through the trunk.

        Always accumulates adapter gradients (when attached); base-weight
        gradients are only materialized for pretraining.
        """
        cfg = self.config
        n_b, t_total, _ = d_xf.shape
        dh_dim = cfg.d_model // cfg.n_heads
        grads: dict[str, np.ndarray] = {}

        def add(name, value):
            if name in grads:
                grads[name] += value
            else:
                grads[name] = value

        dht, dg, db = _layer_norm_backward(d_xf, self.params["ln_f.g"], cache["ln_f"])
        if train_base:
            add("ln_f.g", dg)
            add("ln_f.b", db)

        for i in reversed(range(cfg.n_layers)):
            p = f"layers.{i}."
            lc = cache["layers"][i]

            # feed-forward branch
            d_f2 = dht
            d_f2_2d = d_f2.reshape(-1, cfg.d_model)
            act_2d = lc["act"].reshape(-1, cfg.d_ff)
            d_act = d_f2 @ self.params[p + "ffn.w2"]
            d_f1 = d_act * _gelu_grad(lc["f1"])
            d_f1_2d = d_f1.reshape(-1, cfg.d_ff)
            x2_2d = lc["x2"].reshape(-1, cfg.d_model)
            if train_base:
                add(p + "ffn.w2", d_f2_2d.T @ act_2d)
                add(p + "ffn.b2", d_f2_2d.sum(axis=0))
                add(p + "ffn.w1", d_f1_2d.T @ x2_2d)
                add(p + "ffn.b1", d_f1_2d.sum(axis=0))
            d_x2 = d_f1 @ self.params[p + "ffn.w1"]
            d_h1, dg, db = _layer_norm_backward(d_x2, self.params[p + "ln2.g"], lc["ln2"])
            if train_base:
                add(p + "ln2.g", dg)
                add(p + "ln2.b", db)
            d_h1 = d_h1 + dht  # residual

            # attention branch
            d_out_2d = d_h1.reshape(-1, cfg.d_model)
            d_ctx_2d = self._proj_backward(p + "attn.o", lc["ctx_2d"], d_out_2d,
                                           grads, train_base, add)
            d_ctx = d_ctx_2d.reshape(n_b, t_total, cfg.n_heads, dh_dim).transpose(0, 2, 1, 3)
            attn, q, k, v = lc["attn"], lc["q"], lc["k"], lc["v"]
            d_attn = d_ctx @ v.transpose(0, 1, 3, 2)
            d_v = attn.transpose(0, 1, 3, 2) @ d_ctx
            d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
            d_scores /= math.sqrt(dh_dim)
            d_q = d_scores @ k
            d_k = d_scores.transpose(0, 1, 3, 2) @ q

            def merge(m):
                return m.transpose(0, 2, 1, 3).reshape(-1, cfg.d_model)

            x1_2d = lc["x1_2d"]
            d_x1_2d = self._proj_backward(p + "attn.q", x1_2d, merge(d_q), grads, train_base, add)
            d_x1_2d += self._proj_backward(p + "attn.k", x1_2d, merge(d_k), grads, train_base, add)
            d_x1_2d += self._proj_backward(p + "attn.v", x1_2d, merge(d_v), grads, train_base, add)
            d_x1 = d_x1_2d.reshape(n_b, t_total, cfg.d_model)
            d_x0, dg, db = _layer_norm_backward(d_x1, self.params[p + "ln1.g"], lc["ln1"])
            if train_base:
                add(p + "ln1.g", dg)
                add(p + "ln1.b", db)
            dht = d_h1 + d_x0  # residual

        if train_base:
            add("pos_emb", np.zeros_like(self.params["pos_emb"]))
            grads["pos_emb"][:t_total] += dht.sum(axis=0)
            d_patch = dht[:, : cfg.n_patches].reshape(-1, cfg.d_model)
            patches_2d = cache["patches"].reshape(-1, cfg.patch_size ** 2)
            add("patch_w", d_patch.T @ patches_2d)
            add("patch_b", d_patch.sum(axis=0))
            d_tok = dht[:, cfg.n_patches:].reshape(-1, cfg.d_model)
            add("tok_emb", np.zeros_like(self.params["tok_emb"]))
            np.add.at(grads["tok_emb"], cache["ids"].reshape(-1), d_tok)
        return grads

    def _proj_backward(self, name, x2d, dy2d, grads, train_base, add):
        if self.adapters:
            adapter_grads, dx = self.adapters[name].backward(x2d, dy2d)
            add(name + ".a", adapter_grads.d_a)
            add(name + ".b", adapter_grads.d_b)
            return dx
        if train_base:
            add(name + ".w", dy2d.T @ x2d)
        return dy2d @ self.params[name + ".w"]

    # ---- loss --------------------------------------------------------

    def loss_and_grads(self, examples: list[TrainingExample], train_base: bool = False):
        """Mean cross-entropy over the 7 action positions, plus gradients.

        Returns (loss, grads) where grads maps parameter names (adapter
        factors, or all base weights during pretraining) to arrays.
        """
        if not examples:
            raise ValueError("empty batch")
        assembled = [self.assemble_sequence(ex) for ex in examples]
        logits, rows, targets, cache = self._action_logits(assembled, need_cache=True)

        n_rows = logits.shape[0]
        logits = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(logits).sum(axis=1))
        loss = float(np.mean(log_z - logits[np.arange(n_rows), targets]))

        d_logits = np.exp(logits - log_z[:, None])
        d_logits[np.arange(n_rows), targets] -= 1.0
        d_logits /= n_rows

        xf = cache["xf"]
        d_xf = np.zeros_like(xf)
        d_xf[rows] = d_logits @ self.params["tok_emb"]
        grads = self._backward(cache, d_xf, train_base)
        if train_base:
            xf_rows = xf[rows]
            if "tok_emb" not in grads:
                grads["tok_emb"] = np.zeros_like(self.params["tok_emb"])
            grads["tok_emb"] += d_logits.T @ xf_rows
        return loss, grads

    def _action_logits(self, assembled: list[AssembledExample], need_cache: bool):
        """Full-vocab logits at the supervised action positions only."""
        patches, ids = self._collate([a.patches for a in assembled],
                                     [a.token_ids for a in assembled])
        xf, cache = self._forward(patches, ids, need_cache)
        n_b = len(assembled)
        b_idx = np.repeat(np.arange(n_b), ACTION_DIMS)
        t_idx = np.concatenate([a.start + np.arange(ACTION_DIMS) for a in assembled])
        logits = xf[b_idx, t_idx] @ self.params["tok_emb"].T
        targets = np.concatenate([a.target_ids for a in assembled])
        return logits, (b_idx, t_idx), targets, cache

    # ---- prediction ---------------------------------------------------

    def predict(self, observation, instruction: str) -> np.ndarray:
        return self.predict_batch([observation], [instruction])[0]

    def predict_batch(self, observations, instructions) -> np.ndarray:
        """Greedy decode of the 7 action slots, restricted to action tokens.

        Argmax over the reserved 256-token tail only; numpy argmax breaks
        ties toward the lower bin index.
        """
        if len(observations) != len(instructions):
            raise ValueError("observations and instructions must align")
        offset = self.vocab.token_map.action_token_offset
        patches_list = [self._patches(o) for o in observations]
        ids_list = []
        for instr in instructions:
            instr_ids = self.vocab.encode(instr)
            if not instr_ids:
                raise ValueError("empty instruction")
            ids_list.append(np.asarray(instr_ids + [ACT_ID], dtype=np.int64))

        n_b = len(ids_list)
        bins = np.zeros((n_b, ACTION_DIMS), dtype=np.int64)
        head = self.params["tok_emb"][offset : offset + NUM_BINS]
        for step in range(ACTION_DIMS):
            patches, ids = self._collate(patches_list, ids_list)
            xf, _ = self._forward(patches, ids, need_cache=False)
            last = np.asarray([self.config.n_patches + len(s) - 1 for s in ids_list])
            logits = xf[np.arange(n_b), last] @ head.T
            step_bins = logits.argmax(axis=1)
            bins[:, step] = step_bins
            if step < ACTION_DIMS - 1:
                ids_list = [np.append(seq, offset + b)
                            for seq, b in zip(ids_list, step_bins)]
        return bins

    # ---- checkpointing -------------------------------------------------

    def save(self, root: str | Path) -> None:
        """Directory checkpoint: config JSON + one little-endian f32 file per tensor."""
        root = Path(root)
        tensor_dir = root / "tensors"
        tensor_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "config": asdict(self.config),
            "vocab_words": self.vocab.words,
            "tensors": {},
        }
        for name in sorted(self.params):
            array = self.params[name]
            filename = name + ".bin"
            (tensor_dir / filename).write_bytes(
                np.ascontiguousarray(array, dtype="<f4").tobytes())
            manifest["tensors"][name] = {"shape": list(array.shape), "file": filename}
        (root / "config.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, root: str | Path) -> "PolicyModel":
        root = Path(root)
        manifest = json.loads((root / "config.json").read_text())
        config = PolicyConfig(**manifest["config"])
        vocab = Vocab(words=manifest["vocab_words"], base_size=config.base_vocab_size)
        model = cls(config, vocab)
        for name, meta in manifest["tensors"].items():
            raw = (root / "tensors" / meta["file"]).read_bytes()
            array = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            model.params[name] = array.reshape(meta["shape"])
        return model

    def save_adapters(self, root: str | Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for name, adapter in self.adapters.items():
            adapter.save(root / f"{name}.lora")

    def load_adapters(self, root: str | Path) -> None:
        """Restore LoRA factors previously written by save_adapters."""
        root = Path(root)
        if not self.adapters:
            raise ValueError("attach adapters before loading factors")
        for name, adapter in self.adapters.items():
            adapter.load_factors(root / f"{name}.lora")
