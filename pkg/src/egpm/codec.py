"""Encoders mapping frames, text, and actions into one token space.

The vision backbone is a small patch autoencoder trained once on
synthetic frames and then frozen; a trainable linear projection aligns
its features with the text embedding space. Actions pass through a
3-layer MLP encoder whose output rides in a dedicated slot of the
interleaved sequence, and a matching 3-layer MLP decoder maps embeddings
back to coordinates through a logistic squash that keeps boxes valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import nn
from .errors import DimensionError, SchemaError
from .tensor import Tensor, no_grad
from .world import HAND4X2, ROBOT7D, ActionVector, VOCAB
from .seeding import stream

MOD_VIS = 0
MOD_TXT = 1
MOD_ACT = 2
MOD_MASK = 3
MODALITY_NAMES = ["VIS", "TXT", "ACT", "MASK"]

MAX_TEXT_LEN = 48


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """[B, S, S, 3] -> [B, (S/p)^2, p*p*3] float32 patch rows."""
    if frames.ndim == 3:
        frames = frames[None]
    b, s, _, c = frames.shape
    if s % patch != 0:
        raise DimensionError(f"frame size {s} not divisible by patch {patch}")
    n = s // patch
    x = frames.reshape(b, n, patch, n, patch, c)
    x = x.transpose(0, 1, 3, 2, 4, 5).reshape(b, n * n, patch * patch * c)
    return np.ascontiguousarray(x, dtype=np.float32)


class VisionEncoder(nn.Module):
    """Frozen patch network (phi) plus trainable projection into d_model."""

    def __init__(self, patch, d_vis, d_model, rng):
        d_patch = patch * patch * 3
        self.patch = patch
        self.d_vis = d_vis
        self.phi = nn.MLP([d_patch, 96, d_vis], rng, act=T.silu, final_act=T.tanh)
        self.proj = nn.Linear(d_vis, d_model, rng)

    def phi_features(self, frames: np.ndarray) -> np.ndarray:
        """Frozen per-patch features [B, n_patches, d_vis]; numpy in/out."""
        with no_grad():
            return self.phi(Tensor(patchify(frames, self.patch))).data

    def encode(self, frames: np.ndarray) -> Tensor:
        """Aligned visual tokens [B, n_patches, d_model]."""
        cols = patchify(frames, self.patch)
        feats = self.phi(Tensor(cols))
        return self.proj(feats)

    def encode_features(self, feats: np.ndarray) -> Tensor:
        return self.proj(Tensor(feats))

    def tokens_per_frame(self, frame_size):
        return (frame_size // self.patch) ** 2

    def phi_checksum(self) -> float:
        return float(sum(np.abs(t.data).sum() for t in self.phi._all_tensors().values()))


def pretrain_phi_v(frames: np.ndarray, patch, d_vis, d_model, steps, batch, lr, rng):
    """Train phi as a patch autoencoder, then freeze it.

    Stands in for an off-the-shelf image backbone: reconstruction pressure
    forces the bottleneck to encode color/position structure.
    """
    enc = VisionEncoder(patch, d_vis, d_model, rng)
    dec = nn.MLP([d_vis, 96, patch * patch * 3], rng, act=T.silu, final_act=T.sigmoid)
    opt = nn.Adam({**enc.phi.named_params("phi."), **dec.named_params("dec.")}, lr=lr)
    cols = patchify(frames, patch).reshape(-1, patch * patch * 3)
    losses = []
    for step in range(steps):
        idx = rng.integers(0, cols.shape[0], size=batch * 16)
        x = Tensor(cols[idx])
        rec = dec(enc.phi(x))
        diff = T.sub(rec, x)
        loss = T.tmean(T.mul(diff, diff))
        opt.zero_grad()
        T.backward(loss)
        opt.step()
        losses.append(loss.item())
    enc.phi.freeze()
    return enc, losses


class TextEmbedder(nn.Module):
    """Learned token table plus a within-segment positional table."""

    def __init__(self, d_model, rng, vocab_size=len(VOCAB)):
        self.vocab_size = vocab_size
        self.tok = Tensor((rng.standard_normal((vocab_size, d_model)) * 0.05).astype(np.float32),
                          requires_grad=True)
        self.pos = Tensor((rng.standard_normal((MAX_TEXT_LEN, d_model)) * 0.02).astype(np.float32),
                          requires_grad=True)

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise SchemaError(f"token id out of vocabulary (size {self.vocab_size})")
        if ids.size == 0:
            return Tensor(np.zeros(ids.shape + (self.tok.shape[1],), dtype=np.float32))
        emb = T.embedding(self.tok, ids)
        pos = T.take_slice(self.pos, slice(0, ids.shape[-1]))
        return T.add(emb, pos)


def _split_cols(t: Tensor):
    return [T.take_slice(t, (Ellipsis, k)) for k in range(t.shape[-1])]


class ActionCodec(nn.Module):
    """3-layer MLP encoder and decoder between actions and embeddings."""

    def __init__(self, schema, d_model, rng, hidden=64):
        self.schema = schema
        self.dim = 8 if schema == HAND4X2 else 7
        self.d_model = d_model
        self.enc = nn.MLP([self.dim, hidden, hidden, d_model], rng, act=T.silu)
        self.dec = nn.MLP([d_model, hidden, hidden, self.dim], rng, act=T.silu)

    def encode(self, actions) -> Tensor:
        """actions: np [.., dim] or ActionVector -> embedding Tensor [.., d_model]."""
        if isinstance(actions, ActionVector):
            if actions.schema != self.schema:
                raise SchemaError(f"expected {self.schema} action, got {actions.schema}")
            actions = actions.values
        arr = actions if isinstance(actions, Tensor) else Tensor(np.asarray(actions, dtype=np.float32))
        if arr.shape[-1] != self.dim:
            raise SchemaError(f"{self.schema} action has {self.dim} values, got {arr.shape[-1]}")
        return self.enc(arr)

    def decode(self, emb: Tensor) -> Tensor:
        """Embedding -> action values, squashed so every output is valid.

        Hand boxes are parameterized as (center, extent) per hand with
        logistic maps, which pins x1 < x2 and the box inside [0, 1]; the
        robot branch squashes position and normalizes the quaternion.
        """
        raw = self.dec(emb)
        if self.schema == HAND4X2:
            cols = _split_cols(raw)
            out = []
            for hand in range(2):
                cxr, cyr, wr, hr = cols[4 * hand:4 * hand + 4]
                w = T.add(T.mul(T.sigmoid(wr), 0.48), 0.02)
                h = T.add(T.mul(T.sigmoid(hr), 0.48), 0.02)
                cx = T.add(T.mul(T.sigmoid(cxr), T.sub(1.0, w)), T.mul(w, 0.5))
                cy = T.add(T.mul(T.sigmoid(cyr), T.sub(1.0, h)), T.mul(h, 0.5))
                out.extend([T.sub(cx, T.mul(w, 0.5)), T.sub(cy, T.mul(h, 0.5)),
                            T.add(cx, T.mul(w, 0.5)), T.add(cy, T.mul(h, 0.5))])
            stacked = [T.reshape(c, c.shape + (1,)) for c in out]
            return T.concat(stacked, axis=-1)
        cols = _split_cols(raw)
        x, y, z = (T.sigmoid(c) for c in cols[:3])
        qw = T.add(T.mul(T.sigmoid(cols[3]), 0.999), 1e-3)  # qw > 0 convention
        qx, qy, qz = cols[4], cols[5], cols[6]
        norm = T.tsqrt(T.add(T.add(T.mul(qw, qw), T.mul(qx, qx)),
                             T.add(T.mul(qy, qy), T.mul(qz, qz))))
        parts = [x, y, z, T.div(qw, norm), T.div(qx, norm), T.div(qy, norm), T.div(qz, norm)]
        stacked = [T.reshape(c, c.shape + (1,)) for c in parts]
        return T.concat(stacked, axis=-1)

    def decode_action(self, emb) -> ActionVector:
        e = emb if isinstance(emb, Tensor) else Tensor(np.asarray(emb, dtype=np.float32))
        with no_grad():
            vals = self.decode(e).data
        return ActionVector(self.schema, vals.reshape(-1))


def sample_actions(schema, n, rng) -> np.ndarray:
    """Plausible random actions for codec pretraining / round-trip tests."""
    if schema == HAND4X2:
        out = np.empty((n, 8), dtype=np.float32)
        for hand in range(2):
            half = rng.uniform(0.03, 0.12, n)
            cx = rng.uniform(0.0, 1.0, n) * (1 - 2 * half) + half
            cy = rng.uniform(0.0, 1.0, n) * (1 - 2 * half) + half
            out[:, 4 * hand:4 * hand + 4] = np.stack(
                [cx - half, cy - half, cx + half, cy + half], axis=1)
        return out
    pos = rng.uniform(0.1, 0.9, (n, 3))
    q = rng.standard_normal((n, 4))
    q[:, 0] = np.abs(q[:, 0]) + 1e-3
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return np.concatenate([pos, q], axis=1).astype(np.float32)


def pretrain_action_codec(codec: ActionCodec, steps, batch, lr, rng):
    """Autoencode random actions so round-trips are tight before Stage I."""
    opt = nn.Adam(codec.named_params(), lr=lr)
    losses = []
    for step in range(steps):
        a = sample_actions(codec.schema, batch, rng)
        rec = codec.decode(codec.encode(a))
        loss = T.tmean(T.tabs(T.sub(rec, a)))
        opt.zero_grad()
        T.backward(loss)
        opt.step()
        losses.append(loss.item())
    return losses


# -- interleaved sequences -------------------------------------------------------


@dataclass
class TokenSequence:
    """Single-episode interleaved sequence (the canonical, unbatched view)."""
    embeddings: Tensor          # [L, d_model]
    modality_tags: list[int]
    timestep_tags: list[int]

    def __len__(self):
        return len(self.modality_tags)


@dataclass
class SequenceBatch:
    """Batched sequence with one shared layout: [B, L, d] plus tag arrays."""
    emb: Tensor
    modality: np.ndarray        # [L]
    steps: np.ndarray           # [L]

    @property
    def length(self):
        return self.emb.shape[1]


class SeqBuilder:
    def __init__(self):
        self.parts, self.mods, self.steps = [], [], []

    def add(self, emb: Tensor, modality: int, step: int):
        if emb.ndim == 2:
            emb = T.reshape(emb, (emb.shape[0], 1, emb.shape[1]))
        self.parts.append(emb)
        self.mods.extend([modality] * emb.shape[1])
        self.steps.extend([step] * emb.shape[1])
        return self

    def build(self) -> SequenceBatch:
        return SequenceBatch(T.concat(self.parts, axis=1),
                             np.asarray(self.mods, dtype=np.int64),
                             np.asarray(self.steps, dtype=np.int64))


class MultimodalCodec(nn.Module):
    """Bundles the per-modality encoders plus the learned [MASK] vector."""

    def __init__(self, cfg, rng):
        self.d_model = cfg.d_model
        self.patch = cfg.patch
        self.vision = VisionEncoder(cfg.patch, cfg.d_vis, cfg.d_model, rng)
        self.text = TextEmbedder(cfg.d_model, rng)
        self.action = ActionCodec(cfg.schema, cfg.d_model, rng)
        self.mask_vec = Tensor((rng.standard_normal(cfg.d_model) * 0.05).astype(np.float32),
                               requires_grad=True)

    def mask_block(self, b, n) -> Tensor:
        block = T.reshape(self.mask_vec, (1, 1, self.d_model))
        return T.broadcast_to(block, (b, n, self.d_model))

    def vision_encode(self, frame: np.ndarray) -> Tensor:
        """Spec surface: one frame -> [n_patches, d_model] VIS tokens."""
        out = self.vision.encode(frame[None] if frame.ndim == 3 else frame)
        return T.reshape(out, out.shape[1:]) if frame.ndim == 3 else out

    def text_embed(self, ids) -> Tensor:
        return self.text(ids)

    def action_encode(self, action) -> Tensor:
        return self.action.encode(action)

    def action_decode(self, emb) -> ActionVector:
        return self.action.decode_action(emb)


def build_interleaved_sequence(codec: MultimodalCodec, states, mask_t0: bool) -> TokenSequence:
    """states: list of (frame, action_or_embedding_or_None, text_ids_or_None).

    Per state the layout is [VIS tokens, TXT tokens (state 0 only), ACT
    token]. With mask_t0 the state-0 VIS and ACT slots carry the learned
    mask embedding tagged MASK; the prompt text stays visible.
    """
    if not states:
        raise ValueError("need at least one state")
    frame_sizes = [f.shape[0] for f, _, _ in states if f is not None]
    if not frame_sizes:
        raise ValueError("at least one state needs a frame to fix the token count")
    n_vis = codec.vision.tokens_per_frame(frame_sizes[0])
    sb = SeqBuilder()
    for step, (frame, action, text_ids) in enumerate(states):
        masked = mask_t0 and step == 0
        if masked or frame is None:
            sb.add(codec.mask_block(1, n_vis), MOD_MASK, step)
        else:
            sb.add(codec.vision.encode(frame[None]), MOD_VIS, step)
        if step == 0 and text_ids is not None and len(text_ids) > 0:
            sb.add(codec.text(np.asarray(text_ids)[None, :]), MOD_TXT, step)
        if masked or action is None:
            sb.add(codec.mask_block(1, 1), MOD_MASK, step)
        elif isinstance(action, (ActionVector, np.ndarray)):
            emb = codec.action.encode(action if isinstance(action, ActionVector)
                                      else ActionVector(codec.action.schema, action))
            sb.add(T.reshape(emb, (1, 1, codec.d_model)), MOD_ACT, step)
        else:  # a predicted embedding Tensor
            emb = action if isinstance(action, Tensor) else Tensor(np.asarray(action, np.float32))
            sb.add(T.reshape(emb, (1, 1, codec.d_model)), MOD_ACT, step)
    batch = sb.build()
    return TokenSequence(T.reshape(batch.emb, batch.emb.shape[1:]),
                         list(batch.modality), list(batch.steps))
