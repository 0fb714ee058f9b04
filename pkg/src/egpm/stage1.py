"""Stage I: autoregressive prediction of next-state actions and narration.

A decoder-only transformer consumes interleaved vision/text/action tokens
for two consecutive states and predicts the following state's action
embedding plus an action description. Training follows the consecutive
scheme: the first window pairs a learned zero-state mask with the first
real state, the second window pairs the first real state with the model's
own predicted action embedding, so inference-time chaining matches what
the model saw during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from . import nn
from .codec import (MOD_ACT, MOD_MASK, MOD_TXT, MOD_VIS, MultimodalCodec,
                    SeqBuilder, SequenceBatch, TokenSequence,
                    pretrain_action_codec, pretrain_phi_v)
from .config import ACTION_CODEC, ACTION_NONE, ACTION_PLAIN_TEXT, RunConfig
from .container import save_checkpoint, load_checkpoint
from .errors import NumericError, SchemaError
from .seeding import stream
from .tensor import Tensor, no_grad
from .world import (HAND4X2, ActionVector, action_to_text_ids, text_ids_to_action,
                    END_ID, VOCAB)

MAX_SEQ_LEN = 192
MAX_STEP_TAG = 8
NARRATION_CAP = 16


# -- geometric losses -----------------------------------------------------------


def _check_box(b):
    b = np.asarray(b, dtype=np.float64).reshape(4)
    if not (b[0] < b[2] and b[1] < b[3]):
        raise ValueError(f"degenerate box {b.tolist()}")
    return b


def giou(a, b) -> float:
    """Generalized IoU of two (x1, y1, x2, y2) boxes; in [-1, 1]."""
    a, b = _check_box(a), _check_box(b)
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    cw = max(a[2], b[2]) - min(a[0], b[0])
    ch = max(a[3], b[3]) - min(a[1], b[1])
    enclosing = cw * ch
    return inter / union - (enclosing - union) / enclosing


def _col(t, k):
    return T.take_slice(t, (Ellipsis, k))


def giou_tensor(a: Tensor, b) -> Tensor:
    """Differentiable GIoU for [..., 4] boxes (b may be a numpy target)."""
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=np.float32))
    ax1, ay1, ax2, ay2 = (_col(a, k) for k in range(4))
    bx1, by1, bx2, by2 = (_col(b, k) for k in range(4))
    iw = T.relu(T.sub(T.minimum(ax2, bx2), T.maximum(ax1, bx1)))
    ih = T.relu(T.sub(T.minimum(ay2, by2), T.maximum(ay1, by1)))
    inter = T.mul(iw, ih)
    area_a = T.mul(T.sub(ax2, ax1), T.sub(ay2, ay1))
    area_b = T.mul(T.sub(bx2, bx1), T.sub(by2, by1))
    union = T.sub(T.add(area_a, area_b), inter)
    cw = T.sub(T.maximum(ax2, bx2), T.minimum(ax1, bx1))
    ch = T.sub(T.maximum(ay2, by2), T.minimum(ay1, by1))
    enclosing = T.mul(cw, ch)
    return T.sub(T.div(inter, union), T.div(T.sub(enclosing, union), enclosing))


def action_loss_tensor(pred: Tensor, target, schema, lambda2) -> Tensor:
    """Mean L1 over coordinates plus, for hand boxes, lambda2 * sum of
    (1 - GIoU) over the two hands. Robot poses use L1 only."""
    tgt = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=np.float32))
    l1 = T.tmean(T.tabs(T.sub(pred, tgt)))
    if schema != HAND4X2 or lambda2 == 0:
        return l1
    g1 = giou_tensor(pred[..., 0:4], tgt[..., 0:4])
    g2 = giou_tensor(pred[..., 4:8], tgt[..., 4:8])
    penalty = T.add(T.sub(1.0, g1), T.sub(1.0, g2))
    return T.add(l1, T.mul(T.tmean(penalty), lambda2))


def loss_action(pred: ActionVector, gt: ActionVector, lambda2=0.01) -> float:
    if pred.schema != gt.schema:
        raise SchemaError(f"schema mismatch: {pred.schema} vs {gt.schema}")
    l1 = float(np.abs(pred.values - gt.values).mean())
    if pred.schema != HAND4X2:
        return l1
    pa, pb = pred.boxes()
    ga, gb = gt.boxes()
    return l1 + lambda2 * ((1 - giou(pa, ga)) + (1 - giou(pb, gb)))


def cross_entropy(logits: Tensor, ids) -> Tensor:
    """Mean token cross-entropy; logits [N, V] against integer ids [N]."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != ids.shape[0]:
        raise ValueError(f"cross_entropy: logits {logits.shape} vs {ids.shape[0]} targets")
    shift = Tensor(logits.data.max(axis=-1, keepdims=True))  # constant, gradient-neutral
    z = T.sub(logits, shift)
    lse = T.tlog(T.tsum(T.texp(z), axis=-1))
    picked = T.take_rows(z, ids)
    return T.tmean(T.sub(lse, picked))


def loss_language(logits, target_ids) -> Tensor:
    """Spec surface: accepts [L, V] or [B, L, V] logits with aligned ids."""
    t = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float32))
    ids = np.asarray(target_ids, dtype=np.int64)
    flat = T.reshape(t, (-1, t.shape[-1]))
    return cross_entropy(flat, ids.reshape(-1))


# -- model ------------------------------------------------------------------------


class ARModel(nn.Module):
    """Decoder-only transformer over an interleaved token sequence."""

    def __init__(self, cfg: RunConfig, rng, vocab_size=len(VOCAB)):
        d = cfg.d_model
        self.pos = Tensor((rng.standard_normal((MAX_SEQ_LEN, d)) * 0.02).astype(np.float32),
                          requires_grad=True)
        self.mod_emb = Tensor((rng.standard_normal((4, d)) * 0.02).astype(np.float32),
                              requires_grad=True)
        self.step_emb = Tensor((rng.standard_normal((MAX_STEP_TAG, d)) * 0.02).astype(np.float32),
                               requires_grad=True)
        self.blocks = [nn.TransformerBlock(d, cfg.n_heads, rng) for _ in range(cfg.n_layers)]
        self.ln_f = nn.LayerNorm(d)
        self.lm_head = nn.Linear(d, vocab_size, rng, scale=0.02)
        self.act_head = nn.Linear(d, d, rng)

    def hidden(self, seq: SequenceBatch) -> Tensor:
        L = seq.length
        x = T.add(seq.emb, T.take_slice(self.pos, slice(0, L)))
        x = T.add(x, T.embedding(self.mod_emb, seq.modality))
        x = T.add(x, T.embedding(self.step_emb, np.minimum(seq.steps, MAX_STEP_TAG - 1)))
        causal = np.tril(np.ones((L, L), dtype=bool))
        for blk in self.blocks:
            x = blk(x, causal)
        return self.ln_f(x)

    def logits(self, hidden: Tensor) -> Tensor:
        return self.lm_head(hidden)

    def act_embedding(self, hidden: Tensor, anchor: int) -> Tensor:
        return self.act_head(T.take_slice(hidden, (slice(None), anchor)))


def ar_forward(model, seq: TokenSequence, anchor=None):
    """Single-sequence forward: (language logits [L, V], ACT embedding [d])."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    batch = SequenceBatch(T.reshape(seq.embeddings, (1,) + tuple(seq.embeddings.shape)),
                          np.asarray(seq.modality_tags), np.asarray(seq.timestep_tags))
    ar = model.ar if isinstance(model, Stage1Model) else model
    h = ar.hidden(batch)
    logits = ar.logits(h)
    if anchor is None:
        anchor = batch.length - 1
    emb = ar.act_embedding(h, anchor)
    return T.reshape(logits, logits.shape[1:]), T.reshape(emb, (emb.shape[-1],))


# -- window assembly ---------------------------------------------------------------


@dataclass
class StateInput:
    """One conditioning state: real, masked, or model-predicted."""
    frame: np.ndarray | None = None
    action: ActionVector | None = None
    act_embedding: object = None        # Tensor or np [d_model]
    act_text_ids: np.ndarray | None = None   # spelled coordinates (plain-text arm)

    @staticmethod
    def masked():
        return StateInput()

    @staticmethod
    def real(frame, action):
        return StateInput(frame=frame, action=action)

    @staticmethod
    def predicted(act_embedding):
        return StateInput(act_embedding=act_embedding)


class Stage1Model(nn.Module):
    def __init__(self, cfg: RunConfig, rng):
        self.codec = MultimodalCodec(cfg, rng)
        self.ar = ARModel(cfg, rng)

    def trainable_params(self):
        return {**self.codec.named_params("codec."), **self.ar.named_params("ar.")}


def _add_state_block(sb: SeqBuilder, model: Stage1Model, cfg, state, step, b, n_vis,
                     vis_cache=None, with_prompt=None):
    """Append one state's tokens: [VIS, TXT(prompt, state 0 only), ACT]."""
    codec = model.codec
    if state["vis"] is None:
        sb.add(codec.mask_block(b, n_vis), MOD_MASK, step)
    else:
        sb.add(state["vis"], MOD_VIS, step)
    if with_prompt is not None:
        sb.add(with_prompt, MOD_TXT, step)
    mode = cfg.action_input
    if mode == ACTION_NONE:
        return
    act = state["act"]
    if mode == ACTION_PLAIN_TEXT:
        if act is None:
            sb.add(codec.mask_block(b, 4 * codec.action.dim), MOD_MASK, step)
        else:
            sb.add(act, MOD_TXT, step)
        return
    if act is None:
        sb.add(codec.mask_block(b, 1), MOD_MASK, step)
    else:
        sb.add(act if act.ndim == 3 else T.reshape(act, (b, 1, codec.d_model)), MOD_ACT, step)


def _assemble_window(model, cfg, states, instr_ids, nar_in_ids):
    """states: list of {"vis": Tensor|None, "act": Tensor|None} dicts.

    Returns (SequenceBatch, anchor) where anchor is the final token index
    of the last state block; narration teacher tokens follow it.
    """
    b = instr_ids.shape[0]
    n_vis = model.codec.vision.tokens_per_frame(cfg.frame_size)
    sb = SeqBuilder()
    prompt = model.codec.text(instr_ids)
    for i, state in enumerate(states):
        _add_state_block(sb, model, cfg, state, i, b, n_vis,
                         with_prompt=prompt if i == 0 else None)
    anchor = len(sb.mods) - 1
    if nar_in_ids is not None and nar_in_ids.shape[1] > 0:
        sb.add(model.codec.text(nar_in_ids), MOD_TXT, len(states))
    return sb.build(), anchor


def _vis(model, frames):
    return model.codec.vision.encode(frames)


def _act_src(model, cfg, actions=None, emb=None, text_ids=None):
    if cfg.action_input == ACTION_PLAIN_TEXT:
        return model.codec.text(text_ids) if text_ids is not None else None
    if cfg.action_input == ACTION_NONE:
        return None
    if emb is not None:
        return emb
    return model.codec.action.encode(actions) if actions is not None else None


def _lm_loss_at(model, hidden, anchor, targets):
    """CE of positions anchor..anchor+K-1 against targets [B, K]."""
    b, k = targets.shape
    logits = model.ar.logits(T.take_slice(hidden, (slice(None), slice(anchor, anchor + k))))
    return cross_entropy(T.reshape(logits, (b * k, logits.shape[-1])), targets.reshape(-1))


def _action_term(model, cfg, emb_pred, target_actions):
    """Coordinate loss + embedding-space anchor + codec round-trip health."""
    codec = model.codec.action
    coords = codec.decode(emb_pred)
    term = action_loss_tensor(coords, target_actions, cfg.schema, cfg.lambda2)
    if cfg.embed_loss_weight > 0:
        with no_grad():
            tgt_emb = codec.encode(target_actions).data
        diff = T.sub(emb_pred, Tensor(tgt_emb))
        term = T.add(term, T.mul(T.tmean(T.mul(diff, diff)), cfg.embed_loss_weight))
    if cfg.codec_rt_weight > 0:
        rt = codec.decode(codec.encode(target_actions))
        term = T.add(term, T.mul(T.tmean(T.tabs(T.sub(rt, target_actions))),
                                 cfg.codec_rt_weight))
    return term, coords


@dataclass
class CosmoBatch:
    frames: np.ndarray         # [B, T, S, S, 3]
    actions: np.ndarray        # [B, T, A]
    instructions: np.ndarray   # [B, Li]
    narrations: np.ndarray     # [B, Ln] including the end token


def _spell_batch(actions):
    return np.stack([action_to_text_ids(ActionVector(HAND4X2, a))
                     if a.shape[-1] == 8 else
                     action_to_text_ids(ActionVector("robot7d", a)) for a in actions])


def loss_cosmo(batch: CosmoBatch, model: Stage1Model, cfg: RunConfig):
    """Two chained prediction windows; the second consumes the first's
    predicted action embedding (visual slot masked, matching inference).

    Returns (total, parts). Episodes with fewer than 4 states skip the
    second window and record parts["step_b_skipped"] = True.
    """
    frames, actions = batch.frames, batch.actions
    horizon = frames.shape[1]
    nar_in = batch.narrations[:, :-1]
    nar_tgt = batch.narrations

    vis1 = _vis(model, frames[:, 1])
    act1 = _act_src(model, cfg, actions=actions[:, 1])

    seq_a, anchor_a = _assemble_window(
        model, cfg,
        [{"vis": None, "act": None}, {"vis": vis1, "act": act1}],
        batch.instructions, nar_in)
    hid_a = model.ar.hidden(seq_a)
    lang_a = _lm_loss_at(model, hid_a, anchor_a, nar_tgt)
    emb_a = model.ar.act_embedding(hid_a, anchor_a)
    act_a, _ = _action_term(model, cfg, emb_a, actions[:, 2])

    parts = {"lang_a": lang_a.item(), "act_a": act_a.item(), "step_b_skipped": False}
    total = lang_a if cfg.lambda1 == 0 else T.add(lang_a, T.mul(act_a, cfg.lambda1))

    if horizon >= 4:
        state2 = {"vis": None, "act": T.reshape(emb_a, (emb_a.shape[0], 1, emb_a.shape[1]))}
        seq_b, anchor_b = _assemble_window(
            model, cfg, [{"vis": vis1, "act": act1}, state2],
            batch.instructions, nar_in)
        hid_b = model.ar.hidden(seq_b)
        lang_b = _lm_loss_at(model, hid_b, anchor_b, nar_tgt)
        emb_b = model.ar.act_embedding(hid_b, anchor_b)
        act_b, _ = _action_term(model, cfg, emb_b, actions[:, 3])
        parts.update(lang_b=lang_b.item(), act_b=act_b.item())
        total = T.add(total, lang_b if cfg.lambda1 == 0
                      else T.add(lang_b, T.mul(act_b, cfg.lambda1)))
    else:
        parts["step_b_skipped"] = True
    return total, parts


def loss_single_state(batch: CosmoBatch, model, cfg, target_steps=(2, 3)):
    """Baseline without consecutive modeling: one real state per window."""
    frames, actions = batch.frames, batch.actions
    nar_in, nar_tgt = batch.narrations[:, :-1], batch.narrations
    total, parts = None, {}
    for tgt in target_steps:
        if tgt >= frames.shape[1]:
            continue
        cur = tgt - 1
        if cfg.action_input == ACTION_PLAIN_TEXT:
            spelled_in = _spell_batch(actions[:, cur])
            spelled_tgt = _spell_batch(actions[:, tgt])
            lm_tgt = np.concatenate([spelled_tgt, nar_tgt], axis=1)
            lm_in = lm_tgt[:, :-1]
            seq, anchor = _assemble_window(
                model, cfg,
                [{"vis": _vis(model, frames[:, cur]), "act": model.codec.text(spelled_in)}],
                batch.instructions, lm_in)
            hid = model.ar.hidden(seq)
            lang = _lm_loss_at(model, hid, anchor, lm_tgt)
            parts[f"lang_t{tgt}"] = lang.item()
            total = lang if total is None else T.add(total, lang)
            continue
        seq, anchor = _assemble_window(
            model, cfg,
            [{"vis": _vis(model, frames[:, cur]),
              "act": _act_src(model, cfg, actions=actions[:, cur])}],
            batch.instructions, nar_in)
        hid = model.ar.hidden(seq)
        lang = _lm_loss_at(model, hid, anchor, nar_tgt)
        emb = model.ar.act_embedding(hid, anchor)
        act, _ = _action_term(model, cfg, emb, actions[:, tgt])
        parts[f"lang_t{tgt}"] = lang.item()
        parts[f"act_t{tgt}"] = act.item()
        step_total = lang if cfg.lambda1 == 0 else T.add(lang, T.mul(act, cfg.lambda1))
        total = step_total if total is None else T.add(total, step_total)
    return total, parts


def training_loss(batch, model, cfg):
    if cfg.cosmo and cfg.action_input != ACTION_PLAIN_TEXT:
        return loss_cosmo(batch, model, cfg)
    return loss_single_state(batch, model, cfg)


# -- training ---------------------------------------------------------------------


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append(kw)

    def smoothed(self, key, window=10):
        vals = [r[key] for r in self.rows if key in r]
        if not vals:
            return []
        out = []
        for i in range(len(vals)):
            lo = max(0, i - window + 1)
            out.append(sum(vals[lo:i + 1]) / (i + 1 - lo))
        return out


def train_stage1(dataset, cfg: RunConfig, seed: int):
    """Full Stage-I optimization; returns (model, log, extras)."""
    cfg.validate()
    rng_init = stream(seed, "stage1.init")
    model = Stage1Model(cfg, rng_init)

    # vision backbone: autoencoder pretrain on dataset frames, then frozen
    flat_frames = dataset.frames.reshape(-1, *dataset.frames.shape[2:])
    sub = stream(seed, "phi_v.sample").permutation(flat_frames.shape[0])[:2048]
    enc, phi_losses = pretrain_phi_v(flat_frames[sub], cfg.patch, cfg.d_vis, cfg.d_model,
                                     cfg.phi_v_steps, cfg.phi_v_batch, cfg.phi_v_lr,
                                     stream(seed, "phi_v.train"))
    model.codec.vision.phi = enc.phi  # frozen
    codec_losses = []
    if cfg.action_input != ACTION_PLAIN_TEXT:
        codec_losses = pretrain_action_codec(model.codec.action, cfg.codec_steps,
                                             cfg.codec_batch, cfg.codec_lr,
                                             stream(seed, "codec.train"))

    opt = nn.Adam(model.trainable_params(), lr=cfg.stage1_lr)
    log = TrainLog()
    n = len(dataset)
    step = 0
    for epoch in range(cfg.stage1_epochs):
        order = stream(seed, "stage1.shuffle", epoch).permutation(n)
        for lo in range(0, n - cfg.stage1_batch + 1, cfg.stage1_batch):
            idx = order[lo:lo + cfg.stage1_batch]
            batch = CosmoBatch(dataset.frames[idx], dataset.actions[idx],
                               dataset.instructions[idx], dataset.narrations[idx])
            total, parts = training_loss(batch, model, cfg)
            val = total.item()
            if not math.isfinite(val):
                raise NumericError(f"stage1 loss became non-finite at step {step}: {parts}")
            opt.zero_grad()
            T.backward(total)
            opt.step()
            log.add(epoch=epoch, step=step, loss=val,
                    **{k: v for k, v in parts.items() if isinstance(v, float)})
            step += 1
    extras = {"phi_losses": phi_losses, "codec_losses": codec_losses,
              "optimizer": opt}
    return model, log, extras


def save_stage1(path, model, cfg, seed, opt=None, log=None):
    arrays = model._all_tensors()
    arrays = {k: v.data for k, v in arrays.items()}
    if opt is not None:
        arrays.update(opt.state_arrays())
    extra = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
             "root_seed": int(seed),
             "loss_rows": (log.rows if log else [])[-200:]}
    save_checkpoint(path, "stage1", arrays, extra)


def load_stage1(path):
    meta, arrays = load_checkpoint(path, "stage1")
    cfg = RunConfig(**meta["config"])
    model = Stage1Model(cfg, stream(meta["root_seed"], "stage1.init"))
    model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("adam.")})
    model.codec.vision.phi.freeze()
    return model, cfg, meta


# -- inference ---------------------------------------------------------------------


def _state_to_dict(model, cfg, s: StateInput):
    vis = None if s.frame is None else _vis(model, s.frame[None])
    act = _act_src(model, cfg, actions=None if s.action is None else s.action.values[None],
                   emb=None, text_ids=None if s.act_text_ids is None else s.act_text_ids[None])
    if s.act_embedding is not None:
        e = s.act_embedding if isinstance(s.act_embedding, Tensor) else Tensor(
            np.asarray(s.act_embedding, np.float32))
        act = T.reshape(e, (1, 1, e.shape[-1]))
    return {"vis": vis, "act": act}


def greedy_narration(model, cfg, states_dicts, instr_ids, rng=None, cap=NARRATION_CAP):
    """Decode narration ids token by token until <end> or the cap."""
    out = []
    for _ in range(cap):
        nar_in = np.asarray([out], dtype=np.int64) if out else np.zeros((1, 0), dtype=np.int64)
        seq, anchor = _assemble_window(model, cfg, states_dicts, instr_ids, nar_in)
        with no_grad():
            hid = model.ar.hidden(seq)
            logits = model.ar.logits(T.take_slice(hid, (slice(None), anchor + len(out)))).data[0]
        if cfg.narration_temperature > 0 and rng is not None:
            p = np.exp((logits - logits.max()) / cfg.narration_temperature)
            p /= p.sum()
            tok = int(rng.choice(len(p), p=p))
        else:
            tok = int(np.argmax(logits))
        out.append(tok)
        if tok == END_ID:
            break
    return out


def predict_state(model, prev: StateInput, cur: StateInput, prompt_ids, cfg,
                  decode_narration=True, rng=None):
    """One consecutive-window prediction -> (ActionVector, narration ids,
    predicted embedding). Plain-text models spell the coordinates instead."""
    instr = np.asarray(prompt_ids, dtype=np.int64)[None, :]
    states = [_state_to_dict(model, cfg, prev), _state_to_dict(model, cfg, cur)]
    if not cfg.cosmo:
        states = states[1:]
    if cfg.action_input == ACTION_PLAIN_TEXT:
        dim = model.codec.action.dim
        spelled = greedy_narration(model, cfg, states, instr, rng=rng, cap=4 * dim)
        action = text_ids_to_action(spelled, cfg.schema)
        if action is None:
            fallback = cur.action.values if cur.action is not None else np.full(
                dim, 0.5, dtype=np.float32)
            action = ActionVector(cfg.schema, fallback)
        narration = []
        if decode_narration:
            # continue decoding past the spelled coordinates
            full = greedy_narration(model, cfg, states, instr, rng=rng,
                                    cap=4 * dim + NARRATION_CAP)
            narration = full[4 * dim:]
        return action, narration, np.asarray(spelled, dtype=np.int64)
    empty = np.zeros((1, 0), dtype=np.int64)
    seq, anchor = _assemble_window(model, cfg, states, instr, empty)
    with no_grad():
        hid = model.ar.hidden(seq)
        emb = model.ar.act_embedding(hid, anchor).data[0]
    action = model.codec.action.decode_action(emb)
    narration = greedy_narration(model, cfg, states, instr, rng=rng) if decode_narration else []
    return action, narration, emb


def rollout_actions(model, prefix, prompt_ids, horizon, cfg, decode_narration=False):
    """Chained next-action prediction for `horizon` steps.

    prefix is the two observed states; slot t-1 of the first window uses
    the zero-state mask convention, matching how the model was trained.
    Each predicted embedding becomes the next window's action input with a
    masked visual slot, and the window slides by one state.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    prev, cur = StateInput.masked(), prefix[1]
    actions, embs, narration = [], [], []
    for h in range(horizon):
        act, nar, emb = predict_state(model, prev, cur, prompt_ids, cfg,
                                      decode_narration=(decode_narration and h == 0))
        actions.append(act)
        embs.append(emb)
        if h == 0:
            narration = nar
        if cfg.action_input == ACTION_PLAIN_TEXT:
            nxt = StateInput(act_text_ids=np.asarray(emb, dtype=np.int64))
        else:
            nxt = StateInput.predicted(emb)
        prev, cur = cur, nxt
    return actions, narration, embs
