"""Binary container: magic "EGPM", u32 version, u32 JSON length, JSON
metadata, then float32 little-endian arrays in metadata-declared order.

Datasets and checkpoints both use this layout; the JSON side carries
shapes, schema, vocabulary, seeds, config hashes, and any other
structured payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError
from .world import EpisodeRecord, VOCAB

MAGIC = b"EGPM"
VERSION = 1


def write_container(path, meta: dict, arrays: dict[str, np.ndarray]):
    """meta gains an "arrays" index [(name, shape), ...] in write order."""
    order = list(arrays)
    meta = dict(meta)
    meta["arrays"] = [[name, list(arrays[name].shape)] for name in order]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in order:
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            fh.write(arr.tobytes())


def read_container(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != VERSION:
            raise DataError(f"{path}: unsupported container version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        try:
            meta = json.loads(fh.read(meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt metadata: {exc}") from exc
        arrays = {}
        for name, shape in meta.get("arrays", []):
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise DataError(f"{path}: truncated array {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return meta, arrays


# -- dataset layer --------------------------------------------------------------


def save_dataset(path, episodes: list[EpisodeRecord], cfg_dict: dict, root_seed: int):
    frames = np.stack([ep.frames for ep in episodes])
    actions = np.stack([ep.actions for ep in episodes])
    goals = np.stack([ep.goal_center for ep in episodes])
    meta = {
        "kind": "dataset",
        "world_config": cfg_dict,
        "vocab": VOCAB,
        "schema": episodes[0].schema,
        "root_seed": int(root_seed),
        "seeds": [int(ep.seed) for ep in episodes],
        "instructions": [ep.instruction for ep in episodes],
        "narrations": [ep.narration_target for ep in episodes],
        "success": [bool(ep.success) for ep in episodes],
        "n_episodes": len(episodes),
    }
    write_container(path, meta, {"frames": frames, "actions": actions, "goals": goals})


class Dataset:
    """Loaded dataset; episodes indexable, arrays kept stacked for batching."""

    def __init__(self, meta, arrays):
        if meta.get("kind") != "dataset":
            raise DataError(f"expected a dataset container, got kind={meta.get('kind')!r}")
        self.meta = meta
        self.frames = arrays["frames"]          # [N, T, S, S, 3]
        self.actions = arrays["actions"]        # [N, T, A]
        self.goals = arrays["goals"]            # [N, 2]
        self.instructions = np.asarray(meta["instructions"], dtype=np.int64)
        self.narrations = np.asarray(meta["narrations"], dtype=np.int64)
        self.seeds = list(meta["seeds"])
        self.success = list(meta["success"])
        self.schema = meta["schema"]
        self.world_config = meta["world_config"]

    @classmethod
    def load(cls, path):
        return cls(*read_container(path))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def horizon(self):
        return self.frames.shape[1]

    @property
    def frame_size(self):
        return self.frames.shape[2]


# -- checkpoint layer -----------------------------------------------------------


def save_checkpoint(path, kind: str, arrays: dict[str, np.ndarray], extra: dict):
    meta = {"kind": kind}
    meta.update(extra)
    write_container(path, meta, arrays)


def load_checkpoint(path, kind: str):
    meta, arrays = read_container(path)
    if meta.get("kind") != kind:
        raise DataError(f"{path}: expected checkpoint kind {kind!r}, got {meta.get('kind')!r}")
    return meta, arrays
