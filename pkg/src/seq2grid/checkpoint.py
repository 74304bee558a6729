"""Flat binary container for parameters, optimizer moments, and grid
dumps.

Byte layout (all integers little-endian):

    offset 0   magic b"S2GRID\\x01\\n"            (8 bytes)
    offset 8   u32 header_len
    offset 12  header JSON, UTF-8                  (header_len bytes)
    then per entry, repeated header["entries"] times:
        u16 name_len, name UTF-8
        u8  ndim, then ndim x u32 dims
        float64 payload, row-major, dims product x 8 bytes

The header always carries "config_hash" (sha256 hex prefix of the
canonical config), "step", and "kind" ("checkpoint" or "grid_dump").
Optimizer moments ride along as entries prefixed "opt.m." / "opt.v.".
"""

import hashlib
import json
import struct

import numpy as np

from .errors import StateError

MAGIC = b"S2GRID\x01\n"
OPT_M, OPT_V = "opt.m.", "opt.v."


def config_hash(config_text):
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()[:16]


def save_container(path, arrays, header):
    header = dict(header, entries=len(arrays))
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            # ascontiguousarray would promote 0-d arrays to 1-d
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_container(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise StateError(f"{path}: not a parameter container")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for _ in range(header["entries"]):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(dims)) if dims else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise StateError(f"{path}: truncated payload for {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return header, arrays


def save_checkpoint(path, params, cfg_hash, step, optimizer=None, extra=None):
    """extra: JSON-safe header fields (run config text, vocab tokens)
    that make the checkpoint self-describing for eval/visualize."""
    arrays = {name: p.data for name, p in params.items()}
    if optimizer is not None:
        for name, m in optimizer.m.items():
            arrays[OPT_M + name] = m
        for name, v in optimizer.v.items():
            arrays[OPT_V + name] = v
    header = dict(extra or {})
    header.update({
        "kind": "checkpoint", "config_hash": cfg_hash, "step": step,
        "optimizer_steps": optimizer.step_count if optimizer else 0,
    })
    save_container(path, arrays, header)


def load_checkpoint(path):
    header, arrays = load_container(path)
    if header.get("kind") != "checkpoint":
        raise StateError(f"{path}: container is not a checkpoint")
    params = {k: v for k, v in arrays.items()
              if not k.startswith((OPT_M, OPT_V))}
    moments = {
        "m": {k[len(OPT_M):]: v for k, v in arrays.items() if k.startswith(OPT_M)},
        "v": {k[len(OPT_V):]: v for k, v in arrays.items() if k.startswith(OPT_V)},
    }
    return header, params, moments


def restore_params(params, arrays):
    for name, p in params.items():
        if name not in arrays:
            raise StateError(f"checkpoint is missing parameter {name}")
        if arrays[name].shape != p.data.shape:
            raise StateError(
                f"checkpoint parameter {name} has shape {arrays[name].shape}, "
                f"model expects {p.data.shape}"
            )
        p.data[...] = arrays[name]


def save_grid_dump(path, slots, nearest_ids, cfg_hash):
    """Grid dump for the visualizer: slot vectors, per-slot nearest
    token id, and per-slot L2 norm."""
    slots = np.asarray(slots)
    norms = np.sqrt((slots * slots).sum(axis=-1))
    save_container(path, {
        "slots": slots,
        "nearest_token_id": np.asarray(nearest_ids, dtype=np.float64),
        "l2_norm": norms,
    }, {"kind": "grid_dump", "config_hash": cfg_hash, "step": 0})
