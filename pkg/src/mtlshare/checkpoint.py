"""Self-describing binary checkpoints.

Layout (all integers little-endian)::

    magic      4 bytes  b"MTLS"
    version    1 byte   FORMAT_VERSION
    hlen       8 bytes  uint64, length of the JSON header
    header     hlen bytes UTF-8 JSON
    payload    float64 little-endian arrays, back to back, in header order
    crc32      4 bytes  uint32 over every preceding byte

The header holds ``arrays`` (name, shape, offset in floats), the config
echo, combiner states, LWS logits and PRNG/sampler states. Loading parses
and validates the whole file before touching the target state.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"MTLS"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sBQ")


class CheckpointError(ValueError):
    pass


def encode(arrays: list[tuple[str, np.ndarray]], meta: dict) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"arrays": entries, **meta}, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], list[str], dict]:
    if len(blob) < _PREFIX.size + 4:
        raise CheckpointError("checkpoint truncated: missing prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != crc:
        raise CheckpointError("checkpoint truncated or corrupted: checksum mismatch")
    start = _PREFIX.size
    if start + hlen > len(blob) - 4:
        raise CheckpointError("checkpoint truncated: header incomplete")
    header = json.loads(blob[start:start + hlen].decode("utf-8"))
    payload = np.frombuffer(blob, dtype="<f8", offset=start + hlen, count=(len(blob) - 4 - start - hlen) // 8)
    arrays, names = {}, []
    for entry in header.pop("arrays"):
        n = int(np.prod(entry["shape"], dtype=np.int64))
        lo = entry["offset"]
        if lo + n > payload.size:
            raise CheckpointError(f"checkpoint truncated: array {entry['name']} incomplete")
        arrays[entry["name"]] = payload[lo:lo + n].reshape(entry["shape"]).astype(np.float64)
        names.append(entry["name"])
    return arrays, names, header


def check_schema(saved: dict[str, np.ndarray], saved_names: list[str], target: list[tuple[str, np.ndarray]]) -> None:
    """Raise on the first name or shape mismatch between a checkpoint and a target."""
    target_names = [n for n, _ in target]
    for i, (name, arr) in enumerate(target):
        if i >= len(saved_names):
            raise CheckpointError(f"checkpoint has no array for {name!r}")
        if saved_names[i] != name:
            raise CheckpointError(f"array {i}: checkpoint has {saved_names[i]!r}, target expects {name!r}")
        if saved[name].shape != arr.shape:
            raise CheckpointError(f"array {name!r}: checkpoint shape {saved[name].shape} != target shape {arr.shape}")
    if len(saved_names) > len(target_names):
        raise CheckpointError(f"checkpoint has unexpected array {saved_names[len(target_names)]!r}")


def write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(blob)
        tmp.replace(path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


def save_state(state, path, mtds=None) -> None:
    """Write a :class:`~mtlshare.trainer.TrainState` (and optionally the sampler position)."""
    meta = {
        "config": state.config.to_dict(),
        "backbone": {
            "layer_specs": [[s.kind, s.size, s.kernel] for s in state.backbone.layer_specs],
            "input_shape": list(state.backbone.input_shape),
            "head_widths": list(state.backbone.head_widths),
        },
        "combiners": [c.state_dict() for c in state.combiners],
        "lws": None if state.dist is None else state.dist.state_dict(),
        "prng": None if state.prng is None else state.prng.get_state(),
        "sampler": None if mtds is None else mtds.state_dict(),
    }
    write_bytes(path, encode(state.named_arrays(), meta))


def load_state(state, path, mtds=None) -> dict:
    """Restore ``state`` in place from ``path``; returns the header metadata."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    arrays, names, meta = decode(blob)
    check_schema(arrays, names, state.named_arrays())
    if len(meta["combiners"]) != len(state.combiners):
        raise CheckpointError(f"checkpoint has {len(meta['combiners'])} combiners, target has {len(state.combiners)}")
    if (meta["lws"] is None) != (state.dist is None):
        raise CheckpointError("checkpoint and target disagree on LWS assignment state")
    for comb, cs in zip(state.combiners, meta["combiners"]):
        if cs["method"] != comb.method or cs["k"] != comb.k:
            raise CheckpointError(f"combiner mismatch: checkpoint {cs['method']}/K={cs['k']}, target {comb.method}/K={comb.k}")
    if state.dist is not None and np.shape(meta["lws"]["logits"]) != state.dist.logits.shape:
        raise CheckpointError(f"LWS logits shape {np.shape(meta['lws']['logits'])} != {state.dist.logits.shape}")

    for i, net in enumerate(state.nets):
        for name, p in net.named_parameters():
            p.values = arrays[f"net{i}/{name}"].copy()
    for comb, cs in zip(state.combiners, meta["combiners"]):
        comb.load_state_dict(cs)
    if state.dist is not None:
        state.dist.load_state_dict(meta["lws"])
    if state.prng is not None and meta["prng"] is not None:
        state.prng.set_state(meta["prng"])
    if mtds is not None and meta["sampler"] is not None:
        mtds.load_state_dict(meta["sampler"])
    return meta


def checkpoint_roundtrip(net, combiner, dist, path):
    """Save ``net``/``combiner``/``dist`` to ``path`` and restore copies of them from it."""
    import copy

    arrays = [(name, p.values) for name, p in net.named_parameters()]
    meta = {
        "combiners": [combiner.state_dict()],
        "lws": None if dist is None else dist.state_dict(),
    }
    write_bytes(path, encode(arrays, meta))
    saved, names, header = decode(Path(path).read_bytes())
    new_net, new_comb, new_dist = copy.deepcopy(net), copy.deepcopy(combiner), copy.deepcopy(dist)
    for _, p in new_net.named_parameters():
        p.values = np.zeros_like(p.values)
    check_schema(saved, names, [(n, p.values) for n, p in new_net.named_parameters()])
    for name, p in new_net.named_parameters():
        p.values = saved[name].copy()
    new_comb.load_state_dict(header["combiners"][0])
    if new_dist is not None:
        new_dist.load_state_dict(header["lws"])
    return new_net, new_comb, new_dist
