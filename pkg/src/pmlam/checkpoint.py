"""Checkpoint serialization.

Byte layout of a checkpoint file:

    line 1        ASCII magic "PMLAM-CKPT v1" + newline
    8 bytes       little-endian uint64: length of the JSON header
    header        UTF-8 JSON: config (string map), fold index, array
                  directory [{name, shape, dtype} ...], optimizer metadata,
                  RNG stream states
    payload       the arrays from the directory, concatenated in order,
                  C-contiguous raw bytes

Arrays cover both embedding tables, every margin net, and the optimizer
moment buffers. Writes go to a temp file and are renamed into place.
"""

import json
import os
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .config import RunConfig, make_config
from .embeddings import GaussianEmbeddingTable
from .margin_net import MarginNetParams

CKPT_MAGIC = b"PMLAM-CKPT v1\n"


@dataclass
class Checkpoint:
    users: GaussianEmbeddingTable
    items: GaussianEmbeddingTable
    phis: dict                 # relation -> MarginNetParams
    cfg: RunConfig
    fold_index: int
    rng_states: dict
    opt_theta: dict            # {"kind", "alpha", "t"}; moments live in arrays
    opt_phi: dict


def _config_strings(cfg):
    out = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        out[f.name] = ",".join(map(str, v)) if isinstance(v, tuple) else str(v)
    return out


def _collect_arrays(result):
    arrays = {
        "user_mu": result.users.mu, "user_sigma": result.users.sigma,
        "item_mu": result.items.mu, "item_sigma": result.items.sigma,
    }
    for rel, net in result.phis.items():
        for name, arr in net.params().items():
            arrays[f"phi.{rel}.{name}"] = arr
    opt_meta = {}
    for tag, opt in (("theta", result.opt_theta), ("phi", result.opt_phi)):
        if opt is None:
            continue
        state = opt.state()
        opt_meta[tag] = {"kind": state["kind"], "alpha": state["alpha"],
                         "t": state["t"]}
        for slot, buffers in state["slots"].items():
            for name, arr in buffers.items():
                arrays[f"opt.{tag}.{slot}.{name}"] = arr
    return arrays, opt_meta


def save(path, result, fold_index=0):
    """Write a TrainResult (see bilevel.train) as a checkpoint file."""
    arrays, opt_meta = _collect_arrays(result)
    directory = [{"name": k, "shape": list(v.shape), "dtype": str(v.dtype)}
                 for k, v in arrays.items()]
    header = json.dumps({
        "config": _config_strings(result.cfg),
        "fold_index": fold_index,
        "arrays": directory,
        "optimizers": opt_meta,
        "rng_states": result.rng_states,
    }).encode()
    tmp = tempfile.NamedTemporaryFile("wb", dir=os.path.dirname(path) or ".",
                                      delete=False, suffix=".tmp")
    with tmp as f:
        f.write(CKPT_MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for arr in arrays.values():
            f.write(np.ascontiguousarray(arr).tobytes())
    os.replace(tmp.name, path)


def load(path):
    with open(path, "rb") as f:
        if f.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a {CKPT_MAGIC.decode().strip()} file")
        header_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(header_len).decode())
        arrays = {}
        for entry in header["arrays"]:
            shape, dtype = tuple(entry["shape"]), np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()

    cfg = make_config(file_values=header["config"])
    users = GaussianEmbeddingTable(arrays["user_mu"], arrays["user_sigma"])
    items = GaussianEmbeddingTable(arrays["item_mu"], arrays["item_sigma"])
    phis = {}
    for rel in ("ui", "uu", "ii"):
        key = f"phi.{rel}.W1"
        if key in arrays:
            phis[rel] = MarginNetParams(
                W1=arrays[key], b1=arrays[f"phi.{rel}.b1"],
                W2=arrays[f"phi.{rel}.W2"], b2=arrays[f"phi.{rel}.b2"])
    return Checkpoint(
        users=users, items=items, phis=phis, cfg=cfg,
        fold_index=header["fold_index"],
        rng_states=header["rng_states"],
        opt_theta=header["optimizers"].get("theta", {}),
        opt_phi=header["optimizers"].get("phi", {}),
    )
