"""Checkpoint container.

Layout (version 1)::

    GNNSE-CHECKPOINT 1\\n
    <header: one line of JSON with sorted keys>\\n
    <tensor blobs, little-endian, C order, back to back>

The header holds ``hyperparams``, ``n_bus``, ``graph`` (``plain`` or
``augmented``), free-form ``meta`` and ``tensors``: a list of
``{name, kind, shape, dtype, offset, nbytes}`` where ``kind`` is ``param``
or ``buffer`` and ``offset`` counts from the first blob byte. Files are
byte-identical for identical models.
"""
import json
from collections import OrderedDict

import numpy as np

from .model import GnnModel, Hyperparams

MAGIC = "GNNSE-CHECKPOINT"
VERSION = 1
GRAPH_TYPES = ("plain", "augmented")


def dumps(model, graph="augmented", meta=None):
    if graph not in GRAPH_TYPES:
        raise ValueError(f"graph must be one of {GRAPH_TYPES}")
    tensors, blobs, offset = [], [], 0
    for kind, group in (("param", model.params), ("buffer", model.buffers)):
        for name, arr in group.items():
            data = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
            tensors.append({"name": name, "kind": kind, "shape": list(arr.shape),
                            "dtype": arr.dtype.str.replace(">", "<"), "offset": offset,
                            "nbytes": len(data)})
            blobs.append(data)
            offset += len(data)
    header = {"hyperparams": model.hyper.to_dict(), "n_bus": model.n_bus, "graph": graph,
              "meta": meta or {}, "tensors": tensors}
    head = f"{MAGIC} {VERSION}\n{json.dumps(header, sort_keys=True)}\n".encode()
    return head + b"".join(blobs)


def loads(raw):
    """Return ``(model, header)``."""
    first, _, rest = raw.partition(b"\n")
    parts = first.decode(errors="replace").split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ValueError("not a checkpoint file")
    if parts[1] != str(VERSION):
        raise ValueError(f"unsupported checkpoint version {parts[1]}")
    line, _, blob = rest.partition(b"\n")
    header = json.loads(line)
    hyper = Hyperparams(**header["hyperparams"])
    params, buffers = OrderedDict(), OrderedDict()
    for t in header["tensors"]:
        lo, hi = t["offset"], t["offset"] + t["nbytes"]
        if hi > len(blob):
            raise ValueError(f"checkpoint truncated in tensor {t['name']}")
        arr = np.frombuffer(blob[lo:hi], dtype=np.dtype(t["dtype"]))
        if arr.size != int(np.prod(t["shape"])):
            raise ValueError(f"{t['name']}: blob size does not match shape {t['shape']}")
        arr = arr.reshape(t["shape"]).astype(hyper.dtype)
        (params if t["kind"] == "param" else buffers)[t["name"]] = arr
    return GnnModel(hyper, header["n_bus"], params, buffers), header


def save_checkpoint(path, model, graph="augmented", meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(model, graph, meta))


def load_checkpoint(path, n_bus=None):
    with open(path, "rb") as fh:
        model, header = loads(fh.read())
    if n_bus is not None and model.n_bus != n_bus:
        raise ValueError(f"checkpoint is for {model.n_bus} buses, network has {n_bus}")
    return model, header
