"""Binary model checkpoints.

Layout: the 6-byte magic ``TINED1``, a little-endian uint64 header length, a UTF-8
JSON header, then every tensor as raw little-endian float64 in header order.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Param
from .errors import DataError
from .models import FCLayer, FTLayer, Role, StudentMLP, TeacherKind, TeacherModel

MAGIC = b"TINED1"
VERSION = 1


def _tensor_entry(name, p):
    return {"name": name, "shape": list(p.value.shape), "multiplier": p.multiplier}


def _collect(model):
    tensors = []
    if isinstance(model, TeacherModel):
        header = {
            "model": "teacher", "kind": model.kind.value, "slope": model.slope, "alpha": model.alpha,
            "prop_steps": model.prop_steps, "dropout": model.dropout, "norm": model.norm,
            "aggregator": model.aggregator, "layers": [],
        }
        for i, layer in enumerate(model.layers):
            header["layers"].append({"attention": layer.attention is not None})
            tensors.append((f"W{i + 1}", layer.weight))
            tensors.append((f"b{i + 1}", layer.bias))
            if layer.attention is not None:
                tensors.append((f"a{i + 1}", layer.attention))
    elif isinstance(model, StudentMLP):
        header = {"model": "student", "layers": []}
        for i, layer in enumerate(model.layers):
            header["layers"].append({"role": layer.role.value, "activation": layer.activation})
            tensors.append((f"W{i + 1}", layer.weight))
            tensors.append((f"b{i + 1}", layer.bias))
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return header, tensors


def save_checkpoint(path, model, extra=None):
    header, tensors = _collect(model)
    header["format_version"] = VERSION
    header["tensors"] = [_tensor_entry(n, p) for n, p in tensors]
    header["extra"] = extra or {}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, p in tensors:
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return path


def read_header(path):
    with Path(path).open("rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic)")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode("utf-8"))
        return header, fh.read()


def load_checkpoint(path):
    """Returns ``(model, extra)``."""
    header, payload = read_header(path)
    if header.get("format_version") != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    params = {}
    offset = 0
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"]))
        raw = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
        offset += 8 * count
        params[entry["name"]] = Param(raw.reshape(entry["shape"]), multiplier=entry["multiplier"], name=entry["name"])
    if offset != len(payload):
        raise DataError(f"{path}: {len(payload) - offset} trailing bytes")

    if header["model"] == "teacher":
        layers = [
            FTLayer(params[f"W{i}"], params[f"b{i}"], params.get(f"a{i}") if info["attention"] else None)
            for i, info in enumerate(header["layers"], start=1)
        ]
        model = TeacherModel(
            kind=TeacherKind(header["kind"]), layers=layers, slope=header["slope"], alpha=header["alpha"],
            prop_steps=header["prop_steps"], dropout=header["dropout"], norm=header["norm"],
            aggregator=header.get("aggregator", "mean_concat"),
        )
    else:
        layers = [
            FCLayer(params[f"W{i}"], params[f"b{i}"], Role(info["role"]), info["activation"])
            for i, info in enumerate(header["layers"], start=1)
        ]
        model = StudentMLP(layers)
    return model, header.get("extra", {})
