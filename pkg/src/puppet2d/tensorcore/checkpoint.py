"""Network checkpoint container.

One `.npz` file per network: each parameter stored as little-endian float32
under ``param/<name>``, Adam moments under ``adam_m/<name>`` / ``adam_v/<name>``,
and a JSON metadata blob (step count, user extras) under ``meta``.
"""

import json

import numpy as np

from ..errors import DataError


def save_checkpoint(path, named_params, optimizer=None, meta=None):
    """Write parameters (and optional Adam state) for one network."""
    arrays = {}
    names = []
    for name, p in named_params:
        arrays[f"param/{name}"] = np.ascontiguousarray(p.data, dtype="<f4")
        names.append(name)
    info = {"names": names, "step": 0}
    if meta:
        info["extra"] = meta
    if optimizer is not None:
        info["step"] = optimizer.step_count
        for (name, _), m, v in zip(named_params, optimizer.m, optimizer.v):
            arrays[f"adam_m/{name}"] = np.ascontiguousarray(m, dtype="<f4")
            arrays[f"adam_v/{name}"] = np.ascontiguousarray(v, dtype="<f4")
    arrays["meta"] = np.frombuffer(json.dumps(info).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, named_params, optimizer=None):
    """Restore parameters in place; returns the metadata dict."""
    with np.load(path) as data:
        info = json.loads(bytes(data["meta"]))
        for name, p in named_params:
            key = f"param/{name}"
            if key not in data:
                raise DataError(f"checkpoint missing parameter {name!r}")
            arr = data[key]
            if arr.shape != p.data.shape:
                raise DataError(f"checkpoint {name!r} shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(np.float32, copy=True)
        if optimizer is not None:
            optimizer.step_count = int(info.get("step", 0))
            for i, (name, _) in enumerate(named_params):
                if f"adam_m/{name}" in data:
                    optimizer.m[i] = data[f"adam_m/{name}"].astype(np.float32, copy=True)
                    optimizer.v[i] = data[f"adam_v/{name}"].astype(np.float32, copy=True)
    return info.get("extra", {})
