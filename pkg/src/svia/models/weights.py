"""Single-file weight format: JSON header + raw float32 parameter blocks.

Layout: magic b"SVW1", little-endian uint32 header length, UTF-8 JSON
header, then each parameter as little-endian float32 in C order, in the
module's declaration order. The header records the architecture id, the
construction dims, the training seed, the training-config hash, and the
per-parameter shapes so files are self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError

_MAGIC = b"SVW1"


def save_weights(
    path: str | Path,
    arrays: list[tuple[str, np.ndarray]],
    arch: str,
    dims: dict,
    seed: int,
    config_hash: str,
) -> Path:
    header = {
        "arch": arch,
        "dims": dims,
        "seed": int(seed),
        "config_hash": config_hash,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return path


def load_weights(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    path = Path(path)
    with path.open("rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValidationError(f"{path}: not a weight file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        arrays = []
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * count)
            if len(buf) != 4 * count:
                raise ValidationError(f"{path}: truncated block for {spec['name']}")
            arrays.append(np.frombuffer(buf, dtype="<f4").reshape(shape).copy())
        if f.read(1):
            raise ValidationError(f"{path}: trailing bytes after parameter blocks")
    return header, arrays


def module_arrays(module) -> list[tuple[str, np.ndarray]]:
    """Named parameters in declaration order as float32 numpy arrays."""
    return [(name, p.detach().cpu().numpy().astype(np.float32)) for name, p in module.named_parameters()]


def load_into_module(module, header: dict, arrays: list[np.ndarray]) -> None:
    import torch

    params = list(module.named_parameters())
    if len(params) != len(arrays):
        raise ValidationError(f"parameter count mismatch: file has {len(arrays)}, module has {len(params)}")
    with torch.no_grad():
        for (name, p), spec, arr in zip(params, header["params"], arrays):
            if tuple(p.shape) != tuple(arr.shape):
                raise ValidationError(f"shape mismatch for {name}: file {arr.shape}, module {tuple(p.shape)}")
            if spec["name"] != name:
                raise ValidationError(f"parameter order mismatch: file {spec['name']}, module {name}")
            p.copy_(torch.from_numpy(arr))
