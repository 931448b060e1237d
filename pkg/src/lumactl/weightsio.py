"""Checkpoint format: flat little-endian float32 blob + JSON shape manifest.

The blob concatenates tensors in manifest order; the manifest records names,
shapes, and an optional free-form 'extra' payload (hyperparameters, seeds).
Values are stored as float32 but handed back as float64 for computation.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class WeightsError(Exception):
    """Manifest and blob disagree, or the files are unreadable."""


def save_weights(
    base: str | Path, tensors: dict[str, np.ndarray], extra: dict | None = None
) -> None:
    """Write {base}.f32 and {base}.json."""
    base = Path(base)
    manifest = {
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()
        ],
        "extra": extra or {},
    }
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in tensors.values()
    )
    base.with_suffix(".f32").write_bytes(blob)
    base.with_suffix(".json").write_text(json.dumps(manifest, indent=1))


def load_weights(base: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors and the extra payload back; verifies blob length."""
    base = Path(base)
    try:
        manifest = json.loads(base.with_suffix(".json").read_text())
        blob = base.with_suffix(".f32").read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise WeightsError(f"cannot read checkpoint {base}: {exc}") from exc
    entries = manifest.get("tensors")
    if not isinstance(entries, list):
        raise WeightsError("manifest lacks a 'tensors' list")
    expected = sum(int(np.prod(e["shape"])) for e in entries) * 4
    if len(blob) != expected:
        raise WeightsError(
            f"blob holds {len(blob)} bytes, manifest promises {expected}"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for e in entries:
        shape = tuple(int(s) for s in e["shape"])
        count = int(np.prod(shape))
        chunk = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        tensors[str(e["name"])] = chunk.astype(np.float64).reshape(shape)
        offset += count * 4
    return tensors, manifest.get("extra", {})
