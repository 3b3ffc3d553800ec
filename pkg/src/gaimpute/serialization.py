"""Versioned, checksummed JSON envelope for fitted models and transforms.

An artifact file looks like::

    {"format": "gaimpute", "version": 1, "kind": "mlp",
     "sha256": "<hex digest of the canonical payload>", "payload": {...}}

Arrays inside payloads are stored as ``{"shape": [...], "data": [...]}``
with ``data`` flattened row-major.  Floats use Python's shortest repr, so a
dump/load round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ModelFormatError

FORMAT = "gaimpute"
VERSION = 1


def pack_array(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel(order="C")]}


def unpack_array(obj: dict) -> np.ndarray:
    try:
        return np.array(obj["data"], dtype=float).reshape(obj["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed array block: {exc}") from exc


def canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(payload) -> str:
    return hashlib.sha256(canonical(payload).encode("utf-8")).hexdigest()


def dumps(kind: str, payload: dict) -> str:
    envelope = {"format": FORMAT, "version": VERSION, "kind": kind, "sha256": digest(payload), "payload": payload}
    return canonical(envelope) + "\n"


def loads(text: str, kind: str | None = None) -> tuple[str, dict]:
    """Validate an envelope and return ``(kind, payload)``."""
    try:
        envelope = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"artifact is not valid JSON: {exc}") from exc
    if not isinstance(envelope, dict) or envelope.get("format") != FORMAT:
        raise ModelFormatError("not a gaimpute artifact")
    if envelope.get("version") != VERSION:
        raise ModelFormatError(f"unsupported artifact version {envelope.get('version')!r} (expected {VERSION})")
    payload = envelope.get("payload")
    if digest(payload) != envelope.get("sha256"):
        raise ModelFormatError("checksum mismatch: artifact is corrupt or was edited")
    if kind is not None and envelope.get("kind") != kind:
        raise ModelFormatError(f"expected a {kind!r} artifact, found {envelope.get('kind')!r}")
    return envelope["kind"], payload


def save(path: str | Path, kind: str, payload: dict) -> None:
    Path(path).write_text(dumps(kind, payload), encoding="utf-8")


def load(path: str | Path, kind: str | None = None) -> tuple[str, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    return loads(text, kind)
