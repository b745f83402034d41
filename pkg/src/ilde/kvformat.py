"""Line-oriented ``key = value`` text format shared by all persisted objects.

Each non-blank, non-comment line holds one key and one JSON value::

    # environment
    format = "ilde-mdp"
    num_states = 3
    transitions = [0.25, 0.75, ...]

Keys may contain dots to express grouping (``ppo.clip_eps``). Arrays are
stored flattened in row-major order next to an explicit ``*.shape`` key.
Floats are written with ``repr`` precision, so round trips are exact.
"""

import json
import math
import os
import re
from typing import Any

import numpy as np

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class KvFormatError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def _encode(value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no inf/nan literals; keep them readable and parseable
        return json.dumps(repr(value))
    return json.dumps(value)


def dumps(data: dict[str, Any]) -> str:
    lines = []
    for key, value in data.items():
        if not _KEY_RE.match(key):
            raise KvFormatError(f"invalid key {key!r}")
        lines.append(f"{key} = {_encode(value)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rest = line.partition("=")
        key = key.strip()
        if not sep:
            raise KvFormatError("expected 'key = value'", lineno)
        if not _KEY_RE.match(key):
            raise KvFormatError(f"invalid key {key!r}", lineno)
        if key in out:
            raise KvFormatError(f"duplicate key {key!r}", lineno)
        try:
            value = json.loads(rest.strip())
        except json.JSONDecodeError as exc:
            raise KvFormatError(f"bad value for {key!r}: {exc.msg}", lineno) from None
        if value in ("inf", "-inf", "nan"):
            value = float(value)
        out[key] = value
    return out


def dump(data: dict[str, Any], path) -> None:
    """Write atomically: a partially written file is never visible."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps(data))
    os.replace(tmp, path)


def load(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def put_array(data: dict[str, Any], key: str, arr) -> None:
    arr = np.asarray(arr)
    data[f"{key}.shape"] = list(arr.shape)
    data[key] = arr.ravel().tolist()


def get_array(data: dict[str, Any], key: str, dtype=float) -> np.ndarray:
    try:
        shape = tuple(data[f"{key}.shape"])
        flat = data[key]
    except KeyError as exc:
        raise KvFormatError(f"missing key {exc.args[0]!r}") from None
    arr = np.asarray(flat, dtype=dtype)
    if arr.size != int(np.prod(shape)):
        raise KvFormatError(f"{key!r} has {arr.size} entries, shape {shape} needs {int(np.prod(shape))}")
    return arr.reshape(shape)
