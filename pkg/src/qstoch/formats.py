"""JSON coefficient files and CSV sweep tables.

Coefficient file layout::

    {"d": 2, "channels": 1, "kappa": [0.5, 0.0],
     "blocks": {"G00": [[[re, im], ...], ...], "G10": ..., "G01": ..., "G11": ...}}

Keys start with ``G`` (Ito) or ``E`` (Stratonovich).  With more than one
channel the indices are separated by an underscore (``G1_2``); the compact
two-digit form is still accepted on read.  Superoperator generators carry
``"super": true`` and ``d^2 x d^2`` blocks.
"""
import csv
import json
import re

import numpy as np

from .coeffs import CoefficientBlock, GaugeParameter, block_name
from .errors import ParseError, SchemaError

__all__ = [
    "encode_matrix", "decode_matrix", "coefficients_to_json", "coefficients_from_json",
    "load_coefficients", "save_coefficients", "write_csv", "write_json",
]

_KEY = re.compile(r"^([A-Z])(\d+)_(\d+)$|^([A-Z])(\d)(\d)$")
_PREFIX_KIND = {"G": "ito", "E": "strat"}


def encode_matrix(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(data, name="matrix"):
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{name}: entries must be [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise SchemaError(f"{name}: expected a matrix of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def coefficients_to_json(coeffs, kappa=None, prefix=None):
    prefix = prefix or {"ito": "G", "strat": "E"}.get(coeffs.kind, "G")
    k = complex(kappa if kappa is not None else 0.5)
    doc = {"d": coeffs.d, "channels": coeffs.channels, "kappa": [k.real, k.imag],
           "blocks": {block_name(prefix, a, b, coeffs.channels): encode_matrix(coeffs[a, b])
                      for a, b in coeffs.indices()}}
    if coeffs.kind in ("super", "flow"):
        doc["super"] = True
        doc["d"] = int(round(np.sqrt(coeffs.d)))
    return doc


def _parse_key(key):
    m = _KEY.match(key)
    if not m:
        raise SchemaError(f"block key {key!r} is not of the form G<a><b> or G<a>_<b>")
    if m.group(1):
        return m.group(1), int(m.group(2)), int(m.group(3))
    return m.group(4), int(m.group(5)), int(m.group(6))


def coefficients_from_json(doc):
    """Return ``(CoefficientBlock, GaugeParameter)`` from a parsed document."""
    errors = []
    for field in ("d", "channels", "blocks"):
        if field not in doc:
            errors.append(f"missing field {field!r}")
    if errors:
        raise SchemaError("; ".join(errors), errors)
    d, n = doc["d"], doc["channels"]
    if not (isinstance(d, int) and d > 0) or not (isinstance(n, int) and n > 0):
        raise SchemaError("d and channels must be positive integers")
    kappa = GaugeParameter(0.5)
    if "kappa" in doc:
        kappa = parse_kappa(doc["kappa"])
    is_super = bool(doc.get("super", False))
    m = d * d if is_super else d
    blocks = np.zeros((n + 1, n + 1, m, m), dtype=complex)
    prefixes = set()
    for key, value in doc["blocks"].items():
        prefix, a, b = _parse_key(key)
        prefixes.add(prefix)
        if a > n or b > n:
            errors.append(f"block {key}: index out of range for {n} channel(s)")
            continue
        try:
            mat = decode_matrix(value, key)
        except SchemaError as exc:
            errors.append(str(exc))
            continue
        if mat.shape != (m, m):
            errors.append(f"block {key}: shape {mat.shape} does not match ({m}, {m})")
            continue
        if not np.all(np.isfinite(mat)):
            errors.append(f"block {key}: non-finite entries")
            continue
        blocks[a, b] = mat
    if len(prefixes) > 1:
        errors.append(f"mixed block prefixes {sorted(prefixes)}")
    if errors:
        raise SchemaError("; ".join(errors), errors)
    if is_super:
        from .itoalg import SuperGenerator
        return SuperGenerator(blocks), kappa
    kind = _PREFIX_KIND.get(prefixes.pop() if prefixes else "G", "ito")
    return CoefficientBlock(blocks, kind=kind), kappa


def parse_kappa(value):
    """``[re, im]``, ``"re,im"`` or a number -> :class:`GaugeParameter`."""
    try:
        if isinstance(value, str):
            parts = [float(p) for p in value.split(",")]
        elif isinstance(value, (list, tuple)):
            parts = [float(p) for p in value]
        else:
            parts = [float(value), 0.0]
        if len(parts) == 1:
            parts.append(0.0)
        if len(parts) != 2:
            raise ValueError
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"kappa must be 're,im', got {value!r}") from exc
    try:
        return GaugeParameter(complex(parts[0], parts[1]))
    except ValueError as exc:
        raise SchemaError(f"kappa violates the gauge invariant Re(kappa) = 1/2: {value!r}") from exc


def load_coefficients(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        return coefficients_from_json(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}", exc.errors) from exc


def save_coefficients(path, coeffs, kappa=None, prefix=None):
    write_json(path, coefficients_to_json(coeffs, kappa, prefix))


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_matrix(obj) if obj.ndim == 2 else [[z.real, z.imag] for z in obj.ravel()]
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(row[k])) if isinstance(row[k], float) else row[k]
                        for k in header})
