"""JSON/CSV helpers for complex arrays.

Complex numbers are written as ``[re, im]`` pairs. Floats in CSV files use 17
significant digits so that identical runs produce byte-identical files.
"""

import csv
import io
import json

import numpy as np

FLOAT_FMT = "%.17g"


def complex_to_json(a):
    """Nested lists with every complex entry replaced by ``[re, im]``."""
    arr = np.asarray(a, dtype=complex)
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def complex_from_json(obj, ndim):
    """Parse an array of logical dimension ``ndim`` whose entries are numbers or ``[re, im]``."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == ndim + 1 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == ndim:
        return arr.astype(complex)
    raise ValueError(f"expected a {ndim}-dimensional array (optionally of [re, im] pairs), got shape {arr.shape}")


def fmt(x):
    return FLOAT_FMT % x


def dumps(obj):
    """Canonical JSON text (sorted keys, fixed separators, trailing newline)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1, separators=(",", ": ")) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return complex_to_json(obj)
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not np.isfinite(v):
            return repr(v)
        return v
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def csv_text(header, rows):
    """Render rows as CSV, formatting floats with :data:`FLOAT_FMT`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def vector_columns(prefix, d):
    cols = []
    for i in range(1, d + 1):
        cols += [f"re({prefix}_{i})", f"im({prefix}_{i})"]
    return cols


def split_complex(vec):
    out = []
    for z in np.asarray(vec, dtype=complex).ravel():
        out += [float(z.real), float(z.imag)]
    return out
