"""JSON/CSV helpers: complex arrays in JSON and deterministic float output."""

import csv
import json
import math

import numpy as np


def parse_complex(value):
    """Accept a number, a ``[re, im]`` pair or a ``{"re":.., "im":..}`` mapping."""
    if isinstance(value, dict):
        return complex(value.get("re", 0.0), value.get("im", 0.0))
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex entry must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    return complex(value)


def parse_vector(data):
    return np.array([parse_complex(v) for v in data], dtype=complex)


def parse_matrix(data, shape=None):
    """Parse a list of rows into a complex matrix. ``[]`` gives an empty matrix of ``shape``."""
    if len(data) == 0:
        return np.zeros(shape if shape is not None else (0, 0), dtype=complex)
    rows = [[parse_complex(v) for v in row] for row in data]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("ragged matrix rows")
    return np.array(rows, dtype=complex)


def encode_scalar(z):
    z = complex(z)
    if z.imag == 0.0:
        return z.real
    return [z.real, z.imag]


def encode_matrix(M):
    M = np.atleast_2d(np.asarray(M))
    return [[encode_scalar(v) for v in row] for row in M]


def encode_vector(v):
    return [encode_scalar(x) for x in np.asarray(v).ravel()]


def format_float(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        # not valid JSON numbers; emitted as strings
        return '"' + repr(x) + '"'
    if x == int(x) and abs(x) < 1e16:
        return repr(float(x))
    return format(x, ".17g")


def dumps(obj, indent=2):
    """Serialise ``obj`` to JSON with floats fixed at 17 significant digits.

    Dict keys keep insertion order, so equal inputs give byte-identical text.
    numpy scalars/arrays and complex numbers are converted on the way.
    """
    return _dump(obj, 0, indent) + "\n"


def _dump(obj, level, indent):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return _dump(encode_scalar(obj), level, indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist(), level, indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.number, complex)) for v in obj) and not any(
            isinstance(v, complex) for v in obj
        ):
            return "[" + ", ".join(_dump(v, level + 1, indent) for v in obj) + "]"
        items = [pad + _dump(v, level + 1, indent) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(float(v), ".17g") for v in row])
