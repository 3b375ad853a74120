"""Deterministic JSON writing shared by every artifact the package emits.

Sorted keys and default float repr make byte-identical files whenever the
underlying values are identical; no timestamps or environment data are
ever added here.
"""

import json

import numpy as np


def _coerce(obj):
    if isinstance(obj, dict):
        return {str(k): _coerce(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_coerce(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_coerce(v) for v in obj.tolist()]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_coerce(obj), sort_keys=True, indent=2)


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
