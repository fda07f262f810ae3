"""JSON/CSV I/O: problems, witnesses, certificates, reports.

Complex numbers are ``{"re": ..., "im": ...}``; matrices are row-major nested
lists of those. Writes are atomic (temp file in the same directory + rename).
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .adversary import AdversaryCertificate, AdversaryWitness
from .gram_core import GramMatrix


class SchemaError(ValueError):
    """Input file does not match the expected layout."""


def encode_complex(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def decode_complex(obj) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, Mapping) and set(obj) <= {"re", "im"} and "re" in obj:
        return complex(float(obj["re"]), float(obj.get("im", 0.0)))
    raise SchemaError(f"not a complex number: {obj!r}")


def encode_array(a) -> Any:
    a = np.asarray(a)
    if a.ndim == 0:
        return encode_complex(a)
    return [encode_array(r) for r in a]


def decode_array(obj) -> np.ndarray:
    def walk(o):
        if isinstance(o, list):
            return [walk(r) for r in o]
        return decode_complex(o)

    try:
        return np.array(walk(obj), dtype=complex)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed array: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (complex, np.complexfloating)):
        return encode_complex(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_array(obj)
        return _jsonable(obj.tolist())
    return obj


def atomic_write(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, rows: Iterable[Mapping[str, Any]]) -> Path:
    rows = list(rows)
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [k for k in r if k not in fields]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_cell(r.get(k, "")) for k in fields})
    return atomic_write(path, buf.getvalue())


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Problem:
    alphabet: int
    n: int
    rho: GramMatrix
    sigma: GramMatrix
    name: str = ""

    @property
    def labels(self) -> tuple[str, ...]:
        return self.rho.labels


def problem_from_dict(d: Mapping, name: str = "") -> Problem:
    if not isinstance(d, Mapping):
        raise SchemaError("problem must be a JSON object")
    if "function" in d:
        table = d["function"]
        if not isinstance(table, Mapping) or not table:
            raise SchemaError("'function' must be a non-empty mapping input -> output")
        labels = tuple(str(x) for x in table)
        rho = GramMatrix.ones(labels)
        sigma = GramMatrix.from_function({str(k): v for k, v in table.items()})
        alphabet = int(d.get("alphabet", _infer_alphabet(labels)))
    else:
        missing = {"inputs", "rho", "sigma"} - set(d)
        if missing:
            raise SchemaError(f"problem lacks fields {sorted(missing)}")
        labels = tuple(str(x) for x in d["inputs"])
        rho = GramMatrix(labels, decode_array(d["rho"]))
        sigma = GramMatrix(labels, decode_array(d["sigma"]))
        alphabet = int(d.get("alphabet", _infer_alphabet(labels)))
    lengths = {len(x) for x in labels}
    if len(lengths) > 1:
        raise SchemaError("inputs must have equal length")
    n = lengths.pop() if lengths else 0
    if "n" in d and int(d["n"]) != n:
        raise SchemaError(f"declared n={d['n']} but inputs have length {n}")
    if alphabet < 2:
        raise SchemaError("alphabet must be >= 2")
    if any(int(c, 36) >= alphabet for x in labels for c in x):
        raise SchemaError("input symbol outside the alphabet")
    return Problem(alphabet, n, rho, sigma, name or str(d.get("name", "")))


def _infer_alphabet(labels) -> int:
    try:
        return max(2, 1 + max((int(c, 36) for x in labels for c in x), default=0))
    except ValueError as exc:
        raise SchemaError(f"bad input symbol: {exc}") from exc


def problem_to_dict(p: Problem) -> dict:
    return {
        "name": p.name,
        "alphabet": p.alphabet,
        "n": p.n,
        "inputs": list(p.labels),
        "rho": encode_array(p.rho.matrix),
        "sigma": encode_array(p.sigma.matrix),
    }


def load_problem(path) -> Problem:
    from .gram_core import GramError

    try:
        return problem_from_dict(read_json(path), Path(path).stem)
    except GramError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# witnesses and certificates


def witness_to_dict(w: AdversaryWitness) -> dict:
    return {"inputs": list(w.labels), "u": encode_array(w.u), "v": encode_array(w.v), "value": w.value}


def witness_from_dict(d: Mapping) -> AdversaryWitness:
    try:
        return AdversaryWitness(tuple(d["inputs"]), decode_array(d["u"]), decode_array(d["v"]))
    except KeyError as exc:
        raise SchemaError(f"witness lacks field {exc}") from exc
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def load_witness(path) -> AdversaryWitness:
    return witness_from_dict(read_json(path))


def certificate_to_dict(c: AdversaryCertificate) -> dict:
    return {"gamma": encode_array(c.gamma), "v": encode_array(c.v), "value": c.value}


def certificate_from_dict(d: Mapping) -> AdversaryCertificate:
    try:
        return AdversaryCertificate(decode_array(d["gamma"]), decode_array(d["v"]), float(d["value"]))
    except KeyError as exc:
        raise SchemaError(f"certificate lacks field {exc}") from exc


# --------------------------------------------------------------------------
# bundled fixtures


DATA_DIR = Path(__file__).resolve().parent / "data"


def fixture_path(name: str) -> Path:
    p = DATA_DIR / name
    if not p.exists():
        raise FileNotFoundError(f"no bundled fixture {name!r}")
    return p


def resolve(path_or_name: str) -> Path:
    """A filesystem path, or the name of a bundled fixture (``or2.json``)."""
    p = Path(path_or_name)
    if p.exists():
        return p
    return fixture_path(path_or_name)
