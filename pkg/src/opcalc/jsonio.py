"""JSON wire formats for matrices, operator families, models, and chains.

Matrix schema: {"rows": int, "cols": int, "re": [row-major], "im": [row-major]}.
Schema violations raise :class:`ConfigError` with a JSON-path-style location,
which the CLI maps to exit code 2.
"""

from __future__ import annotations

import json

import numpy as np

from .grassmann import MultiVector
from .jlo import DGAElement
from .linalg import hermitian
from .phi_core import OperatorFamily
from .stochastic_mc import PerturbationSpec, TorusModel


class ConfigError(ValueError):
    """Configuration file violates a schema; carries a location string."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(v) for v in m.real.ravel()],
        "im": [float(v) for v in m.imag.ravel()],
    }


def matrix_from_json(obj, location: str = "matrix") -> np.ndarray:
    if not isinstance(obj, dict):
        raise ConfigError(location, "expected an object with rows/cols/re/im")
    for key in ("rows", "cols", "re", "im"):
        if key not in obj:
            raise ConfigError(location, f"missing field '{key}'")
    rows, cols = obj["rows"], obj["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        raise ConfigError(location, "rows/cols must be positive integers")
    re, im = obj["re"], obj["im"]
    if not (isinstance(re, list) and isinstance(im, list)):
        raise ConfigError(location, "re/im must be arrays")
    if len(re) != rows * cols or len(im) != rows * cols:
        raise ConfigError(
            location,
            f"re/im must each have rows*cols = {rows * cols} entries, "
            f"got {len(re)}/{len(im)}",
        )
    try:
        data = np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(location, f"non-numeric entry: {exc}") from None
    return data.reshape(rows, cols)


def family_from_json(obj, location: str = "family") -> OperatorFamily:
    if not isinstance(obj, dict):
        raise ConfigError(location, "expected an object")
    if "H" not in obj:
        raise ConfigError(location, "missing field 'H'")
    h_mat = matrix_from_json(obj["H"], f"{location}.H")
    try:
        h = hermitian(h_mat, require_nonneg=True)
    except ValueError as exc:
        raise ConfigError(f"{location}.H", str(exc)) from None
    perts = []
    for i, p in enumerate(obj.get("P", [])):
        perts.append(matrix_from_json(p, f"{location}.P[{i}]"))
    exps = tuple(obj.get("a", ()))
    try:
        return OperatorFamily(h, tuple(perts), exps)
    except ValueError as exc:
        raise ConfigError(location, str(exc)) from None


def form_from_json(obj, d: int, location: str = "form") -> MultiVector:
    """Form schema: list of {"indices": [..], "re": x, "im": y} terms."""
    if obj is None:
        return MultiVector.zero(d)
    if not isinstance(obj, list):
        raise ConfigError(location, "expected a list of terms")
    acc = MultiVector.zero(d)
    for i, term in enumerate(obj):
        loc = f"{location}[{i}]"
        if not isinstance(term, dict) or "indices" not in term:
            raise ConfigError(loc, "term needs an 'indices' field")
        coeff = complex(term.get("re", 0.0), term.get("im", 0.0))
        try:
            acc = acc + MultiVector.monomial(d, term["indices"], coeff)
        except ValueError as exc:
            raise ConfigError(loc, str(exc)) from None
    return acc


def chain_from_json(obj, location: str = "chain"):
    if not isinstance(obj, dict) or "d" not in obj or "chain" not in obj:
        raise ConfigError(location, "expected an object with 'd' and 'chain'")
    d = obj["d"]
    if not isinstance(d, int) or d <= 0 or d % 2:
        raise ConfigError(f"{location}.d", "d must be a positive even integer")
    chain = []
    for i, entry in enumerate(obj["chain"]):
        loc = f"{location}.chain[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(loc, "expected an object")
        chain.append(
            DGAElement(
                form_from_json(entry.get("prime"), d, f"{loc}.prime"),
                form_from_json(entry.get("doubleprime"), d, f"{loc}.doubleprime"),
            )
        )
    if not chain:
        raise ConfigError(f"{location}.chain", "chain must be nonempty")
    return d, tuple(chain)


def torus_model_from_json(obj, location: str = "model") -> TorusModel:
    if not isinstance(obj, dict):
        raise ConfigError(location, "expected an object")
    for key in ("d", "r"):
        if key not in obj or not isinstance(obj[key], int) or obj[key] < 1:
            raise ConfigError(location, f"'{key}' must be a positive integer")
    d, r = obj["d"], obj["r"]
    conn = tuple(
        matrix_from_json(a, f"{location}.A[{i}]") for i, a in enumerate(obj.get("A", []))
    )
    pot = matrix_from_json(obj["W"], f"{location}.W") if "W" in obj else None
    perts = []
    for i, p in enumerate(obj.get("perturbations", [])):
        loc = f"{location}.perturbations[{i}]"
        if not isinstance(p, dict):
            raise ConfigError(loc, "expected an object with 'S' and/or 'V'")
        s_list = p.get("S")
        if s_list is None:
            s = tuple(np.zeros((r, r), dtype=complex) for _ in range(d))
        else:
            s = tuple(
                matrix_from_json(m, f"{loc}.S[{j}]") for j, m in enumerate(s_list)
            )
            if len(s) != d:
                raise ConfigError(f"{loc}.S", f"need {d} symbol matrices")
        v = (
            matrix_from_json(p["V"], f"{loc}.V")
            if "V" in p
            else np.zeros((r, r), dtype=complex)
        )
        perts.append(PerturbationSpec(s, v))
    try:
        return TorusModel(d, r, conn, pot, tuple(perts))
    except (ValueError, TypeError) as exc:
        raise ConfigError(location, str(exc)) from None


def point_from_json(obj, d: int, location: str) -> np.ndarray:
    if not isinstance(obj, list) or len(obj) != d:
        raise ConfigError(location, f"expected a list of {d} reals")
    try:
        return np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(location, "entries must be numeric") from None


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(path, "file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None


class _ComplexEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, complex):
            return {"re": o.real, "im": o.imag}
        if isinstance(o, np.ndarray):
            return matrix_to_json(o) if o.ndim == 2 else [self.default(v) if isinstance(v, (complex, np.ndarray)) else v for v in o.tolist()]
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.complexfloating,)):
            return {"re": float(o.real), "im": float(o.imag)}
        if isinstance(o, (np.bool_,)):
            return bool(o)
        return super().default(o)


def dump_json(obj, path: str | None):
    text = json.dumps(obj, indent=2, cls=_ComplexEncoder, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
