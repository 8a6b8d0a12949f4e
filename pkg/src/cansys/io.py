"""File formats: Hamiltonian and problem JSON in, JSON and CSV out.

Writers format every float with 17 significant digits, which round-trips
IEEE doubles exactly, so a Hamiltonian written and read back is bitwise the
same object and repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

from .analysis import IntervalSet
from .errors import ValidationError
from .hamiltonian import HalfLineHamiltonian, HamiltonianCell, PSDMatrix2, WholeLineHamiltonian
from .reductions import DiracPotential, JacobiProblem, SchrodingerProblem


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0:
        return "0.0"  # negative zero is folded into zero
    s = format(x, ".17g")
    return s if any(ch in s for ch in ".en") else s + ".0"


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON with 17-digit floats and insertion-ordered keys."""
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, (float, Fraction)):
            return fmt_float(o)
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=False)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, level) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if hasattr(o, "item"):  # numpy scalars
            return enc(o.item(), level)
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0) + "\n"


def write_text(text: str, out) -> None:
    if out is None or out == "-":
        import sys
        sys.stdout.write(text)
        return
    Path(out).write_text(text, encoding="utf-8")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, Fraction)) or hasattr(v, "dtype"):
        return fmt_float(v)
    return v


# ---------------------------------------------------------------------------
# readers


def load_json(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError("file not found", path=path) from None
    except OSError as exc:
        raise ValidationError(f"cannot read file: {exc.strerror}", path=path) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                              path=path) from None


def _need(d, key, path, where="top level"):
    if not isinstance(d, dict) or key not in d:
        raise ValidationError(f"missing field {key!r} at {where}", path=path)
    return d[key]


def half_line_from_dict(d, path=None, where: str = "top level") -> HalfLineHamiltonian:
    if not isinstance(d, dict):
        raise ValidationError(f"expected an object at {where}", path=path)
    raw = _need(d, "cells", path, where)
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"'cells' at {where} must be a non-empty list", path=path)
    cells = []
    for i, c in enumerate(raw):
        try:
            if not isinstance(c, dict) or "len" not in c or "H" not in c:
                raise ValidationError("a cell needs 'len' and 'H'")
            if not isinstance(c["len"], (int, float)) or isinstance(c["len"], bool):
                raise ValidationError("'len' must be a number")
            cells.append(HamiltonianCell(c["len"], PSDMatrix2.from_array(c["H"])))
        except ValidationError as exc:
            raise ValidationError(str(exc), path=path, cell_index=i) from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad cell: {exc}", path=path, cell_index=i) from None
    try:
        return HalfLineHamiltonian(tuple(cells), d.get("extension", "repeat-last"),
                                   d.get("side", "right"), int(d.get("periodic_from", 0)))
    except ValidationError as exc:
        raise ValidationError(str(exc), path=path) from None


def hamiltonian_from_dict(d, path=None):
    """Half-line or whole-line Hamiltonian from parsed JSON."""
    if isinstance(d, dict) and "right" in d and "left" in d:
        right = half_line_from_dict(d["right"], path, "'right'")
        left = half_line_from_dict(d["left"], path, "'left'")
        try:
            return WholeLineHamiltonian(right, left)
        except ValidationError as exc:
            raise ValidationError(str(exc), path=path) from None
    return half_line_from_dict(d, path)


def read_hamiltonian(path):
    return hamiltonian_from_dict(load_json(path), path)


def write_hamiltonian(H, out) -> None:
    write_text(dumps(H.to_dict()), out)


def _number(v, path, i, what):
    if isinstance(v, bool):
        raise ValidationError(f"{what} must be a number", path=path, cell_index=i)
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):  # exact rationals such as "1/2"
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError):
            pass
    raise ValidationError(f"{what} must be a number or a rational string", path=path, cell_index=i)


def _potential_cells(d, key, path):
    raw = _need(d, "cells", path)
    if not isinstance(raw, list) or not raw:
        raise ValidationError("'cells' must be a non-empty list", path=path)
    out = []
    for i, c in enumerate(raw):
        if isinstance(c, dict):
            if "len" not in c or key not in c:
                raise ValidationError(f"a cell needs 'len' and {key!r}", path=path, cell_index=i)
            length, val = c["len"], c[key]
        elif isinstance(c, list) and len(c) == 2:
            length, val = c
        else:
            raise ValidationError(f"a cell is {{'len': ..., {key!r}: ...}} or [len, value]", path=path, cell_index=i)
        out.append((float(_number(length, path, i, "len")), float(_number(val, path, i, key))))
    return out


def problem_from_dict(d, path=None):
    """Schrödinger, Dirac or Jacobi problem from parsed JSON."""
    kind = _need(d, "type", path)
    try:
        if kind == "schrodinger":
            return SchrodingerProblem(tuple(_potential_cells(d, "V", path)))
        if kind == "dirac":
            return DiracPotential(tuple(_potential_cells(d, "W", path)))
        if kind == "jacobi":
            a, b = _need(d, "a", path), _need(d, "b", path)
            if not isinstance(a, list) or not isinstance(b, list):
                raise ValidationError("'a' and 'b' must be lists", path=path)
            a = tuple(_number(v, path, i, "a") for i, v in enumerate(a))
            b = tuple(_number(v, path, i, "b") for i, v in enumerate(b))
            return JacobiProblem(a, b, _number(d.get("a0", 1), path, None, "a0"))
    except ValidationError as exc:
        if exc.path is None:
            raise ValidationError(str(exc), path=path) from None
        raise
    raise ValidationError(f"unknown problem type {kind!r}", path=path)


def read_problem(path):
    return problem_from_dict(load_json(path), path)


def interval_set_from_json(obj, path=None) -> IntervalSet:
    if not isinstance(obj, list) or not all(isinstance(p, list) and len(p) == 2 for p in obj):
        raise ValidationError("an interval set is a list of [a, b] pairs", path=path)
    try:
        return IntervalSet(tuple((float(a), float(b)) for a, b in obj))
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), path=path) from None


def read_interval_set(spec: str) -> IntervalSet:
    """Interval set from a JSON file path or an inline JSON string."""
    s = spec.strip()
    if s.startswith("["):
        try:
            return interval_set_from_json(json.loads(s), "<inline>")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed interval JSON: {exc.msg}", path="<inline>") from None
    return interval_set_from_json(load_json(spec), spec)
