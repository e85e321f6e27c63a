"""FCIDUMP and native JSON readers/writers, trace CSV, exact-number JSON.

Every float written by this module uses 17 significant digits so that
reading it back reproduces the same double.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from pathlib import Path

import numpy as np

from .eri import EriTensor, quad_index
from .errors import ParseError
from .hamiltonian import Convention, ElectronicSystem
from .solvers import TRACE_COLUMNS, IterationRecord, IterationTrace

log = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-10


def fmt(x) -> str:
    """Round-trip exact text for a float (17 significant digits)."""
    text = "%.17g" % x
    if not any(c in text for c in ".eni"):
        text += ".0"
    return text


# --- JSON with fixed float formatting ---------------------------------------


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written as ``%.17g``; non-finite floats become ``null``."""
    out = io.StringIO()
    _emit(obj, out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _emit(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        out.write({None: "null", True: "true", False: "false"}[obj])
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(fmt(float(obj)) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (key, value) in enumerate(obj.items()):
            out.write(f'{pad}"{key}": ')
            _emit(value, out, indent, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.write("[]")
        elif all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items):
            out.write("[")
            for i, v in enumerate(items):
                if i:
                    out.write(", ")
                _emit(v, out, indent, level + 1)
            out.write("]")
        else:
            out.write("[\n")
            for i, v in enumerate(items):
                out.write(pad)
                _emit(v, out, indent, level + 1)
                out.write(",\n" if i < len(items) - 1 else "\n")
            out.write(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


# --- FCIDUMP -----------------------------------------------------------------

_ASSIGN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*")


def _parse_header(text: str, first_line: int, path):
    body = text.strip()
    if not body.upper().startswith("&FCI"):
        raise ParseError("header must start with &FCI", first_line, path)
    body = body[4:]
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    matches = list(_ASSIGN.finditer(body))
    if body.strip() and (not matches or body[: matches[0].start()].strip(" ,\n\t")):
        raise ParseError(f"cannot parse header text {body.strip()!r}", first_line, path)
    values = {}
    for m, nxt in zip(matches, matches[1:] + [None]):
        raw = body[m.end(): nxt.start() if nxt else len(body)]
        items = [tok for tok in re.split(r"[,\s]+", raw) if tok]
        values[m.group(1).upper()] = items
    return values


def _header_int(values, key, line, path, default=None):
    if key not in values:
        if default is None:
            raise ParseError(f"header is missing {key}", line, path)
        return default
    items = values[key]
    if len(items) != 1:
        raise ParseError(f"{key} expects one integer, got {items}", line, path)
    try:
        return int(items[0])
    except ValueError:
        raise ParseError(f"{key} is not an integer: {items[0]!r}", line, path) from None


def _parse_float(tok: str) -> float:
    return float(tok.replace("D", "E").replace("d", "e"))


def parse_fcidump(text: str, convention="rhf", path=None) -> ElectronicSystem:
    """Parse FCIDUMP text (chemist-notation integrals, 1-based indices).

    Header assignments may be separated by commas, spaces or newlines and
    the namelist may end with ``&END`` or ``/``. ``MS2`` other than 0 is
    rejected. Body lines ``value i j k l`` give ``(ij|kl)`` when all indices
    are nonzero, ``h_ij`` when ``k = l = 0`` and the core energy when all
    are zero. Orbital-energy lines (``i > 0``, ``j = k = l = 0``) are skipped.
    """
    lines = text.splitlines()
    header_end = None
    for n, line in enumerate(lines):
        stripped = line.strip()
        if re.search(r"&END\s*$", stripped, re.IGNORECASE) or stripped == "/" or stripped.endswith("/"):
            header_end = n
            break
    if header_end is None:
        raise ParseError("header not terminated by &END or /", len(lines) or 1, path)
    header = _parse_header("\n".join(lines[: header_end + 1]), 1, path)
    norb = _header_int(header, "NORB", 1, path)
    nelec = _header_int(header, "NELEC", 1, path)
    ms2 = _header_int(header, "MS2", 1, path, default=0)
    if ms2 != 0:
        raise ParseError(f"MS2={ms2} not supported (closed-shell/spinless only)", 1, path)
    if _header_int(header, "IUHF", 1, path, default=0) != 0:
        raise ParseError("unrestricted FCIDUMP (IUHF) not supported", 1, path)
    if norb < 1:
        raise ParseError(f"NORB must be >= 1, got {norb}", 1, path)

    h = np.zeros((norb, norb))
    h_seen = {}
    eri_vals = {}
    core = None
    core_line = None
    for lineno, line in enumerate(lines[header_end + 1:], start=header_end + 2):
        stripped = line.strip()
        if not stripped:
            continue
        toks = stripped.split()
        if len(toks) != 5:
            raise ParseError(f"expected 'value i j k l', got {len(toks)} fields", lineno, path)
        try:
            value = _parse_float(toks[0])
        except ValueError:
            raise ParseError(f"bad numeric value {toks[0]!r}", lineno, path) from None
        try:
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError:
            raise ParseError(f"bad orbital index in {toks[1:]}", lineno, path) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {toks[0]!r}", lineno, path)
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise ParseError(f"orbital index out of range 0..{norb}: {i} {j} {k} {l}", lineno, path)
        if i and j and k and l:
            key = quad_index(i - 1, j - 1, k - 1, l - 1)
            _store(eri_vals, key, value, lineno, path)
        elif i and j and not k and not l:
            key = (max(i, j), min(i, j))
            _store(h_seen, key, value, lineno, path)
            h[i - 1, j - 1] = h[j - 1, i - 1] = h_seen[key][0]
        elif not (i or j or k or l):
            if core is not None and abs(core - value) > DUPLICATE_TOL:
                raise ParseError(
                    f"conflicting core energy (first given on line {core_line})", lineno, path
                )
            if core is None:
                core, core_line = value, lineno
        elif i and not (j or k or l):
            log.debug("skipping orbital energy on line %d", lineno)
        else:
            raise ParseError(f"invalid index pattern {i} {j} {k} {l}", lineno, path)

    packed = np.zeros(EriTensor.zeros(norb).packed.shape)
    for key, (value, _) in eri_vals.items():
        packed[key] = value
    try:
        return ElectronicSystem(
            h=h,
            eri=EriTensor(norb, packed),
            n_electrons=nelec,
            convention=Convention.parse(convention),
            core_energy=core or 0.0,
        )
    except ValueError as exc:
        raise ParseError(str(exc), 1, path) from exc


def _store(table, key, value, lineno, path):
    if key in table:
        prev, prev_line = table[key]
        if abs(prev - value) > DUPLICATE_TOL:
            raise ParseError(
                f"value {value!r} conflicts with {prev!r} given on line {prev_line}", lineno, path
            )
        return
    table[key] = (value, lineno)


def read_fcidump(path, convention="rhf") -> ElectronicSystem:
    path = Path(path)
    return parse_fcidump(path.read_text(), convention=convention, path=str(path))


def write_fcidump(system: ElectronicSystem, path) -> None:
    n = system.n_basis
    lines = [f" &FCI NORB={n},NELEC={system.n_electrons},MS2=0,", "  ORBSYM=" + "1," * n, "  ISYM=1,", " &END"]
    for i, j, k, l, v in system.eri.entries():
        lines.append(f"{fmt(v)} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            if system.h[i, j] != 0.0:
                lines.append(f"{fmt(system.h[i, j])} {i + 1} {j + 1} 0 0")
    lines.append(f"{fmt(system.core_energy)} 0 0 0 0")
    Path(path).write_text("\n".join(lines) + "\n")


# --- native JSON -------------------------------------------------------------


def system_to_native(system: ElectronicSystem) -> dict:
    doc = {
        "n_basis": system.n_basis,
        "n_electrons": system.n_electrons,
        "convention": system.convention.value,
        "core_energy": system.core_energy,
        "h": [list(row) for row in system.h],
        "eri": [[i + 1, j + 1, k + 1, l + 1, v] for i, j, k, l, v in system.eri.entries()],
    }
    if system.kinetic is not None:
        doc["kinetic"] = [list(row) for row in system.kinetic]
    if system.nuclear_charge is not None:
        doc["nuclear_charge"] = int(system.nuclear_charge)
    return doc


def write_native(system: ElectronicSystem, path) -> None:
    Path(path).write_text(dumps(system_to_native(system)))


def _matrix_field(doc, key, n, path):
    raw = np.asarray(doc[key], dtype=float)
    if raw.shape == (n * n,):
        raw = raw.reshape(n, n)
    if raw.shape != (n, n):
        raise ParseError(f"'{key}' must be {n}x{n} (nested or flat row-major), got shape {raw.shape}", path=path)
    return raw


def native_to_system(doc: dict, path=None) -> ElectronicSystem:
    try:
        n = int(doc["n_basis"])
        h = _matrix_field(doc, "h", n, path)
        packed = np.zeros(EriTensor.zeros(n).packed.shape)
        seen = set()
        for pos, entry in enumerate(doc.get("eri", [])):
            if len(entry) != 5:
                raise ParseError(f"eri entry #{pos} must be [i, j, k, l, value]", path=path)
            i, j, k, l = (int(x) for x in entry[:4])
            if not (i >= j and k >= l and (i * (i - 1) // 2 + j) >= (k * (k - 1) // 2 + l)):
                raise ParseError(f"eri entry #{pos} {entry[:4]} is not canonical", path=path)
            if min(i, j, k, l) < 1 or max(i, j, k, l) > n:
                raise ParseError(f"eri entry #{pos} index out of range 1..{n}", path=path)
            key = quad_index(i - 1, j - 1, k - 1, l - 1)
            if key in seen:
                raise ParseError(f"eri entry #{pos} duplicates an earlier entry", path=path)
            seen.add(key)
            packed[key] = float(entry[4])
        kinetic = _matrix_field(doc, "kinetic", n, path) if doc.get("kinetic") is not None else None
        z = doc.get("nuclear_charge")
        return ElectronicSystem(
            h=h,
            eri=EriTensor(n, packed),
            n_electrons=int(doc["n_electrons"]),
            convention=Convention.parse(doc.get("convention", "rhf")),
            core_energy=float(doc.get("core_energy", 0.0)),
            kinetic=kinetic,
            nuclear_charge=None if z is None else int(z),
        )
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", path=path) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), path=path) from exc


def read_native(path) -> ElectronicSystem:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    return native_to_system(doc, path=str(path))


def read_system(path, convention=None) -> ElectronicSystem:
    """Read a native ``.json`` system or an FCIDUMP (anything else).

    ``convention`` overrides the file's (FCIDUMP default: RHF).
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        system = read_native(path)
        return system if convention is None else system.with_convention(convention)
    return read_fcidump(path, convention=convention or "rhf")


# --- traces ------------------------------------------------------------------


def trace_csv_text(trace) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in trace:
        row = []
        for name in TRACE_COLUMNS:
            v = getattr(r, name)
            if v is None:
                row.append("")
            elif name == "k":
                row.append(str(v))
            else:
                row.append(fmt(v))
        writer.writerow(row)
    return out.getvalue()


def write_trace_csv(trace, path) -> None:
    Path(path).write_text(trace_csv_text(trace))


def read_trace_csv(path):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty trace file", 1, str(path)) from None
        missing = [c for c in ("k", "energy", "grad_norm") if c not in header]
        if missing:
            raise ParseError(f"trace header lacks columns {missing}", 1, str(path))
        trace = IterationTrace()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno, str(path))
            values = dict(zip(header, row))
            try:
                kwargs = {
                    name: (None if values.get(name, "") == "" else float(values[name]))
                    for name in TRACE_COLUMNS
                    if name != "k"
                }
                trace.append(IterationRecord(k=int(values["k"]), **kwargs))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad trace row: {exc}", lineno, str(path)) from None
    return trace
