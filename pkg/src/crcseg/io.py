"""File formats.

PFG1 (probability map)::

    b"PFG1" | u32le height | u32le width | height*width float32le, row-major

MSK1 (binary mask)::

    b"MSK1" | u32le height | u32le width | height*width bytes, each 0 or 1

Manifest (JSON)::

    {"version": 1,
     "samples": [{"id": str, "prob_path": str, "mask_path": str,
                  "height": int, "width": int}, ...]}

Paths in a manifest are relative to the manifest's directory.

All writers go through a temporary file in the target directory followed by
an atomic rename, so readers never see a partially written file.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from crcseg.core import BinaryMask, ProbabilityMap, Sample
from crcseg.errors import (
    BadMagic,
    BadPgm,
    CrcError,
    DimMismatch,
    IoFailure,
    ManifestParse,
    MissingFile,
    NonBinaryMask,
    TruncatedFile,
    ValueOutOfRange,
)

PFG_MAGIC = b"PFG1"
MSK_MAGIC = b"MSK1"
HEADER = struct.Struct("<4sII")
MANIFEST_VERSION = 1
REPORT_SCHEMA_VERSION = 1
REPORT_COLUMNS = (
    "trial",
    "alpha",
    "kind",
    "ratio",
    "lambda_hat",
    "feasible",
    "mean_test_fdr",
    "mean_test_fnr",
    "ecr",
    "apss",
    "n_cal",
    "n_test",
)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise MissingFile(f"no such file: {path}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


# -- binary grids -------------------------------------------------------------


def encode_prob(prob: ProbabilityMap) -> bytes:
    payload = np.ascontiguousarray(prob.values, dtype="<f4").tobytes()
    return HEADER.pack(PFG_MAGIC, prob.height, prob.width) + payload


def encode_mask(mask: BinaryMask) -> bytes:
    payload = np.ascontiguousarray(mask.values, dtype=np.uint8).tobytes()
    return HEADER.pack(MSK_MAGIC, mask.height, mask.width) + payload


def _parse_header(data: bytes, magic: bytes, itemsize: int, source) -> tuple[int, int, bytes]:
    if len(data) < len(magic) or data[: len(magic)] != magic:
        raise BadMagic(f"{source}: expected magic {magic!r}, got {data[:4]!r}")
    if len(data) < HEADER.size:
        raise TruncatedFile(f"{source}: header is {len(data)} bytes, need {HEADER.size}")
    _, height, width = HEADER.unpack_from(data)
    if height == 0 or width == 0:
        raise DimMismatch(f"{source}: header declares an empty {height}x{width} grid")
    expected = height * width * itemsize
    payload = data[HEADER.size :]
    if len(payload) < expected:
        raise TruncatedFile(
            f"{source}: {height}x{width} grid needs {expected} payload bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise TruncatedFile(
            f"{source}: {len(payload) - expected} trailing bytes after a {height}x{width} grid"
        )
    return height, width, payload


def decode_prob(data: bytes, source="<bytes>") -> ProbabilityMap:
    height, width, payload = _parse_header(data, PFG_MAGIC, 4, source)
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    try:
        return ProbabilityMap(values)
    except ValueOutOfRange as exc:
        raise ValueOutOfRange(f"{source}: {exc}", index=exc.index) from exc


def decode_mask(data: bytes, source="<bytes>") -> BinaryMask:
    height, width, payload = _parse_header(data, MSK_MAGIC, 1, source)
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    try:
        return BinaryMask(values)
    except NonBinaryMask as exc:
        raise NonBinaryMask(f"{source}: {exc}", index=exc.index) from exc


def write_prob(path, prob: ProbabilityMap) -> None:
    atomic_write_bytes(path, encode_prob(prob))


def read_prob(path) -> ProbabilityMap:
    return decode_prob(_read_bytes(path), source=path)


def write_mask(path, mask: BinaryMask) -> None:
    atomic_write_bytes(path, encode_mask(mask))


def read_mask(path) -> BinaryMask:
    return decode_mask(_read_bytes(path), source=path)


# -- PGM import ---------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int) -> tuple[list, int]:
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise BadPgm("PGM header ends early")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise BadPgm("PGM header is not followed by whitespace")
    return tokens, pos + 1


def decode_pgm_mask(data: bytes, source="<bytes>") -> BinaryMask:
    """Binary P5 PGM with maxval < 256; zero maps to 0, anything else to 1."""
    if data[:2] != b"P5":
        raise BadMagic(f"{source}: not a binary PGM (P5) file")
    try:
        tokens, start = _pgm_tokens(data, 3)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise BadPgm(f"{source}: malformed PGM header") from exc
    except BadPgm as exc:
        raise BadPgm(f"{source}: {exc}") from exc
    if width < 1 or height < 1:
        raise BadPgm(f"{source}: empty {width}x{height} image")
    if not 0 < maxval < 256:
        raise BadPgm(f"{source}: only 8-bit PGM is supported (maxval={maxval})")
    raster = data[start : start + width * height]
    if len(raster) < width * height:
        raise TruncatedFile(f"{source}: PGM raster is shorter than {width}x{height}")
    values = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return BinaryMask((values != 0).astype(np.uint8))


def read_pgm_mask(path) -> BinaryMask:
    return decode_pgm_mask(_read_bytes(path), source=path)


def encode_pgm(mask: BinaryMask, foreground: int = 255) -> bytes:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + (mask.values.astype(np.uint8) * foreground).tobytes()


# -- manifest -----------------------------------------------------------------


def _manifest_entries(doc, source) -> list:
    if not isinstance(doc, dict):
        raise ManifestParse(f"{source}: top level must be an object")
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestParse(f"{source}: unsupported manifest version {doc.get('version')!r}")
    entries = doc.get("samples")
    if not isinstance(entries, list):
        raise ManifestParse(f"{source}: 'samples' must be a list")
    seen = set()
    for k, e in enumerate(entries):
        if not isinstance(e, dict):
            raise ManifestParse(f"{source}: sample entry {k} is not an object")
        for key, typ in (("id", str), ("prob_path", str), ("mask_path", str), ("height", int), ("width", int)):
            if not isinstance(e.get(key), typ) or isinstance(e.get(key), bool):
                raise ManifestParse(f"{source}: sample entry {k} has missing or invalid {key!r}")
        if e["height"] < 1 or e["width"] < 1:
            raise ManifestParse(f"{source}: sample {e['id']!r} declares non-positive dimensions")
        if e["id"] in seen:
            raise ManifestParse(f"{source}: duplicate sample id {e['id']!r}")
        seen.add(e["id"])
    return entries


def load_manifest(path) -> list[Sample]:
    """Load and validate every sample listed in a manifest.

    Fails on the first bad entry; the error message names the sample id.
    """
    path = Path(path)
    raw = _read_bytes(path)
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestParse(f"{path}: invalid JSON: {exc}") from exc
    entries = _manifest_entries(doc, path)
    base = path.parent
    samples = []
    for e in entries:
        sid = e["id"]
        try:
            prob = read_prob(base / e["prob_path"])
            mask = read_mask(base / e["mask_path"])
        except CrcError as exc:
            raise type(exc)(f"sample {sid!r}: {exc}") from exc
        declared = (e["height"], e["width"])
        for what, grid in (("probability map", prob), ("mask", mask)):
            if grid.shape != declared:
                raise DimMismatch(
                    f"sample {sid!r}: manifest declares {declared[0]}x{declared[1]} but "
                    f"{what} header is {grid.height}x{grid.width}"
                )
        samples.append(Sample(id=sid, prob=prob, truth=mask))
    return samples


def write_dataset(directory, samples: Sequence[Sample], manifest_name="manifest.json") -> Path:
    """Write PFG1/MSK1 files for every sample plus a manifest; return its path."""
    directory = Path(directory)
    entries = []
    for s in samples:
        prob_rel, mask_rel = f"probs/{s.id}.pfg", f"masks/{s.id}.msk"
        write_prob(directory / prob_rel, s.prob)
        write_mask(directory / mask_rel, s.truth)
        entries.append(
            {"id": s.id, "prob_path": prob_rel, "mask_path": mask_rel,
             "height": s.prob.height, "width": s.prob.width}
        )
    manifest = directory / manifest_name
    doc = {"version": MANIFEST_VERSION, "samples": entries}
    atomic_write_text(manifest, json.dumps(doc, indent=1) + "\n")
    return manifest


# -- reports ------------------------------------------------------------------


def format_number(value) -> str:
    """17 significant digits, enough to round-trip any float64."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _check_row(row: dict, columns) -> None:
    for col in columns:
        if col not in row:
            raise IoFailure(f"report row is missing column {col!r}")
        v = row[col]
        if isinstance(v, float) and not math.isfinite(v):
            raise IoFailure(f"report column {col!r} is not finite: {v!r}")


def render_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """CSV text; NaN cells are written empty, strings verbatim."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                cells.append("")
            elif isinstance(v, str):
                cells.append(v)
            else:
                cells.append(format_number(v))
        writer.writerow(cells)
    return buf.getvalue()


def _json_value(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    return format_number(v)


def render_json(rows: Sequence[dict], columns: Sequence[str]) -> str:
    lines = []
    for row in rows:
        body = ", ".join(f"{json.dumps(c)}: {_json_value(row[c])}" for c in columns)
        lines.append("  {" + body + "}")
    return "[\n" + ",\n".join(lines) + "\n]\n"


def write_report(rows: Sequence[dict], path, format: str = "csv", columns=REPORT_COLUMNS) -> Path:
    """Write trial rows as CSV (fixed header) or as a JSON array of objects."""
    rows = list(rows)
    if not rows:
        raise IoFailure("refusing to write an empty report")
    for row in rows:
        _check_row(row, columns)
    if format == "csv":
        text = render_csv(rows, columns)
    elif format == "json":
        text = render_json(rows, columns)
    else:
        raise ValueError(f"unknown report format {format!r}")
    atomic_write_text(path, text)
    return Path(path)


def write_table(rows: Iterable[dict], path, columns: Sequence[str]) -> Path:
    """Auxiliary CSV (summaries, plot data, curves); NaN allowed as empty cells."""
    atomic_write_text(path, render_csv(list(rows), columns))
    return Path(path)


def read_json_report(path) -> list[dict]:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IoFailure(f"{path}: invalid JSON report: {exc}") from exc


def read_csv_report(path) -> list[dict]:
    """Parse a report CSV back into typed values."""
    text = _read_bytes(path).decode("utf-8")
    out = []
    for rec in csv.DictReader(_stdio.StringIO(text)):
        row = {}
        for key, cell in rec.items():
            if cell == "":
                row[key] = None
            elif cell in ("true", "false"):
                row[key] = cell == "true"
            else:
                try:
                    row[key] = int(cell)
                except ValueError:
                    try:
                        row[key] = float(cell)
                    except ValueError:
                        row[key] = cell
        out.append(row)
    return out
