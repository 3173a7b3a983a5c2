"""Text and binary file formats.

Header-led formats (``#gazerec``, ``#fixseq``, ``#heatmap``) keep comment
lines directly after the header; CSV formats keep them after the data. The
``format_*`` functions emit that canonical layout, so parsing a canonical
file and formatting it again reproduces it byte for byte. Floats are
written with ``repr`` (shortest round-trip form) except in the affinity and
pairs CSVs, which use 9 significant digits.

A comment of the form ``#% {json}`` is a provenance record: the effective
configuration of the command that produced the file.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .contrastive.encoder import PARAM_NAMES, ToyEncoder
from .dhash_sim import DHashCode
from .errors import DataError, FormatError
from .gaze_model import FixationPoint, FixationSequence, GazeHeatmap, GazeRecording
from .moment_sim import MomentVector
from .pairing import AffinityMatrix, Pair, PairSet

PROVENANCE_PREFIX = "#% "
MODEL_MAGIC = b"MCGP"
MODEL_VERSION = 1


def fmt_float(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def fmt9(x: float) -> str:
    return f"{float(x):.9g}"


def provenance_line(config: dict) -> str:
    return PROVENANCE_PREFIX + json.dumps(config, sort_keys=True)


def find_provenance(comments: Iterable[str]) -> dict | None:
    for c in comments:
        if c.startswith(PROVENANCE_PREFIX):
            return json.loads(c[len(PROVENANCE_PREFIX):])
    return None


def read_text(path) -> str:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return data.decode("ascii")
    except UnicodeDecodeError as exc:
        line = data[:exc.start].count(b"\n") + 1
        raise FormatError("file is not ASCII text", line, str(path)) from None


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def _lines(text: str, path=None):
    if text and not text.endswith("\n"):
        text += "\n"
    return [(k + 1, ln.rstrip("\r")) for k, ln in enumerate(text.split("\n")[:-1])]


def _number(field: str, lineno: int, path, what: str) -> float:
    try:
        v = float(field)
    except ValueError:
        raise FormatError(f"non-numeric {what} {field!r}", lineno, path) from None
    if not math.isfinite(v):
        raise FormatError(f"non-finite {what} {field!r}", lineno, path)
    return v


def _header(lines, magic: str, n_fields: int, path):
    if not lines:
        raise FormatError(f"empty file; expected '{magic} v1' header", 1, path)
    lineno, first = lines[0]
    parts = first.split()
    if len(parts) != n_fields or parts[0] != magic or parts[1] != "v1":
        raise FormatError(f"malformed header {first!r}; expected '{magic} v1 ...'", lineno, path)
    return parts[2:]


def _split_body(lines):
    comments, body = [], []
    for lineno, ln in lines:
        if ln.startswith("#"):
            comments.append(ln)
        elif ln.strip():
            body.append((lineno, ln))
    return comments, body


def _positive_int(field, lineno, path, what):
    try:
        v = int(field)
    except ValueError:
        raise FormatError(f"{what} must be an integer, got {field!r}", lineno, path) from None
    if v <= 0:
        raise FormatError(f"{what} must be positive, got {v}", lineno, path)
    return v


# gaze recordings ---------------------------------------------------------

def parse_gazerec(text: str, path=None) -> tuple[GazeRecording, list[str]]:
    lines = _lines(text)
    image_id, w, h = _header(lines, "#gazerec", 5, path)
    w = _positive_int(w, 1, path, "width")
    h = _positive_int(h, 1, path, "height")
    comments, body = _split_body(lines[1:])
    rows, last_t = [], -math.inf
    for lineno, ln in body:
        parts = ln.split(",")
        if len(parts) != 3:
            raise FormatError(f"expected 'timestamp_ms,x_px,y_px', got {ln!r}", lineno, path)
        t, x, y = (_number(p, lineno, path, name) for p, name in zip(parts, ("timestamp", "x", "y")))
        if t <= last_t:
            raise FormatError(f"timestamp {t} is not strictly increasing", lineno, path)
        last_t = t
        rows.append((t, x, y))
    return GazeRecording(image_id, w, h, np.array(rows, dtype=float).reshape(-1, 3)), comments


def format_gazerec(rec: GazeRecording, comments: Sequence[str] = ()) -> str:
    out = [f"#gazerec v1 {rec.image_id} {rec.width_px} {rec.height_px}", *comments]
    out += [f"{fmt_float(t)},{fmt_float(x)},{fmt_float(y)}" for t, x, y in rec.samples]
    return "\n".join(out) + "\n"


# fixation sequences --------------------------------------------------------

def parse_fixseq(text: str, path=None) -> tuple[FixationSequence, list[str]]:
    lines = _lines(text)
    image_id, w, h = _header(lines, "#fixseq", 5, path)
    w = _positive_int(w, 1, path, "width")
    h = _positive_int(h, 1, path, "height")
    comments, body = _split_body(lines[1:])
    fix = []
    for lineno, ln in body:
        parts = ln.split(",")
        if len(parts) != 3:
            raise FormatError(f"expected 'x,y,duration_ms', got {ln!r}", lineno, path)
        x, y, d = (_number(p, lineno, path, name) for p, name in zip(parts, ("x", "y", "duration")))
        if d <= 0:
            raise FormatError(f"fixation duration must be positive, got {d}", lineno, path)
        if not (0 <= x < w and 0 <= y < h):
            raise FormatError(f"fixation ({x}, {y}) lies outside the {w}x{h} extent", lineno, path)
        fix.append(FixationPoint(x, y, d))
    if not fix:
        raise FormatError("fixation file contains no fixations", len(lines), path)
    return FixationSequence(image_id, (w, h), tuple(fix)), comments


def format_fixseq(seq: FixationSequence, comments: Sequence[str] = ()) -> str:
    w, h = seq.extent
    out = [f"#fixseq v1 {seq.image_id} {w} {h}", *comments]
    out += [f"{fmt_float(f.x)},{fmt_float(f.y)},{fmt_float(f.duration)}" for f in seq.fixations]
    return "\n".join(out) + "\n"


# heatmaps ------------------------------------------------------------------

def parse_heatmap(text: str, path=None) -> tuple[GazeHeatmap, list[str]]:
    lines = _lines(text)
    image_id, H, W = _header(lines, "#heatmap", 5, path)
    H = _positive_int(H, 1, path, "row count")
    W = _positive_int(W, 1, path, "column count")
    comments, body = _split_body(lines[1:])
    if len(body) != H:
        raise FormatError(f"header declares {H} rows but file has {len(body)}",
                          body[-1][0] if body else len(lines), path)
    grid = np.empty((H, W))
    for r, (lineno, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != W:
            raise FormatError(f"row has {len(parts)} values, header declares {W}", lineno, path)
        for c, p in enumerate(parts):
            v = _number(p, lineno, path, "cell value")
            if v < 0:
                raise FormatError(f"negative heatmap value {v}", lineno, path)
            grid[r, c] = v
    return GazeHeatmap(image_id, grid), comments


def format_heatmap(hm: GazeHeatmap, comments: Sequence[str] = ()) -> str:
    H, W = hm.shape
    out = [f"#heatmap v1 {hm.image_id} {H} {W}", *comments]
    out += [" ".join(repr(float(v)) for v in row) for row in hm.grid]
    return "\n".join(out) + "\n"


# CSV helpers -----------------------------------------------------------------

def _csv_body(text: str, path):
    lines = _lines(text)
    comments, body = _split_body(lines)
    if not body:
        raise FormatError("file has no header row", 1, path)
    return comments, body


def _with_trailer(rows: list[str], comments: Sequence[str]) -> str:
    return "\n".join([*rows, *comments]) + "\n"


def parse_affinity_csv(text: str, path=None) -> tuple[AffinityMatrix, list[str]]:
    comments, body = _csv_body(text, path)
    lineno, head = body[0]
    cols = head.split(",")
    if cols[0] != "id" or len(cols) < 2:
        raise FormatError(f"first row must be 'id,<id_1>,...', got {head!r}", lineno, path)
    ids = cols[1:]
    n = len(ids)
    if len(body) - 1 != n:
        raise FormatError(f"{n} ids in header but {len(body) - 1} data rows",
                          body[-1][0], path)
    A = np.empty((n, n))
    for r, (lineno, ln) in enumerate(body[1:]):
        parts = ln.split(",")
        if len(parts) != n + 1:
            raise FormatError(f"row has {len(parts) - 1} values, expected {n}", lineno, path)
        if parts[0] != ids[r]:
            raise FormatError(f"row id {parts[0]!r} does not match column id {ids[r]!r}", lineno, path)
        A[r] = [_number(p, lineno, path, "affinity") for p in parts[1:]]
    for r in range(n):
        for c in range(r):
            if A[r, c] != A[c, r]:
                raise FormatError(f"affinity not symmetric: A[{ids[r]},{ids[c]}]={A[r, c]} "
                                  f"but A[{ids[c]},{ids[r]}]={A[c, r]}", body[r + 1][0], path)
    try:
        return AffinityMatrix(tuple(ids), A), comments
    except DataError as exc:
        raise FormatError(str(exc), None, path) from exc


def format_affinity_csv(A: AffinityMatrix, comments: Sequence[str] = ()) -> str:
    rows = ["id," + ",".join(A.ids)]
    rows += [i + "," + ",".join(fmt9(v) for v in row) for i, row in zip(A.ids, A.A)]
    return _with_trailer(rows, comments)


PAIRS_HEADER = "i,j,affinity,accepted"


def parse_pairs_csv(text: str, path=None) -> tuple[PairSet, list[str]]:
    comments, body = _csv_body(text, path)
    lineno, head = body[0]
    if head != PAIRS_HEADER:
        raise FormatError(f"expected header {PAIRS_HEADER!r}, got {head!r}", lineno, path)
    raw = []
    for lineno, ln in body[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields, got {ln!r}", lineno, path)
        a = _number(parts[2], lineno, path, "affinity")
        if parts[3] not in ("0", "1"):
            raise FormatError(f"accepted must be 0 or 1, got {parts[3]!r}", lineno, path)
        raw.append((lineno, parts[0], parts[1], a, parts[3] == "1"))
    ids = [i for _, i, j, _, _ in raw if i == j]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate diagonal pair", None, path)
    pos = {k: n for n, k in enumerate(ids)}
    prov = find_provenance(comments) or {}
    pairs = []
    for lineno, i, j, a, ok in raw:
        if i not in pos or j not in pos:
            raise FormatError(f"pair ({i}, {j}) references an id without a diagonal row", lineno, path)
        pi, pj = pos[i], pos[j]
        pairs.append(Pair(min(pi, pj), max(pi, pj), a, ok))
    pairs.sort(key=lambda pr: (pr.i, pr.j))
    # affinities are stored to 9 digits, so the recorded t may exceed a stored value by rounding
    t = min([float(prov.get("t", 0.0))] + [pr.affinity for pr in pairs if pr.i != pr.j])
    try:
        ps = PairSet(tuple(ids), tuple(pairs), t, float(prov.get("p", 1.0)),
                     int(prov.get("seed", 0)), int(prov.get("epoch", 0)))
    except DataError as exc:
        raise FormatError(str(exc), None, path) from exc
    return ps, comments


def format_pairs_csv(ps: PairSet, comments: Sequence[str] = ()) -> str:
    rows = [PAIRS_HEADER]
    rows += [f"{ps.ids[pr.i]},{ps.ids[pr.j]},{fmt9(pr.affinity)},{int(pr.accepted)}" for pr in ps.pairs]
    return _with_trailer(rows, comments)


def format_moments_csv(ids: Sequence[str], vectors: Sequence[MomentVector], comments=()) -> str:
    rows = ["image_id,mu00,phi1"]
    rows += [f"{i},{repr(float(m.mu00))},{repr(float(m.phi1))}" for i, m in zip(ids, vectors)]
    return _with_trailer(rows, comments)


def format_dhash_csv(ids: Sequence[str], codes: Sequence[DHashCode], comments=()) -> str:
    rows = ["image_id,dhash"] + [f"{i},{c.to_hex()}" for i, c in zip(ids, codes)]
    return _with_trailer(rows, comments)


def format_trace_csv(rows: Iterable[tuple[int, float, float]], comments=()) -> str:
    out = ["epoch,loss,mean_pair_count"] + [f"{e},{repr(float(l))},{repr(float(c))}" for e, l, c in rows]
    return _with_trailer(out, comments)


def parse_trace_csv(text: str, path=None):
    comments, body = _csv_body(text, path)
    rows = []
    for lineno, ln in body[1:]:
        e, l, c = ln.split(",")
        rows.append((int(e), _number(l, lineno, path, "loss"), _number(c, lineno, path, "pair count")))
    return rows, comments


def parse_labels_csv(text: str, path=None) -> tuple[list[str], np.ndarray, list[str]]:
    comments, body = _csv_body(text, path)
    lineno, head = body[0]
    if head != "image_id,label":
        raise FormatError(f"expected header 'image_id,label', got {head!r}", lineno, path)
    ids, labels = [], []
    for lineno, ln in body[1:]:
        parts = ln.split(",")
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise FormatError(f"expected '<id>,<0|1>', got {ln!r}", lineno, path)
        ids.append(parts[0])
        labels.append(int(parts[1]))
    return ids, np.array(labels, dtype=int), comments


def format_labels_csv(ids, labels, comments=()) -> str:
    rows = ["image_id,label"] + [f"{i},{int(l)}" for i, l in zip(ids, labels)]
    return _with_trailer(rows, comments)


# images ----------------------------------------------------------------------

def format_pgm(img: np.ndarray, comments: Sequence[str] = (), maxval: int = 255) -> str:
    """ASCII graymap (P2) of an image with values in [0, 1]."""
    q = np.clip(np.rint(np.asarray(img, dtype=float) * maxval), 0, maxval).astype(int)
    H, W = q.shape
    out = ["P2", *comments, f"{W} {H}", str(maxval)]
    out += [" ".join(str(v) for v in row) for row in q]
    return "\n".join(out) + "\n"


def parse_pgm(text: str, path=None) -> np.ndarray:
    """Values scaled to [0, 1] by maxval."""
    tokens, lines = [], _lines(text)
    if not lines or lines[0][1].strip() != "P2":
        raise FormatError("expected 'P2' ASCII graymap", 1, path)
    for lineno, ln in lines[1:]:
        ln = ln.split("#", 1)[0]
        tokens += [(lineno, t) for t in ln.split()]
    if len(tokens) < 3:
        raise FormatError("truncated PGM header", len(lines), path)
    W, H, maxval = (_positive_int(t, ln, path, "PGM header field") for ln, t in tokens[:3])
    vals = tokens[3:]
    if len(vals) != W * H:
        raise FormatError(f"PGM declares {W}x{H} pixels but has {len(vals)} values", len(lines), path)
    arr = np.array([_number(t, ln, path, "pixel") for ln, t in vals]).reshape(H, W)
    return arr / maxval


# model weights -----------------------------------------------------------------

def encode_model(enc: ToyEncoder, config: dict | None = None) -> bytes:
    """``MCGP``, u32 version, u32 array count, per array u32 rows and cols,
    then each array as row-major little-endian float32, then u32 byte length
    and UTF-8 JSON of the producing configuration. Biases are 1 x n rows.
    """
    arrays = [np.atleast_2d(getattr(enc, k)) for k in PARAM_NAMES]
    out = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(arrays))]
    out += [struct.pack("<II", *a.shape) for a in arrays]
    out += [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(out)


def decode_model(data: bytes, path=None) -> tuple[ToyEncoder, dict]:
    if data[:4] != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)", None, path)
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}", None, path)
        if count != len(PARAM_NAMES):
            raise FormatError(f"expected {len(PARAM_NAMES)} arrays, found {count}", None, path)
        off = 12
        shapes = []
        for _ in range(count):
            shapes.append(struct.unpack_from("<II", data, off))
            off += 8
        arrays = []
        for r, c in shapes:
            n = r * c
            arrays.append(np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(float).reshape(r, c))
            off += 4 * n
        (blen,) = struct.unpack_from("<I", data, off)
        config = json.loads(data[off + 4: off + 4 + blen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated or corrupt model file: {exc}", None, path) from exc
    W1, b1, W2, b2 = arrays
    if W2.shape[1] != W1.shape[0] or b1.shape[1] != W1.shape[0] or b2.shape[1] != W2.shape[0]:
        raise FormatError("inconsistent layer shapes", None, path)
    return ToyEncoder(W1, b1.ravel(), W2, b2.ravel()), config


# dispatch ------------------------------------------------------------------------

def sniff(text: str) -> str:
    first = text.split("\n", 1)[0].split()
    head = first[0] if first else ""
    return {"#gazerec": "gazerec", "#fixseq": "fixseq", "#heatmap": "heatmap",
            "P2": "pgm"}.get(head, "csv")


def load_gaze_item(path):
    """A fixation sequence or heatmap, whichever the file holds."""
    text = read_text(path)
    kind = sniff(text)
    if kind == "fixseq":
        return parse_fixseq(text, str(path))[0]
    if kind == "heatmap":
        return parse_heatmap(text, str(path))[0]
    raise FormatError(f"expected a #fixseq or #heatmap file, found {kind}", 1, str(path))


def roundtrip(path) -> str:
    """Parse a file in any declared text format and serialize it canonically."""
    text = read_text(path)
    kind = sniff(text)
    p = str(path)
    if kind == "gazerec":
        v, c = parse_gazerec(text, p)
        return format_gazerec(v, c)
    if kind == "fixseq":
        v, c = parse_fixseq(text, p)
        return format_fixseq(v, c)
    if kind == "heatmap":
        v, c = parse_heatmap(text, p)
        return format_heatmap(v, c)
    head = text.split("\n", 1)[0]
    if head.startswith("id,"):
        v, c = parse_affinity_csv(text, p)
        return format_affinity_csv(v, c)
    if head == PAIRS_HEADER:
        v, c = parse_pairs_csv(text, p)
        return format_pairs_csv(v, c)
    if head == "image_id,label":
        ids, labels, c = parse_labels_csv(text, p)
        return format_labels_csv(ids, labels, c)
    if head == "epoch,loss,mean_pair_count":
        rows, c = parse_trace_csv(text, p)
        return format_trace_csv(rows, c)
    raise FormatError(f"unrecognized file format (first line {head!r})", 1, p)
