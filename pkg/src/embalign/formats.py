"""On-disk formats: embeddings, word vectors, report corpora, pairs, labels,
projection models and training traces.

All text formats are UTF-8; floats are serialized with 17 significant digits
so write -> read -> write is byte-identical. Parse errors name the offending
line number.
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import numpy as np

from .adversarial import Discriminator, EpochRecord, TrainTrace
from .alignment import METHOD_TAGS, ProjectionModel
from .corpus import EmbeddingSet, PairSet, Report, WordVectorTable, parse_report
from .errors import DataFormatError


def fmt_float(x: float) -> str:
    return f"{x:.17g}"


def _fmt_row(values) -> str:
    return " ".join(fmt_float(v) for v in values)


def atomic_write_text(path, text: str):
    """Write via a temp file and rename so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# EMB-v1 embedding files: "emb <n> <d>" header, then "<id> <v1> ... <vd>".
# ---------------------------------------------------------------------------

def write_embeddings(emb: EmbeddingSet, path):
    lines = [f"emb {emb.n} {emb.dim}"]
    for i, vid in enumerate(emb.ids):
        if any(ch.isspace() for ch in vid):
            raise DataFormatError(f"embedding id {vid!r} contains whitespace")
        lines.append(f"{vid} {_fmt_row(emb.vectors[i])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_embeddings(path, modality_tag: str = "") -> EmbeddingSet:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != "emb":
            raise DataFormatError(f"{path}:1: expected 'emb <n> <d>' header, got {header!r}")
        try:
            n, d = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DataFormatError(f"{path}:1: non-integer counts in header") from exc
        ids, rows, seen = [], [], set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != d + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected id plus {d} values, got {len(fields) - 1}")
            vid = fields[0]
            if vid in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate id {vid!r}")
            seen.add(vid)
            try:
                rows.append([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad float value") from exc
            ids.append(vid)
        if len(ids) != n:
            raise DataFormatError(f"{path}: header declares {n} rows, found {len(ids)}")
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(ids), d)
    return EmbeddingSet(ids=tuple(ids), vectors=vectors, modality_tag=modality_tag)


# ---------------------------------------------------------------------------
# Word-vector files: "<token> <v1> ... <vd>", dimension inferred from line 1.
# ---------------------------------------------------------------------------

def read_word_vectors(path) -> WordVectorTable:
    path = Path(path)
    entries = {}
    dim = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if dim is None:
                dim = len(fields) - 1
                if dim < 1:
                    raise DataFormatError(f"{path}:{lineno}: no vector values on first line")
            if len(fields) != dim + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected token plus {dim} values, got {len(fields) - 1}")
            token = fields[0]
            if token in entries:
                raise DataFormatError(f"{path}:{lineno}: duplicate token {token!r}")
            try:
                entries[token] = np.asarray([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad float value") from exc
    if dim is None:
        raise DataFormatError(f"{path}: empty word-vector file")
    return WordVectorTable(dimension=dim, entries=entries)


# ---------------------------------------------------------------------------
# Report corpora: a directory of one-file-per-report, or one concatenated
# file with "==== <id>" separator lines.
# ---------------------------------------------------------------------------

def read_reports(path) -> list[Report]:
    path = Path(path)
    if path.is_dir():
        reports = []
        for fp in sorted(path.iterdir()):
            if fp.is_file():
                raw = fp.read_text(encoding="utf-8")
                reports.append(parse_report(raw, report_id=fp.stem))
        if not reports:
            raise DataFormatError(f"{path}: no report files in directory")
        return reports
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise DataFormatError(f"{path}: empty report corpus")
    lines = text.splitlines()
    if not any(line.startswith("==== ") for line in lines):
        return [parse_report(text, report_id=path.stem)]
    reports = []
    current_id, buf = None, []
    seen = set()

    def flush(lineno):
        if current_id is None:
            return
        body = "\n".join(buf).strip()
        if not body:
            raise DataFormatError(f"{path}:{lineno}: report {current_id!r} has no text")
        reports.append(parse_report(body, report_id=current_id))

    for lineno, line in enumerate(lines, start=1):
        if line.startswith("==== "):
            flush(lineno)
            current_id = line[5:].strip()
            if not current_id:
                raise DataFormatError(f"{path}:{lineno}: separator with empty id")
            if current_id in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate report id {current_id!r}")
            seen.add(current_id)
            buf = []
        elif current_id is None:
            if line.strip():
                raise DataFormatError(f"{path}:{lineno}: text before the first '==== <id>' line")
        else:
            buf.append(line)
    flush(len(lines))
    return reports


def write_reports(reports, path):
    blocks = []
    for rep in reports:
        blocks.append(f"==== {rep.id}\n{rep.raw_text.strip()}")
    atomic_write_text(path, "\n".join(blocks) + "\n")


# ---------------------------------------------------------------------------
# Pair CSV: header "text_id,image_id"; row order is meaningful (train rows
# first, then test rows, matching the embedding files).
# ---------------------------------------------------------------------------

def write_pairs(pairs: PairSet, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["text_id", "image_id"])
    for a, b in pairs.pairs:
        writer.writerow([a, b])
    atomic_write_text(path, buf.getvalue())


def read_pairs(path) -> PairSet:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}:1: empty pair file") from None
        if [h.strip() for h in header] != ["text_id", "image_id"]:
            raise DataFormatError(f"{path}:1: expected header text_id,image_id")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or not row[0] or not row[1]:
                raise DataFormatError(f"{path}:{lineno}: expected two non-empty fields")
            pairs.append((row[0], row[1]))
    return PairSet(pairs=tuple(pairs))


# ---------------------------------------------------------------------------
# Label CSV: header "id,codes" with ";"-separated code strings.
# ---------------------------------------------------------------------------

def write_labels(labels: dict, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "codes"])
    for key, codes in labels.items():
        writer.writerow([key, ";".join(sorted(codes))])
    atomic_write_text(path, buf.getvalue())


def read_labels(path) -> dict:
    path = Path(path)
    labels = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}:1: empty label file") from None
        if [h.strip() for h in header] != ["id", "codes"]:
            raise DataFormatError(f"{path}:1: expected header id,codes")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or not row[0]:
                raise DataFormatError(f"{path}:{lineno}: expected id,codes")
            if row[0] in labels:
                raise DataFormatError(f"{path}:{lineno}: duplicate id {row[0]!r}")
            codes = frozenset(c for c in row[1].split(";") if c)
            if not codes:
                raise DataFormatError(f"{path}:{lineno}: id {row[0]!r} has no codes")
            labels[row[0]] = codes
    return labels


# ---------------------------------------------------------------------------
# MDL-v1 projection models: "proj <d_x> <d_y> <method_tag> <seed>" header,
# d_x rows of d_y floats, then an optional discriminator block
# "disc <in> <hidden> <out>" with layer-1 rows, bias row, layer-2 row, bias.
# ---------------------------------------------------------------------------

def write_model(model: ProjectionModel, path):
    d_x, d_y = model.W.shape
    lines = [f"proj {d_x} {d_y} {model.method_tag} {model.seed}"]
    for i in range(d_x):
        lines.append(_fmt_row(model.W[i]))
    disc = model.extras.get("discriminator")
    if disc is not None:
        lines.append(f"disc {disc.in_dim} {disc.hidden} 1")
        for i in range(disc.in_dim):
            lines.append(_fmt_row(disc.w1[i]))
        lines.append(_fmt_row(disc.b1))
        lines.append(_fmt_row(disc.w2))
        lines.append(fmt_float(disc.b2))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_float_row(path, lineno, line, expected):
    fields = line.split()
    if len(fields) != expected:
        raise DataFormatError(f"{path}:{lineno}: expected {expected} values, got {len(fields)}")
    try:
        return [float(v) for v in fields]
    except ValueError as exc:
        raise DataFormatError(f"{path}:{lineno}: bad float value") from exc


def read_model(path) -> ProjectionModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"{path}:1: empty model file")
    parts = lines[0].split()
    if len(parts) != 5 or parts[0] != "proj":
        raise DataFormatError(f"{path}:1: expected 'proj <d_x> <d_y> <tag> <seed>' header")
    try:
        d_x, d_y, seed = int(parts[1]), int(parts[2]), int(parts[4])
    except ValueError as exc:
        raise DataFormatError(f"{path}:1: non-integer header fields") from exc
    tag = parts[3]
    if tag not in METHOD_TAGS:
        raise DataFormatError(f"{path}:1: unknown method tag {tag!r}")
    if len(lines) < 1 + d_x:
        raise DataFormatError(f"{path}: header declares {d_x} rows, found {len(lines) - 1}")
    w = np.asarray(
        [_parse_float_row(path, i + 2, lines[1 + i], d_y) for i in range(d_x)],
        dtype=np.float64,
    )
    extras = {}
    rest = lines[1 + d_x:]
    rest = [ln for ln in rest if ln.strip()]
    if rest:
        head = rest[0].split()
        if len(head) != 4 or head[0] != "disc":
            raise DataFormatError(f"{path}: unexpected trailing content {rest[0]!r}")
        in_dim, hidden, out = int(head[1]), int(head[2]), int(head[3])
        if out != 1:
            raise DataFormatError(f"{path}: discriminator output arity must be 1")
        need = in_dim + 3
        if len(rest) - 1 != need:
            raise DataFormatError(
                f"{path}: discriminator block needs {need} rows, found {len(rest) - 1}")
        base = 1 + d_x + 1  # 0-based line offset of first w1 row
        w1 = np.asarray(
            [_parse_float_row(path, base + i + 1, rest[1 + i], hidden) for i in range(in_dim)])
        b1 = np.asarray(_parse_float_row(path, base + in_dim + 1, rest[1 + in_dim], hidden))
        w2 = np.asarray(_parse_float_row(path, base + in_dim + 2, rest[2 + in_dim], hidden))
        b2 = _parse_float_row(path, base + in_dim + 3, rest[3 + in_dim], 1)[0]
        extras["discriminator"] = Discriminator(w1=w1, b1=b1, w2=w2, b2=float(b2))
    return ProjectionModel(W=w, method_tag=tag, seed=seed, extras=extras)


# ---------------------------------------------------------------------------
# Training trace CSV: epoch,d_loss,g_loss,ea_loss,val_metric
# ---------------------------------------------------------------------------

def write_trace(trace: TrainTrace, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "d_loss", "g_loss", "ea_loss", "val_metric"])
    for rec in trace.records:
        writer.writerow([rec.epoch, fmt_float(rec.d_loss), fmt_float(rec.g_loss),
                         fmt_float(rec.ea_loss), fmt_float(rec.val_metric)])
    atomic_write_text(path, buf.getvalue())


def read_trace(path) -> TrainTrace:
    path = Path(path)
    trace = TrainTrace()
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}:1: empty trace file") from None
        if header != ["epoch", "d_loss", "g_loss", "ea_loss", "val_metric"]:
            raise DataFormatError(f"{path}:1: unexpected trace header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataFormatError(f"{path}:{lineno}: expected 5 fields")
            trace.append(EpochRecord(epoch=int(row[0]), d_loss=float(row[1]),
                                     g_loss=float(row[2]), ea_loss=float(row[3]),
                                     val_metric=float(row[4])))
    return trace


# ---------------------------------------------------------------------------
# Metric CSVs.
# ---------------------------------------------------------------------------

def write_metric_rows(rows, path, summary: bool):
    """rows of (metric, direction, k, seed, value) or summaries
    (metric, direction, k, mean, ci95)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if summary:
        writer.writerow(["metric", "direction", "k", "mean", "ci95"])
        for metric, direction, k, mean, ci in rows:
            writer.writerow([metric, direction, "" if k is None else k,
                             fmt_float(mean), fmt_float(ci)])
    else:
        writer.writerow(["metric", "direction", "k", "seed", "value"])
        for metric, direction, k, seed, value in rows:
            writer.writerow([metric, direction, "" if k is None else k,
                             seed, fmt_float(value)])
    atomic_write_text(path, buf.getvalue())


def write_fraction_sweep(rows, path):
    """rows of (fraction, metric, direction, k, mean, ci95), one per summary."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fraction", "metric", "direction", "k", "mean", "ci95"])
    for fraction, metric, direction, k, mean, ci in rows:
        writer.writerow([fmt_float(fraction), metric, direction,
                         "" if k is None else k, fmt_float(mean), fmt_float(ci)])
    atomic_write_text(path, buf.getvalue())


def write_section_sweep(rows, path):
    """rows of (section, metric, direction, k, mean, ci95)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "metric", "direction", "k", "mean", "ci95"])
    for section, metric, direction, k, mean, ci in rows:
        writer.writerow([section, metric, direction,
                         "" if k is None else k, fmt_float(mean), fmt_float(ci)])
    atomic_write_text(path, buf.getvalue())
