"""On-disk formats: waveforms, correlation matrices, models, reports, manifests.

Every float is written with 17 significant digits, which round-trips IEEE
doubles exactly, so equal inputs always produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from .classifier import MlpModel
from .dsp import CorrelationMatrix
from .emission import WaveformRecord

WAVEFORM_MAGIC = b"QRFW"
WAVEFORM_VERSION = 1
_HEADER = struct.Struct("<4sIQ")  # magic, version, sample count (16 bytes)
_META = struct.Struct("<dqq")  # sample_rate_hz, trigger_index, label (-1 = absent)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- waveforms ---------------------------------------------------------------

def waveform_to_text(w: WaveformRecord) -> str:
    rate = int(round(w.sample_rate))
    if rate != w.sample_rate:
        raise ValueError("text waveform format needs an integer sample rate")
    trig = -1 if w.trigger_index is None else w.trigger_index
    label = -1 if w.label is None else w.label
    lines = [f"# sample_rate_hz={rate} trigger_index={trig} label={label}"]
    lines += [fmt(s) for s in w.samples]
    return "\n".join(lines) + "\n"


def waveform_from_text(text: str) -> WaveformRecord:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing waveform header line")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        rate = int(meta["sample_rate_hz"])
        trig = int(meta["trigger_index"])
        label = int(meta["label"])
    except KeyError as exc:
        raise ValueError(f"waveform header lacks {exc.args[0]}") from None
    samples = np.array([float(s) for s in lines[1:] if s.strip()])
    return WaveformRecord(samples, float(rate), None if trig < 0 else trig, None if label < 0 else label)


def waveform_to_bytes(w: WaveformRecord) -> bytes:
    trig = -1 if w.trigger_index is None else w.trigger_index
    label = -1 if w.label is None else w.label
    return (_HEADER.pack(WAVEFORM_MAGIC, WAVEFORM_VERSION, w.samples.size)
            + _META.pack(float(w.sample_rate), trig, label)
            + w.samples.astype("<f8").tobytes())


def waveform_from_bytes(data: bytes) -> WaveformRecord:
    if len(data) < _HEADER.size + _META.size:
        raise ValueError("truncated waveform file")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != WAVEFORM_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != WAVEFORM_VERSION:
        raise ValueError(f"unsupported waveform version {version}")
    rate, trig, label = _META.unpack_from(data, _HEADER.size)
    off = _HEADER.size + _META.size
    if len(data) != off + 8 * count:
        raise ValueError("waveform payload length does not match header count")
    samples = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
    return WaveformRecord(samples, rate, None if trig < 0 else trig, None if label < 0 else label)


def save_waveform(path, w: WaveformRecord, binary: bool | None = None):
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        path.write_bytes(waveform_to_bytes(w))
    else:
        path.write_text(waveform_to_text(w))


def load_waveform(path) -> WaveformRecord:
    data = Path(path).read_bytes()
    if data[:4] == WAVEFORM_MAGIC:
        return waveform_from_bytes(data)
    return waveform_from_text(data.decode())


# --- correlation matrices ----------------------------------------------------

def matrix_to_csv(m: CorrelationMatrix) -> str:
    lines = [f"# kind={m.kind} n={m.n}"]
    lines += [",".join(fmt(v) for v in row) for row in m.values]
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> CorrelationMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if values.shape != (int(meta["n"]), int(meta["n"])):
        raise ValueError(f"matrix body is {values.shape}, header says n={meta['n']}")
    return CorrelationMatrix(values, meta["kind"])


# --- models ------------------------------------------------------------------

def model_to_text(model: MlpModel) -> str:
    out = ["# rfqkd mlp v1",
           "layer_dims=" + ",".join(str(d) for d in model.layer_dims),
           f"hidden_activation={model.hidden_activation}",
           f"output_activation={model.output_activation}"]
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        out.append(f"weights {l} {W.shape[0]}x{W.shape[1]}")
        out += [",".join(fmt(v) for v in row) for row in W]
        out.append(f"biases {l} {b.size}")
        out.append(",".join(fmt(v) for v in b))
    return "\n".join(out) + "\n"


def model_from_text(text: str) -> MlpModel:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# rfqkd mlp"):
        raise ValueError("not an rfqkd model file")
    head = dict(ln.split("=", 1) for ln in lines[1:4])
    dims = tuple(int(d) for d in head["layer_dims"].split(","))
    weights, biases = [], []
    i = 4
    for l in range(len(dims) - 1):
        tag, idx, shape = lines[i].split()
        rows, cols = (int(v) for v in shape.split("x"))
        if tag != "weights" or int(idx) != l:
            raise ValueError(f"expected weights {l}, found {lines[i]!r}")
        W = np.array([[float(v) for v in ln.split(",")] for ln in lines[i + 1:i + 1 + rows]])
        i += 1 + rows
        tag, idx, size = lines[i].split()
        if tag != "biases" or int(idx) != l:
            raise ValueError(f"expected biases {l}, found {lines[i]!r}")
        b = np.array([float(v) for v in lines[i + 1].split(",")])
        i += 2
        weights.append(W.reshape(rows, cols))
        biases.append(b)
    return MlpModel(dims, weights, biases, head["hidden_activation"], head["output_activation"])


def save_model(path, model: MlpModel):
    Path(path).write_text(model_to_text(model))


def load_model(path) -> MlpModel:
    return model_from_text(Path(path).read_text())


# --- reports -----------------------------------------------------------------

def _value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_value(x) for x in v)
    return str(v)


def kv_block(name: str, items: dict) -> str:
    lines = [f"[{name}]"] + [f"{k} = {_value(v)}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def table_block(name: str, columns, rows) -> str:
    lines = [f"[table {name}]", ",".join(columns)]
    lines += [",".join(_value(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n[end]\n"


def parse_report(text: str) -> dict:
    """Blocks by name; key-value blocks map to dicts of strings, tables to row lists."""
    blocks, cur, name, table = {}, None, None, False
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("[table "):
            name, table, cur = line[7:-1], True, []
            blocks[name] = {"columns": None, "rows": cur}
        elif line == "[end]":
            table = False
        elif line.startswith("["):
            name, table, cur = line[1:-1], False, {}
            blocks[name] = cur
        elif table:
            cells = line.split(",")
            if blocks[name]["columns"] is None:
                blocks[name]["columns"] = cells
            else:
                cur.append(cells)
        else:
            k, v = line.split(" = ", 1)
            if k in cur:
                raise ValueError(f"duplicate key {k!r} in block [{name}]")
            cur[k] = v
    return blocks


# --- manifest ----------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config_path, master_seed: int, files) -> Path:
    out_dir = Path(out_dir)
    lines = [f"command = {command}", f"config = {config_path or '-'}",
             f"master_seed = {master_seed}", f"output_dir = {out_dir}"]
    for f in sorted({Path(f) for f in files}):
        rel = os.path.relpath(f, out_dir)
        lines.append(f"sha256 {sha256_file(f)}  {rel}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path
