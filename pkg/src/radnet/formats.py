"""Binary artifact formats: recordings, preprocessed datasets, checkpoints.

All three formats are little-endian with a 4-byte magic and a u32 version.

RDR1 (recording): header u32 K, M, N, n_background, n_foreground; payload is
every frame (background first) as float32 interleaved re/im in C order
(K, M, N).  A JSON sidecar at <path>.json carries the radar/camera echo and
the per-foreground-frame ground truth.

RDT1 (dataset): header u32 C, K, M, n_samples; each sample is the float32
input tensor (C, K, M), the three float32 target maps (K, M), a u8 present
flag, and six float32 metadata values (R, v, x_im, y_im, k, m).  A JSON
sidecar carries the radar/camera echo and the preprocessing settings.

RDW1 (checkpoint): a JSON network-spec echo, then one shape-headed float32
blob per parameter in layer-table order, then an optional momentum section
of identical layout.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .network import NetworkSpec
from .preprocess import SampleSet
from .scene import AnnotatedRecording, CameraModel, FrameTruth, RadarConfig, RadarFrame

_VERSION = 1


class FormatError(ValueError):
    """Malformed or mismatched artifact file."""


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError("unexpected end of file")
    return data


def _check_magic(f, magic: bytes):
    got = _read_exact(f, 4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(f, 4))
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


# ---------------------------------------------------------------------------
# RDR1 recordings
# ---------------------------------------------------------------------------

def write_recording(path, recording: AnnotatedRecording) -> None:
    path = Path(path)
    cfg = recording.config
    k, m, n = cfg.samples_per_chirp, cfg.chirps_per_frame, cfg.num_receivers
    with open(path, "wb") as f:
        f.write(b"RDR1")
        f.write(
            struct.pack(
                "<IIIIII", _VERSION, k, m, n, len(recording.background), len(recording.foreground)
            )
        )
        for frame in recording.background + recording.foreground:
            if frame.samples.shape != (k, m, n):
                raise FormatError("frame dimensions do not match the config")
            interleaved = np.empty((k, m, n, 2), dtype="<f4")
            interleaved[..., 0] = frame.samples.real
            interleaved[..., 1] = frame.samples.imag
            interleaved.tofile(f)
    sidecar = {
        "config": cfg.to_dict(),
        "camera": recording.camera.to_dict(),
        "excluded_frames": recording.excluded_frames,
        "truth": [t.to_dict() for t in recording.truth],
    }
    sidecar_path(path).write_text(json.dumps(sidecar, sort_keys=True, indent=1))


def read_recording(path) -> AnnotatedRecording:
    path = Path(path)
    sidecar = json.loads(sidecar_path(path).read_text())
    config = RadarConfig.from_dict(sidecar["config"])
    camera = CameraModel.from_dict(sidecar["camera"])
    with open(path, "rb") as f:
        _check_magic(f, b"RDR1")
        k, m, n, n_bg, n_fg = struct.unpack("<IIIII", _read_exact(f, 20))
        if (k, m, n) != (
            config.samples_per_chirp,
            config.chirps_per_frame,
            config.num_receivers,
        ):
            raise FormatError("header dimensions disagree with the sidecar config")
        per_frame = k * m * n * 2
        raw = np.fromfile(f, dtype="<f4", count=(n_bg + n_fg) * per_frame)
        if raw.size != (n_bg + n_fg) * per_frame:
            raise FormatError("truncated frame payload")
    raw = raw.reshape(n_bg + n_fg, k, m, n, 2)
    frames = raw[..., 0].astype(np.float32) + 1j * raw[..., 1].astype(np.float32)
    truth = [FrameTruth.from_dict(t) for t in sidecar["truth"]]
    if len(truth) != n_fg:
        raise FormatError("sidecar truth count disagrees with the foreground count")
    return AnnotatedRecording(
        config=config,
        camera=camera,
        background=[RadarFrame(samples=frames[i], frame_id=i) for i in range(n_bg)],
        foreground=[RadarFrame(samples=frames[n_bg + i], frame_id=i) for i in range(n_fg)],
        truth=truth,
        excluded_frames=int(sidecar.get("excluded_frames", 0)),
    )


# ---------------------------------------------------------------------------
# RDT1 datasets
# ---------------------------------------------------------------------------

def _sample_dtype(c: int, k: int, m: int) -> np.dtype:
    return np.dtype(
        [
            ("tensor", "<f4", (c, k, m)),
            ("presence", "<f4", (k, m)),
            ("x_map", "<f4", (k, m)),
            ("y_map", "<f4", (k, m)),
            ("present", "u1"),
            ("meta", "<f4", (6,)),
        ]
    )


def write_dataset(path, data: SampleSet, sidecar_info: Optional[dict] = None) -> None:
    path = Path(path)
    count, c, k, m = data.tensors.shape
    rec = np.zeros(count, dtype=_sample_dtype(c, k, m))
    rec["tensor"] = data.tensors
    rec["presence"] = data.presence
    rec["x_map"] = data.x_map
    rec["y_map"] = data.y_map
    rec["present"] = data.present
    rec["meta"] = data.meta
    with open(path, "wb") as f:
        f.write(b"RDT1")
        f.write(struct.pack("<IIIII", _VERSION, c, k, m, count))
        rec.tofile(f)
    if sidecar_info is not None:
        sidecar_path(path).write_text(json.dumps(sidecar_info, sort_keys=True, indent=1))


def read_dataset(path) -> SampleSet:
    path = Path(path)
    with open(path, "rb") as f:
        _check_magic(f, b"RDT1")
        c, k, m, count = struct.unpack("<IIII", _read_exact(f, 16))
        rec = np.fromfile(f, dtype=_sample_dtype(c, k, m), count=count)
        if rec.size != count:
            raise FormatError("truncated sample payload")
    return SampleSet(
        tensors=rec["tensor"].copy(),
        presence=rec["presence"].copy(),
        x_map=rec["x_map"].copy(),
        y_map=rec["y_map"].copy(),
        present=rec["present"].copy(),
        meta=rec["meta"].copy(),
    )


def read_dataset_sidecar(path) -> dict:
    return json.loads(sidecar_path(path).read_text())


# ---------------------------------------------------------------------------
# RDW1 checkpoints
# ---------------------------------------------------------------------------

def _write_blobs(f, spec: NetworkSpec, blobs: Dict[str, np.ndarray]) -> None:
    entries = []
    for name, _, _ in spec.layer_table():
        entries.append(f"{name}.w")
        entries.append(f"{name}.b")
    if set(entries) != set(blobs):
        raise FormatError("parameter keys do not match the network spec")
    f.write(struct.pack("<I", len(entries)))
    for key in entries:
        arr = np.ascontiguousarray(blobs[key], dtype="<f4")
        encoded = key.encode()
        f.write(struct.pack("<H", len(encoded)))
        f.write(encoded)
        f.write(struct.pack("<B", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        arr.tofile(f)


def _read_blobs(f) -> Dict[str, np.ndarray]:
    (n_entries,) = struct.unpack("<I", _read_exact(f, 4))
    blobs: Dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack("<H", _read_exact(f, 2))
        name = _read_exact(f, name_len).decode()
        (ndim,) = struct.unpack("<B", _read_exact(f, 1))
        shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.fromfile(f, dtype="<f4", count=count)
        if arr.size != count:
            raise FormatError("truncated parameter blob")
        blobs[name] = arr.reshape(shape)
    return blobs


def write_checkpoint(
    path,
    spec: NetworkSpec,
    params: Dict[str, np.ndarray],
    velocity: Optional[Dict[str, np.ndarray]] = None,
) -> None:
    path = Path(path)
    spec_json = json.dumps(spec.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(b"RDW1")
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(spec_json)))
        f.write(spec_json)
        _write_blobs(f, spec, params)
        if velocity is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            _write_blobs(f, spec, velocity)


def read_checkpoint(path) -> Tuple[NetworkSpec, Dict[str, np.ndarray], Optional[Dict[str, np.ndarray]]]:
    path = Path(path)
    with open(path, "rb") as f:
        _check_magic(f, b"RDW1")
        (json_len,) = struct.unpack("<I", _read_exact(f, 4))
        spec = NetworkSpec.from_dict(json.loads(_read_exact(f, json_len).decode()))
        params = _read_blobs(f)
        (has_velocity,) = struct.unpack("<B", _read_exact(f, 1))
        velocity = _read_blobs(f) if has_velocity else None
    expected = {f"{n}.{s}" for n, _, _ in spec.layer_table() for s in ("w", "b")}
    if set(params) != expected:
        raise FormatError("checkpoint parameters do not match its spec echo")
    return spec, params, velocity
