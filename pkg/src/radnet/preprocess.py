"""Range-doppler preprocessing: 2D FFT, per-cell phase normalization, tensors.

The preprocessing chain turns a raw frame into N complex range-doppler
spectra (one per receiver), cancels the range-induced common phase of every
cell by rotating its N-receiver vector so the first receiver becomes a
nonnegative real, and stacks a foreground/background pair into the real
network input tensor.  Phase normalization is a pure per-cell rotation: it
preserves all magnitudes and all inter-receiver phase differences, which is
where the direction information lives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scene import AnnotatedRecording, FrameTruth, RadarFrame

REFERENCE_EPS_REL = 1e-12  # cells with |reference| below this * max magnitude stay unrotated
SCALE_FLOOR = 1e-12


@dataclass
class RangeDopplerCube:
    """Complex (K, M, N) spectra, one K x M range-doppler map per receiver."""

    spectra: np.ndarray
    normalized: bool = False


@dataclass
class InputTensor:
    """Real network input, (4N, K, M): fg re/im per receiver, then bg re/im."""

    values: np.ndarray
    scale_factor: float


@dataclass
class TargetMaps:
    """Training targets: binary presence map and coordinate maps on its support."""

    presence: np.ndarray  # (K, M) in {0, 1}
    x_map: np.ndarray  # (K, M), x_im on the support, 0 elsewhere
    y_map: np.ndarray
    mask: np.ndarray  # same support as presence


def hann2d(k: int, m: int) -> np.ndarray:
    return np.outer(np.hanning(k), np.hanning(m))


def range_doppler(frame, window: str = "none") -> RangeDopplerCube:
    """2D FFT over (fast time, slow time) per receiver, doppler axis centered.

    Accepts a RadarFrame or a bare complex (K, M, N) array.  The doppler axis
    is fft-shifted so zero radial velocity sits at row M/2 and static clutter
    forms a fixed center stripe.  No spectral normalization is applied.
    """
    samples = frame.samples if isinstance(frame, RadarFrame) else np.asarray(frame)
    if samples.ndim != 3:
        raise ValueError("expected samples with shape (K, M, N)")
    if not np.isfinite(samples).all():
        raise ValueError("non-finite samples")
    if window == "hann":
        samples = samples * hann2d(samples.shape[0], samples.shape[1])[:, :, None]
    elif window != "none":
        raise ValueError(f"unknown window: {window}")
    spectra = np.fft.fft2(samples, axes=(0, 1))
    spectra = np.fft.fftshift(spectra, axes=1)
    return RangeDopplerCube(spectra=spectra, normalized=False)


def phase_normalize(cube: RangeDopplerCube) -> RangeDopplerCube:
    """Rotate each cell's receiver vector so receiver 1 has zero phase.

    Cells whose reference magnitude falls below REFERENCE_EPS_REL times the
    cube's maximum magnitude carry no usable phase reference and pass through
    unchanged.  Magnitudes are preserved exactly (the op is a unit rotation).
    """
    if cube.normalized:
        raise ValueError("cube is already phase-normalized")
    spectra = cube.spectra
    ref = spectra[:, :, 0]
    mag = np.abs(ref)
    eps = REFERENCE_EPS_REL * float(np.abs(spectra).max(initial=0.0))
    ok = mag >= eps if eps > 0.0 else mag > 0.0
    rot = np.where(ok, np.conj(ref) / np.where(ok, mag, 1.0), 1.0)
    out = spectra * rot[:, :, None]
    return RangeDopplerCube(spectra=out, normalized=True)


def assemble_input(fg: RangeDopplerCube, bg: RangeDopplerCube) -> InputTensor:
    """Stack a foreground/background cube pair into the (4N, K, M) input.

    Channel order: [fg rx1 re, fg rx1 im, ..., fg rxN re, fg rxN im,
    bg rx1 re, ...].  All channels are divided by the foreground's maximum
    magnitude (floored at SCALE_FLOOR) so values stay within [-1, 1].
    """
    if fg.spectra.shape != bg.spectra.shape:
        raise ValueError("foreground/background dimension mismatch")
    if fg.normalized != bg.normalized:
        raise ValueError("foreground and background must have the same normalization state")
    k, m, n = fg.spectra.shape
    scale = max(float(np.abs(fg.spectra).max(initial=0.0)), SCALE_FLOOR)
    values = np.empty((4 * n, k, m), dtype=np.float32)
    for cube, base in ((fg, 0), (bg, 2 * n)):
        scaled = cube.spectra / scale
        values[base + 0 : base + 2 * n : 2] = scaled.real.transpose(2, 0, 1)
        values[base + 1 : base + 2 * n : 2] = scaled.imag.transpose(2, 0, 1)
    return InputTensor(values=values, scale_factor=scale)


def make_targets(truth: Optional[FrameTruth], dims: tuple, disk_radius: int = 1) -> TargetMaps:
    """Ground-truth maps: a Chebyshev disk of ones around the true cell.

    The disk (default 3x3) reflects that a physical object occupies several
    neighbouring range-doppler cells; it is clipped at the map borders.  The
    coordinate maps carry the object's image coordinates on the disk and are
    zero elsewhere.  A missing/absent truth yields all-zero maps.
    """
    k_dim, m_dim = dims
    presence = np.zeros((k_dim, m_dim), dtype=np.float32)
    x_map = np.zeros((k_dim, m_dim), dtype=np.float32)
    y_map = np.zeros((k_dim, m_dim), dtype=np.float32)
    if truth is not None and truth.present:
        k, m = truth.cell
        if not (0 <= k < k_dim and 0 <= m < m_dim):
            raise ValueError(f"true cell {truth.cell} outside {dims}")
        r = disk_radius
        sl = (slice(max(0, k - r), min(k_dim, k + r + 1)), slice(max(0, m - r), min(m_dim, m + r + 1)))
        presence[sl] = 1.0
        x_map[sl] = truth.x_im
        y_map[sl] = truth.y_im
    return TargetMaps(presence=presence, x_map=x_map, y_map=y_map, mask=presence.copy())


@dataclass
class SampleSet:
    """A preprocessed dataset held in memory (what RDT1 files store).

    tensors: (S, C, K, M) float32; presence/x/y maps: (S, K, M) float32;
    present: (S,) uint8; meta: (S, 6) float32 rows (R, v, x_im, y_im, k, m).
    """

    tensors: np.ndarray
    presence: np.ndarray
    x_map: np.ndarray
    y_map: np.ndarray
    present: np.ndarray
    meta: np.ndarray

    def __len__(self) -> int:
        return len(self.tensors)


def build_dataset(
    fg_recording: AnnotatedRecording,
    bg_recording: AnnotatedRecording,
    seed: int,
    window: str = "none",
    normalize: bool = True,
    bg_ratio: float = 0.25,
    disk_radius: int = 1,
) -> SampleSet:
    """Pair foreground frames with random background frames into samples.

    Every foreground frame yields one sample; an extra bg_ratio fraction of
    pure-background samples (two distinct background frames, empty targets)
    teaches the network what absence looks like.  Deterministic given seed.
    """
    from .training import pair_samples  # local import keeps module layering flat

    def prep(frames):
        cubes = []
        for f in frames:
            cube = range_doppler(f, window=window)
            cubes.append(phase_normalize(cube) if normalize else cube)
        return cubes

    fg_cubes = prep(fg_recording.foreground)
    bg_cubes = prep(bg_recording.background)
    if not bg_cubes:
        raise ValueError("background recording has no background frames")

    pairs = pair_samples(len(fg_cubes), len(bg_cubes), seed, bg_ratio=bg_ratio)
    dims = bg_cubes[0].spectra.shape[:2]
    n_chan = 4 * bg_cubes[0].spectra.shape[2]

    count = len(pairs)
    out = SampleSet(
        tensors=np.empty((count, n_chan) + dims, dtype=np.float32),
        presence=np.empty((count,) + dims, dtype=np.float32),
        x_map=np.empty((count,) + dims, dtype=np.float32),
        y_map=np.empty((count,) + dims, dtype=np.float32),
        present=np.zeros(count, dtype=np.uint8),
        meta=np.zeros((count, 6), dtype=np.float32),
    )
    for i, (fg_idx, bg_idx) in enumerate(pairs):
        if fg_idx >= 0:
            fg_cube, truth = fg_cubes[fg_idx], fg_recording.truth[fg_idx]
        else:
            fg_cube, truth = bg_cubes[-1 - fg_idx], None
        tensor = assemble_input(fg_cube, bg_cubes[bg_idx])
        targets = make_targets(truth, dims, disk_radius=disk_radius)
        out.tensors[i] = tensor.values
        out.presence[i] = targets.presence
        out.x_map[i] = targets.x_map
        out.y_map[i] = targets.y_map
        if truth is not None:
            out.present[i] = 1
            out.meta[i] = (truth.range_m, truth.velocity, truth.x_im, truth.y_im) + truth.cell
    return out
