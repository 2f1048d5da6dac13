"""Turn network output maps into discrete detections and score them.

A detection is the largest 4-connected component of presence cells above the
threshold.  The system tracks a single object, so at most one detection per
frame is emitted.  Coordinate estimates pool the coordinate maps over the
component, weighted by per-cell confidence; the component's weighted (k, m)
centroid maps back to physical range and radial velocity via the standard
bin spacings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .scene import CameraModel, RadarConfig, backproject


@dataclass
class Detection:
    cells: list  # [(k, m), ...] of the detected component
    box: tuple  # (k_min, k_max, m_min, m_max), inclusive
    confidence: float  # mean presence over the component
    centroid: tuple  # confidence-weighted (k, m), fractional
    range_est: float
    velocity_est: float
    x_est: float
    y_est: float

    def to_dict(self) -> dict:
        return {
            "cells": [[int(k), int(m)] for k, m in self.cells],
            "box": [int(v) for v in self.box],
            "confidence": self.confidence,
            "centroid": [self.centroid[0], self.centroid[1]],
            "range_est": self.range_est,
            "velocity_est": self.velocity_est,
            "x_est": self.x_est,
            "y_est": self.y_est,
        }


def cell_to_range_velocity(config: RadarConfig, k: float, m: float) -> tuple:
    """Map (possibly fractional) spectrum cell indices to range and velocity."""
    r = k * config.range_resolution
    v = (m - config.chirps_per_frame / 2.0) * config.velocity_resolution
    return r, v


def extract_detections(
    presence: np.ndarray,
    x_map: np.ndarray,
    y_map: np.ndarray,
    threshold: float = 0.5,
    min_cells: int = 1,
    config: Optional[RadarConfig] = None,
) -> List[Detection]:
    """At most one Detection from a frame's output maps.

    Cells with presence > threshold are grouped into 4-connected components;
    the largest one (ties: smallest k_min, then m_min) is emitted if it has
    at least min_cells cells.  Range/velocity estimates are filled in when a
    RadarConfig is supplied.
    """
    if presence.shape != x_map.shape or presence.shape != y_map.shape:
        raise ValueError("map shape mismatch")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    hot = presence > threshold
    if not hot.any():
        return []
    labels, n_comp = ndimage.label(hot)  # default structure = 4-connectivity
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n_comp + 1))
    best_label, best_key = 0, None
    for lab in range(1, n_comp + 1):
        ks, ms = np.nonzero(labels == lab)
        key = (-int(sizes[lab - 1]), int(ks.min()), int(ms.min()))
        if best_key is None or key < best_key:
            best_key, best_label = key, lab
    ks, ms = np.nonzero(labels == best_label)
    if len(ks) < min_cells:
        return []

    weights = presence[ks, ms].astype(np.float64)
    wsum = weights.sum()
    k_c = float((weights * ks).sum() / wsum)
    m_c = float((weights * ms).sum() / wsum)
    x_est = float((weights * x_map[ks, ms]).sum() / wsum)
    y_est = float((weights * y_map[ks, ms]).sum() / wsum)
    if config is not None:
        range_est, velocity_est = cell_to_range_velocity(config, k_c, m_c)
    else:
        range_est, velocity_est = float("nan"), float("nan")
    return [
        Detection(
            cells=sorted(zip(ks.tolist(), ms.tolist())),
            box=(int(ks.min()), int(ks.max()), int(ms.min()), int(ms.max())),
            confidence=float(weights.mean()),
            centroid=(k_c, m_c),
            range_est=range_est,
            velocity_est=velocity_est,
            x_est=x_est,
            y_est=y_est,
        )
    ]


@dataclass
class EvalReport:
    """Aggregate detection quality over a set of frames."""

    frames: int = 0
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    true_negatives: int = 0
    precision: float = 1.0
    recall: float = 1.0
    mean_iou: float = 0.0
    mse_x: float = 0.0
    mse_y: float = 0.0
    mean_abs_range_err: float = 0.0
    mean_abs_velocity_err: float = 0.0
    mean_abs_azimuth_err: float = 0.0
    mean_abs_elevation_err: float = 0.0

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "true_negatives": self.true_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "mean_iou": self.mean_iou,
            "mse_x": self.mse_x,
            "mse_y": self.mse_y,
            "mean_abs_range_err": self.mean_abs_range_err,
            "mean_abs_velocity_err": self.mean_abs_velocity_err,
            "mean_abs_azimuth_err": self.mean_abs_azimuth_err,
            "mean_abs_elevation_err": self.mean_abs_elevation_err,
        }


def _iou(cells, mask: np.ndarray) -> float:
    det = np.zeros_like(mask, dtype=bool)
    for k, m in cells:
        det[k, m] = True
    truth = mask > 0.5
    union = np.logical_or(det, truth).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(det, truth).sum() / union)


def evaluate(
    detections: list,
    present: np.ndarray,
    truth_masks: np.ndarray,
    meta: np.ndarray,
    config: Optional[RadarConfig] = None,
    camera: Optional[CameraModel] = None,
    iou_threshold: float = 0.1,
) -> EvalReport:
    """Score per-frame detections against ground truth.

    detections: list (per frame) of Detection lists; present: (S,) flags;
    truth_masks: (S, K, M) ground-truth presence supports; meta: (S, 6) rows
    (R, v, x_im, y_im, k, m).  A detection on an object frame counts as a
    true positive when its cell IoU with the truth disk reaches the
    threshold; otherwise it is both a false positive and a missed object.
    Precision/recall fall back to 1 when undefined.
    """
    report = EvalReport(frames=len(detections))
    ious, sq_x, sq_y, range_err, vel_err, az_err, el_err = [], [], [], [], [], [], []
    for i, dets in enumerate(detections):
        det = dets[0] if dets else None
        if not present[i]:
            if det is None:
                report.true_negatives += 1
            else:
                report.false_positives += 1
            continue
        if det is None:
            report.false_negatives += 1
            continue
        iou = _iou(det.cells, truth_masks[i])
        if iou < iou_threshold:
            report.false_positives += 1
            report.false_negatives += 1
            continue
        report.true_positives += 1
        ious.append(iou)
        r_true, v_true, x_true, y_true = (float(v) for v in meta[i, :4])
        sq_x.append((det.x_est - x_true) ** 2)
        sq_y.append((det.y_est - y_true) ** 2)
        if config is not None:
            range_err.append(abs(det.range_est - r_true))
            vel_err.append(abs(det.velocity_est - v_true))
        if camera is not None:
            az_e, el_e = backproject(camera, det.x_est, det.y_est)
            az_t, el_t = backproject(camera, x_true, y_true)
            az_err.append(abs(az_e - az_t))
            el_err.append(abs(el_e - el_t))

    tp, fp, fn = report.true_positives, report.false_positives, report.false_negatives
    report.precision = tp / (tp + fp) if tp + fp else 1.0
    report.recall = tp / (tp + fn) if tp + fn else 1.0
    report.mean_iou = float(np.mean(ious)) if ious else 0.0
    report.mse_x = float(np.mean(sq_x)) if sq_x else 0.0
    report.mse_y = float(np.mean(sq_y)) if sq_y else 0.0
    report.mean_abs_range_err = float(np.mean(range_err)) if range_err else 0.0
    report.mean_abs_velocity_err = float(np.mean(vel_err)) if vel_err else 0.0
    report.mean_abs_azimuth_err = float(np.mean(az_err)) if az_err else 0.0
    report.mean_abs_elevation_err = float(np.mean(el_err)) if el_err else 0.0
    return report
