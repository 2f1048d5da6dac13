"""Training loop: sample pairing, momentum SGD, per-epoch loss logging.

Training samples pair each foreground frame with a random background frame;
a configurable share of extra pure-background samples (empty targets) is
mixed in so the network also learns what absence looks like.  Optimization
is plain stochastic gradient descent with classic momentum.  Runs are fully
deterministic for a fixed seed in single-threaded mode.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .losses import LossBreakdown, total_loss
from .network import NetworkSpec, init_params, unet_backward, unet_forward, zero_like_params
from .preprocess import SampleSet

_TAG_PAIRING = 0x9A12
_TAG_SHUFFLE = 0x51F0

EVAL_BATCH = 32


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.03
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    loss_weights: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "loss_weights": list(self.loss_weights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "loss_weights" in d:
            d["loss_weights"] = tuple(d["loss_weights"])
        return cls(**d)


def sgd_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    velocity: Dict[str, np.ndarray],
    learning_rate: float,
    momentum: float,
) -> None:
    """Classic momentum update, in place: v <- mu*v - lr*g; p <- p + v."""
    for key in params:
        v = velocity[key]
        v *= momentum
        v -= learning_rate * grads[key]
        params[key] += v


def pair_samples(fg_count: int, bg_count: int, seed: int, bg_ratio: float = 0.25) -> list:
    """Sample pairs (fg_index, bg_index); deterministic given the seed.

    One pair per foreground frame, background drawn uniformly with
    replacement.  round(bg_ratio * fg_count) additional pure-background pairs
    are appended; these encode the substitute frame in the foreground slot as
    fg_index = -1 - frame_index (two distinct background frames per pair).
    """
    if bg_count < 1:
        raise ValueError("need at least one background frame")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _TAG_PAIRING]))
    pairs = [(i, int(rng.integers(bg_count))) for i in range(fg_count)]
    for _ in range(int(round(bg_ratio * fg_count))):
        a = int(rng.integers(bg_count))
        b = int(rng.integers(bg_count))
        while b == a and bg_count > 1:
            b = int(rng.integers(bg_count))
        pairs.append((-1 - a, b))
    return pairs


def _targets_of(data: SampleSet, idx: np.ndarray):
    tgt_p = data.presence[idx][:, None]
    return (tgt_p, data.x_map[idx][:, None], data.y_map[idx][:, None], tgt_p)


def evaluate_loss(
    params: Dict[str, np.ndarray],
    spec: NetworkSpec,
    data: SampleSet,
    weights=(1.0, 1.0, 1.0),
    batch_size: int = EVAL_BATCH,
) -> LossBreakdown:
    """Forward-only loss over a sample set, averaged per sample."""
    n = len(data)
    sums = np.zeros(3)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        outputs, _ = unet_forward(params, spec, data.tensors[idx], keep_cache=False)
        part = total_loss(outputs, _targets_of(data, idx), weights)
        sums += np.array([part.seg, part.mse_x, part.mse_y]) * len(idx)
    seg, mx, my = sums / n
    w = weights
    return LossBreakdown(seg=seg, mse_x=mx, mse_y=my, total=w[0] * seg + w[1] * mx + w[2] * my)


@dataclass
class TrainResult:
    params: Dict[str, np.ndarray]  # best-validation parameters
    best_epoch: int
    final_params: Dict[str, np.ndarray]
    velocity: Dict[str, np.ndarray]
    history: List[dict] = field(default_factory=list)


def train(
    train_data: SampleSet,
    val_data: Optional[SampleSet],
    spec: NetworkSpec,
    config: TrainConfig,
    params: Optional[Dict[str, np.ndarray]] = None,
    log_path=None,
    progress: bool = False,
) -> TrainResult:
    """Run the full training protocol and keep the best-validation parameters.

    Every epoch shuffles the training set, walks it in mini-batches, and then
    measures the validation loss; one JSON record per epoch goes to log_path
    when given.  Aborts with TrainingDiverged on a non-finite loss.
    """
    if params is None:
        params = init_params(spec, config.seed)
    velocity = zero_like_params(params)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TAG_SHUFFLE]))

    best = copy.deepcopy(params)
    best_epoch = 0
    best_val = np.inf
    history: List[dict] = []
    log_file = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(len(train_data))
            sums = np.zeros(3)
            for start in range(0, len(order), config.batch_size):
                idx = order[start : start + config.batch_size]
                outputs, cache = unet_forward(params, spec, train_data.tensors[idx])
                breakdown, grad_outs = total_loss(
                    outputs, _targets_of(train_data, idx), config.loss_weights, with_grad=True
                )
                if not np.isfinite(breakdown.total):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                grads = unet_backward(params, spec, cache, grad_outs)
                sgd_step(params, grads, velocity, config.learning_rate, config.momentum)
                sums += np.array([breakdown.seg, breakdown.mse_x, breakdown.mse_y]) * len(idx)
            seg_t, mx_t, my_t = sums / len(train_data)

            if val_data is not None and len(val_data):
                val = evaluate_loss(params, spec, val_data, config.loss_weights)
            else:
                w = config.loss_weights
                val = LossBreakdown(
                    seg=seg_t, mse_x=mx_t, mse_y=my_t,
                    total=w[0] * seg_t + w[1] * mx_t + w[2] * my_t,
                )
            if val.total < best_val:
                best_val = val.total
                best = copy.deepcopy(params)
                best_epoch = epoch

            record = {
                "epoch": epoch,
                "seg_train": seg_t,
                "seg_val": val.seg,
                "msex_train": mx_t,
                "msex_val": val.mse_x,
                "msey_train": my_t,
                "msey_val": val.mse_y,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
            history.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if progress:
                print(
                    f"epoch {epoch}/{config.epochs} seg {seg_t:.4f}/{val.seg:.4f} "
                    f"msex {mx_t:.2e} msey {my_t:.2e}",
                    flush=True,
                )
    finally:
        if log_file is not None:
            log_file.close()
    return TrainResult(
        params=best, best_epoch=best_epoch, final_params=params, velocity=velocity, history=history
    )
