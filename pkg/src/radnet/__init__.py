"""Radar object detection and 3D estimation toolkit.

End-to-end pipeline: multi-receiver FMCW scene simulation with camera-model
annotation, range-doppler preprocessing with per-cell phase normalization,
a self-contained trainable convolutional network with three output heads,
and detection/evaluation tooling.

Thread control: BLAS threading is pinned before numpy is first imported.
Set RADNET_THREADS (default "1") to change it; single-threaded mode is both
the deterministic and, on small kernels, usually the fastest configuration.
"""

import os

_threads = os.environ.get("RADNET_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", _threads)
os.environ.setdefault("OMP_NUM_THREADS", _threads)

__version__ = "0.1.0"
