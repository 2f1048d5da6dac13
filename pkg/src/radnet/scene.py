"""Multi-receiver FMCW scene simulation with camera-model annotation.

Synthesizes dechirped (beat-signal) baseband frames for scenes containing at
most one moving point object plus static clutter, and annotates every object
frame with its true range-doppler cell and its normalized image coordinates
in a pinhole camera rigidly mounted on the radar.

Signal model, per receiver n, chirp m, fast-time sample k:

    s[k, m, n] = sum_sources a * exp(j * (2*pi*(f_b*k/K_rate + f_d*m*T) + psi_n))

with beat frequency f_b = 2*R*slope/c (slope = bandwidth/T), doppler shift
f_d = 2*v*f_c/c, fast-time sample rate K_rate = K/T and per-receiver steering
phase psi_n from the array geometry.  Range walk within one frame is
neglected.  Clutter scatterers are static (f_d = 0) and shared across all
frames of a recording.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# seed-stream tags so the different random draws never collide
_TAG_CLUTTER = 0xC1
_TAG_NOISE = 0x0F
_TAG_TRAJECTORY = 0x7A


class OutOfFrameError(ValueError):
    """Object projects outside the camera image; the frame cannot be annotated."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def default_receiver_grid(carrier_freq: float, cols: int = 4, rows: int = 2) -> tuple:
    """Half-wavelength (horizontal, vertical) receiver grid, receiver 1 at the origin."""
    half = SPEED_OF_LIGHT / carrier_freq / 2.0
    return tuple((c * half, r * half) for r in range(rows) for c in range(cols))


@dataclass(frozen=True)
class RadarConfig:
    """Static radar parameters for one simulated device.

    samples_per_chirp (fast time) and chirps_per_frame (slow time) must be
    powers of two >= 16: the downstream network halves the spatial dims four
    times.  receiver_positions are (horizontal, vertical) offsets in meters;
    receiver 1 sits at the origin and acts as the phase reference.
    """

    carrier_freq: float = 77e9
    bandwidth: float = 150e6
    chirp_duration: float = 128e-6
    samples_per_chirp: int = 64
    chirps_per_frame: int = 64
    num_receivers: int = 8
    receiver_positions: tuple = ()
    noise_sigma: float = 0.02
    rng_seed: int = 0

    def __post_init__(self):
        if not self.receiver_positions:
            object.__setattr__(
                self, "receiver_positions", default_receiver_grid(self.carrier_freq)
            )
        pos = tuple(tuple(float(x) for x in p) for p in self.receiver_positions)
        object.__setattr__(self, "receiver_positions", pos)
        k, m = self.samples_per_chirp, self.chirps_per_frame
        if not (_is_pow2(k) and k >= 16 and _is_pow2(m) and m >= 16):
            raise ValueError("samples_per_chirp and chirps_per_frame must be powers of two >= 16")
        if self.num_receivers < 2:
            raise ValueError("need at least two receivers")
        if len(pos) != self.num_receivers:
            raise ValueError("receiver_positions length must equal num_receivers")
        if pos[0] != (0.0, 0.0):
            raise ValueError("receiver 1 must sit at the origin (phase reference)")
        if self.bandwidth <= 0 or self.chirp_duration <= 0:
            raise ValueError("bandwidth and chirp_duration must be positive")
        if self.carrier_freq <= self.bandwidth:
            raise ValueError("carrier_freq must exceed bandwidth")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def range_resolution(self) -> float:
        """Range bin width c/(2B) in meters."""
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def velocity_resolution(self) -> float:
        """Doppler bin width lambda/(2*M*T) in m/s."""
        return self.wavelength / (2.0 * self.chirps_per_frame * self.chirp_duration)

    @property
    def max_range(self) -> float:
        """Unambiguous range K*c/(2B)."""
        return self.samples_per_chirp * self.range_resolution

    @property
    def max_velocity(self) -> float:
        """Unambiguous radial speed lambda/(4T); bins cover (-max, +max)."""
        return self.wavelength / (4.0 * self.chirp_duration)

    def to_dict(self) -> dict:
        return {
            "carrier_freq": self.carrier_freq,
            "bandwidth": self.bandwidth,
            "chirp_duration": self.chirp_duration,
            "samples_per_chirp": self.samples_per_chirp,
            "chirps_per_frame": self.chirps_per_frame,
            "num_receivers": self.num_receivers,
            "receiver_positions": [list(p) for p in self.receiver_positions],
            "noise_sigma": self.noise_sigma,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        d = dict(d)
        if "receiver_positions" in d:
            d["receiver_positions"] = tuple(tuple(p) for p in d["receiver_positions"])
        return cls(**d)


@dataclass(frozen=True)
class ObjectState:
    """Point object: range (m), radial velocity (m/s), azimuth/elevation (rad), reflectivity."""

    range_m: float
    velocity: float
    azimuth: float
    elevation: float
    amplitude: float = 1.0

    def validate(self, config: RadarConfig) -> None:
        if not 0.0 < self.range_m < config.max_range:
            raise ValueError(f"range {self.range_m} outside (0, {config.max_range})")
        if abs(self.velocity) >= config.max_velocity:
            raise ValueError(f"|velocity| {abs(self.velocity)} >= {config.max_velocity}")
        if abs(self.azimuth) >= math.pi / 2 or abs(self.elevation) >= math.pi / 2:
            raise ValueError("azimuth/elevation must lie in the front field (|angle| < pi/2)")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera in normalized image coordinates.

    Projection is strictly monotone in azimuth (x) and elevation (y), so the
    image position determines the direction uniquely inside the field of view.
    """

    focal_x: float = 0.5
    focal_y: float = 0.5
    center_x: float = 0.5
    center_y: float = 0.5

    def to_dict(self) -> dict:
        return {
            "focal_x": self.focal_x,
            "focal_y": self.focal_y,
            "center_x": self.center_x,
            "center_y": self.center_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(**d)


@dataclass
class ClutterModel:
    """Static environment scatterers (zero radial velocity), fixed for a whole recording."""

    ranges: np.ndarray
    amplitudes: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray

    @property
    def num_scatterers(self) -> int:
        return len(self.ranges)

    @classmethod
    def empty(cls) -> "ClutterModel":
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def sample(cls, spec: "ClutterSpec", seed) -> "ClutterModel":
        """Draw a scatterer population; deterministic given the seed."""
        rng = np.random.default_rng(seed)
        n = spec.num_scatterers
        ranges = rng.uniform(spec.range_min, spec.range_max, n)
        # reflectivity follows the same inverse-square law as objects, with a
        # lognormal spread so a few returns dominate, like a real backdrop
        amps = spec.amplitude * (spec.reference_range / ranges) ** 2
        amps = amps * np.exp(rng.normal(0.0, spec.amplitude_spread, n))
        az = rng.uniform(-spec.max_azimuth, spec.max_azimuth, n)
        el = rng.uniform(spec.min_elevation, spec.max_elevation, n)
        return cls(ranges, amps, az, el)


@dataclass(frozen=True)
class ClutterSpec:
    """Distribution parameters for ClutterModel.sample."""

    num_scatterers: int = 24
    range_min: float = 2.0
    range_max: float = 45.0
    amplitude: float = 0.5
    amplitude_spread: float = 0.5
    reference_range: float = 4.0
    max_azimuth: float = math.radians(40.0)
    min_elevation: float = math.radians(-20.0)
    max_elevation: float = math.radians(5.0)

    def to_dict(self) -> dict:
        return {
            "num_scatterers": self.num_scatterers,
            "range_min": self.range_min,
            "range_max": self.range_max,
            "amplitude": self.amplitude,
            "amplitude_spread": self.amplitude_spread,
            "reference_range": self.reference_range,
            "max_azimuth": self.max_azimuth,
            "min_elevation": self.min_elevation,
            "max_elevation": self.max_elevation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClutterSpec":
        return cls(**d)


@dataclass
class RadarFrame:
    """One frame of raw baseband samples, complex (K, M, N)."""

    samples: np.ndarray
    frame_id: int = 0
    timestamp: float = 0.0


@dataclass(frozen=True)
class FrameTruth:
    """Per-frame ground truth for an annotated foreground frame."""

    present: bool
    cell: tuple = (0, 0)  # (range bin k, doppler bin m)
    range_m: float = 0.0
    velocity: float = 0.0
    azimuth: float = 0.0
    elevation: float = 0.0
    x_im: float = 0.0
    y_im: float = 0.0

    def to_dict(self) -> dict:
        return {
            "present": self.present,
            "k": int(self.cell[0]),
            "m": int(self.cell[1]),
            "R": self.range_m,
            "v": self.velocity,
            "phi": self.azimuth,
            "theta": self.elevation,
            "x_im": self.x_im,
            "y_im": self.y_im,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameTruth":
        return cls(
            present=bool(d["present"]),
            cell=(int(d["k"]), int(d["m"])),
            range_m=float(d["R"]),
            velocity=float(d["v"]),
            azimuth=float(d["phi"]),
            elevation=float(d["theta"]),
            x_im=float(d["x_im"]),
            y_im=float(d["y_im"]),
        )


@dataclass
class AnnotatedRecording:
    """Background and foreground frames of one session plus per-frame truth."""

    config: RadarConfig
    camera: CameraModel
    background: list  # list[RadarFrame]
    foreground: list  # list[RadarFrame]
    truth: list  # list[FrameTruth], aligned with foreground
    excluded_frames: int = 0  # trajectory frames dropped as not annotatable


@dataclass(frozen=True)
class ScenarioSpec:
    """Recording scenario: frame counts, trajectory shape, clutter population.

    The default trajectory is a sequence of horizontal passes: the object
    drives on straight lines parallel to the image x-axis at a fixed height
    below the radar, at depths chosen so the range sweeps the configured span
    while staying inside the camera's field of view.
    """

    num_background: int = 256
    num_foreground: int = 512
    range_min: float = 4.0
    range_max: float = 28.0
    trajectory: str = "horizontal"
    object_height: float = 1.2  # meters below the radar axis
    speed_min: float = 3.0  # m/s along the pass
    speed_max: float = 7.0
    max_azimuth: float = math.radians(30.0)
    frame_interval: float = 0.05  # s between frames
    amplitude: float = 1.0  # reflectivity at reference_range
    reference_range: float = 4.0
    clutter: ClutterSpec = field(default_factory=ClutterSpec)

    def to_dict(self) -> dict:
        return {
            "num_background": self.num_background,
            "num_foreground": self.num_foreground,
            "range_min": self.range_min,
            "range_max": self.range_max,
            "trajectory": self.trajectory,
            "object_height": self.object_height,
            "speed_min": self.speed_min,
            "speed_max": self.speed_max,
            "max_azimuth": self.max_azimuth,
            "frame_interval": self.frame_interval,
            "amplitude": self.amplitude,
            "reference_range": self.reference_range,
            "clutter": self.clutter.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "clutter" in d:
            d["clutter"] = ClutterSpec.from_dict(d["clutter"])
        return cls(**d)


def steering_phases(config: RadarConfig, azimuth: float, elevation: float) -> np.ndarray:
    """Far-field steering phase of each receiver for a direction (rad).

    psi_n = (2*pi/lambda) * (p_x*cos(el)*sin(az) + p_y*sin(el)); psi_1 == 0
    because receiver 1 defines the origin.
    """
    if abs(azimuth) >= math.pi / 2 or abs(elevation) >= math.pi / 2:
        raise ValueError("direction outside the front field")
    pos = np.asarray(config.receiver_positions)  # (N, 2)
    ux = math.cos(elevation) * math.sin(azimuth)
    uy = math.sin(elevation)
    return 2.0 * math.pi / config.wavelength * (pos[:, 0] * ux + pos[:, 1] * uy)


def _baseband(config: RadarConfig, ranges, velocities, azimuths, elevations, amplitudes) -> np.ndarray:
    """Sum of point-scatterer baseband returns, complex (K, M, N)."""
    k_count = config.samples_per_chirp
    m_count = config.chirps_per_frame
    t_chirp = config.chirp_duration
    slope = config.bandwidth / t_chirp
    sample_rate = k_count / t_chirp

    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    n_src = len(ranges)
    if n_src == 0:
        return np.zeros((k_count, m_count, config.num_receivers), dtype=np.complex128)
    velocities = np.broadcast_to(np.asarray(velocities, dtype=float), (n_src,))
    amplitudes = np.broadcast_to(np.asarray(amplitudes, dtype=float), (n_src,))

    f_beat = 2.0 * ranges * slope / SPEED_OF_LIGHT
    f_dopp = 2.0 * velocities * config.carrier_freq / SPEED_OF_LIGHT

    k_idx = np.arange(k_count)
    m_idx = np.arange(m_count)
    fast = np.exp(2j * np.pi * np.outer(f_beat / sample_rate, k_idx))  # (S, K)
    slow = np.exp(2j * np.pi * np.outer(f_dopp * t_chirp, m_idx))  # (S, M)
    psi = np.stack(
        [steering_phases(config, float(a), float(e)) for a, e in zip(azimuths, elevations)]
    )  # (S, N)
    steer = np.exp(1j * psi)
    return np.einsum("s,sk,sm,sn->kmn", amplitudes.astype(complex), fast, slow, steer, optimize=True)


def synthesize_frame(
    config: RadarConfig,
    obj: Optional[ObjectState],
    clutter: ClutterModel,
    seed,
    frame_id: int = 0,
    timestamp: float = 0.0,
) -> RadarFrame:
    """One baseband frame: object return (if any) + clutter + receiver noise.

    Noise is circularly symmetric complex Gaussian with total standard
    deviation config.noise_sigma (noise_sigma/sqrt(2) per component).
    Deterministic given the seed.
    """
    shape = (config.samples_per_chirp, config.chirps_per_frame, config.num_receivers)
    samples = np.zeros(shape, dtype=np.complex128)
    if obj is not None:
        obj.validate(config)
        samples += _baseband(
            config, [obj.range_m], [obj.velocity], [obj.azimuth], [obj.elevation], [obj.amplitude]
        )
    if clutter.num_scatterers > 0:
        samples += _baseband(
            config,
            clutter.ranges,
            np.zeros(clutter.num_scatterers),
            clutter.azimuths,
            clutter.elevations,
            clutter.amplitudes,
        )
    if config.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        scale = config.noise_sigma / math.sqrt(2.0)
        samples += scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return RadarFrame(samples=samples, frame_id=frame_id, timestamp=timestamp)


def project_to_image(camera: CameraModel, azimuth: float, elevation: float) -> tuple:
    """Pinhole projection of a direction into normalized [0,1]^2 image coordinates.

    Raises OutOfFrameError when the direction falls outside the image; such a
    frame cannot be annotated and must be dropped from training material.
    """
    if abs(azimuth) >= math.pi / 2 or abs(elevation) >= math.pi / 2:
        raise OutOfFrameError("direction outside the front field")
    x_im = camera.center_x + camera.focal_x * math.tan(azimuth)
    y_im = camera.center_y - camera.focal_y * math.tan(elevation)
    if not (0.0 <= x_im <= 1.0 and 0.0 <= y_im <= 1.0):
        raise OutOfFrameError(f"projection ({x_im:.4f}, {y_im:.4f}) outside the image")
    return x_im, y_im


def backproject(camera: CameraModel, x_im: float, y_im: float) -> tuple:
    """Inverse of project_to_image: image coordinates back to (azimuth, elevation)."""
    azimuth = math.atan((x_im - camera.center_x) / camera.focal_x)
    elevation = math.atan((camera.center_y - y_im) / camera.focal_y)
    return azimuth, elevation


def true_cell(config: RadarConfig, range_m: float, velocity: float) -> tuple:
    """Analytic range-doppler cell of a point return, doppler centered at M/2."""
    k = int(round(range_m / config.range_resolution))
    m = config.chirps_per_frame // 2 + int(round(velocity / config.velocity_resolution))
    if not (0 <= k < config.samples_per_chirp and 0 <= m < config.chirps_per_frame):
        raise ValueError("object outside the unambiguous range-doppler window")
    return k, m


def _horizontal_trajectory(config: RadarConfig, scenario: ScenarioSpec, rng) -> list:
    """Object states for horizontal passes; may overshoot num_foreground, caller trims.

    Pass depths walk a shuffled ladder spanning the usable depth interval, so
    both recording segments cover near and far ranges with distinct patterns.
    """
    h = scenario.object_height
    phi_max = scenario.max_azimuth
    # keep the whole pass inside [range_min, range_max]: the pass center is the
    # closest point, the pass ends (at azimuth +-phi_max) the farthest
    z_lo = math.sqrt(max(scenario.range_min**2 - h * h, 1e-9))
    z_hi = math.cos(phi_max) * math.sqrt(scenario.range_max**2 - h * h)
    if z_hi <= z_lo:
        raise ValueError("range span too narrow for the configured trajectory")
    ladder = np.linspace(z_lo * 1.01, z_hi * 0.99, 12)

    states = []
    dt = scenario.frame_interval
    while len(states) < scenario.num_foreground:
        for depth in rng.permutation(ladder):
            speed = rng.uniform(scenario.speed_min, scenario.speed_max)
            direction = 1.0 if rng.random() < 0.5 else -1.0
            x_lim = depth * math.tan(phi_max)
            x = -direction * x_lim
            while abs(x) <= x_lim:
                r = math.sqrt(x * x + depth * depth + h * h)
                states.append(
                    ObjectState(
                        range_m=r,
                        velocity=x * direction * speed / r,
                        azimuth=math.atan2(x, depth),
                        elevation=math.asin(-h / r),
                        amplitude=scenario.amplitude * (scenario.reference_range / r) ** 2,
                    )
                )
                x += direction * speed * dt
            if len(states) >= scenario.num_foreground:
                break
    return states


def generate_recording(
    config: RadarConfig,
    camera: CameraModel,
    scenario: ScenarioSpec,
    seed: int,
    clutter: Optional[ClutterModel] = None,
) -> AnnotatedRecording:
    """Synthesize one annotated recording; bit-identical for identical inputs.

    Frames whose object projects outside the camera image are excluded and
    counted in excluded_frames.  Pass an explicit ClutterModel to share one
    environment across several recordings (the usual setup: one background
    segment plus several foreground segments of the same scene).
    """
    if clutter is None:
        clutter = ClutterModel.sample(
            scenario.clutter, np.random.SeedSequence([seed, _TAG_CLUTTER])
        )

    background = []
    for i in range(scenario.num_background):
        background.append(
            synthesize_frame(
                config,
                None,
                clutter,
                np.random.SeedSequence([seed, _TAG_NOISE, i]),
                frame_id=i,
                timestamp=i * scenario.frame_interval,
            )
        )

    if scenario.trajectory != "horizontal":
        raise ValueError(f"unknown trajectory type: {scenario.trajectory}")
    traj_rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_TRAJECTORY]))
    states = _horizontal_trajectory(config, scenario, traj_rng)

    foreground, truth = [], []
    excluded = 0
    idx = 0
    for state in states:
        if len(foreground) >= scenario.num_foreground:
            break
        try:
            x_im, y_im = project_to_image(camera, state.azimuth, state.elevation)
        except OutOfFrameError:
            excluded += 1
            continue
        frame_seed = np.random.SeedSequence([seed, _TAG_NOISE, scenario.num_background + idx])
        idx += 1
        frame = synthesize_frame(
            config,
            state,
            clutter,
            frame_seed,
            frame_id=len(foreground),
            timestamp=len(foreground) * scenario.frame_interval,
        )
        foreground.append(frame)
        truth.append(
            FrameTruth(
                present=True,
                cell=true_cell(config, state.range_m, state.velocity),
                range_m=state.range_m,
                velocity=state.velocity,
                azimuth=state.azimuth,
                elevation=state.elevation,
                x_im=x_im,
                y_im=y_im,
            )
        )
    return AnnotatedRecording(
        config=config,
        camera=camera,
        background=background,
        foreground=foreground,
        truth=truth,
        excluded_frames=excluded,
    )
