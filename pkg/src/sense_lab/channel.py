"""Geometric indoor channel with a moving target, AR(1) clutter and AWGN.

Rays come from an image-method tracer with first-order wall reflections, a
line-of-sight path (bistatic only) and one point target.  Rays are binned to
the nearest CIR tap with carrier phase ``exp(-j 2 pi f_c tau)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .csi_codec import CsiMatrix
from .errors import ConfigurationError, OutOfRangeError, ValidationError
from .io import write_csv
from .waveform import ComplexSequence

SPEED_OF_LIGHT = 3e8

PRESETS: dict[str, dict] = {
    "living_room": {
        "room": {"x": 6.0, "y": 4.0, "z": 2.5},
        "tx": [0.5, 2.0, 1.2],
        "rx": [0.5, 2.0, 1.2],
        "antenna": {"type": "directional", "boresight": [1.0, 0.0, 0.0], "beamwidth_deg": 60.0},
        "carrier_hz": 60.48e9,
        "bandwidth_hz": 1.76e9,
        "target": {
            "waypoints": [
                {"t": 0.0, "x": 4.5, "y": 2.0, "z": 1.2},
                {"t": 2.0, "x": 1.5, "y": 2.2, "z": 1.2},
            ],
            "rcs": 1.0,
        },
        "clutter": {"a": 0.9, "var": 0.0},
        "seed": 0,
    },
    "conference_room": {
        "room": {"x": 10.0, "y": 6.0, "z": 3.0},
        "tx": [0.5, 3.0, 1.5],
        "rx": [9.5, 3.0, 1.5],
        "antenna": {"type": "isotropic"},
        "carrier_hz": 60.48e9,
        "bandwidth_hz": 1.76e9,
        "target": {
            "waypoints": [
                {"t": 0.0, "x": 3.0, "y": 4.5, "z": 1.5},
                {"t": 2.0, "x": 6.5, "y": 5.3, "z": 1.5},
            ],
            "rcs": 1.0,
        },
        "clutter": {"a": 0.9, "var": 0.0},
        "seed": 0,
    },
}

_KEYS = {"preset", "room", "tx", "rx", "antenna", "carrier_hz", "bandwidth_hz", "target", "clutter", "seed", "reflection_loss_db"}


@dataclass(frozen=True)
class Antenna:
    type: str = "isotropic"
    boresight: tuple[float, float, float] = (1.0, 0.0, 0.0)
    beamwidth_deg: float = 60.0

    def amplitude(self, direction: np.ndarray) -> float:
        """Field amplitude toward ``direction``: parabolic dB rolloff, 20 dB floor."""
        if self.type == "isotropic":
            return 1.0
        b = np.asarray(self.boresight, float)
        d = np.asarray(direction, float)
        cosang = float(np.dot(b, d) / (np.linalg.norm(b) * np.linalg.norm(d)))
        theta = math.degrees(math.acos(max(-1.0, min(1.0, cosang))))
        att_db = min(12.0 * (theta / self.beamwidth_deg) ** 2, 20.0)
        return 10.0 ** (-att_db / 20.0)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear waypoint path, ``times`` strictly increasing."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float, float], ...]

    @property
    def domain(self) -> tuple[float, float]:
        return self.times[0], self.times[-1]

    def _segment(self, t: float) -> int:
        t0, t1 = self.domain
        if not t0 - 1e-12 <= t <= t1 + 1e-12:
            raise OutOfRangeError(f"time {t} s outside trajectory domain [{t0}, {t1}] s")
        if len(self.times) == 1:
            return 0
        return int(min(max(np.searchsorted(self.times, t, side="right") - 1, 0), len(self.times) - 2))

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(position m, velocity m/s) at time ``t``."""
        i = self._segment(t)
        if len(self.times) == 1:
            return np.array(self.points[0], float), np.zeros(3)
        ta, tb = self.times[i], self.times[i + 1]
        pa, pb = np.array(self.points[i], float), np.array(self.points[i + 1], float)
        v = (pb - pa) / (tb - ta)
        return pa + v * (t - ta), v


@dataclass(frozen=True)
class Target:
    trajectory: Trajectory
    rcs: float = 1.0


@dataclass(frozen=True)
class Scenario:
    preset: str
    room: tuple[float, float, float]
    tx_pos: tuple[float, float, float]
    rx_pos: tuple[float, float, float]
    antenna: Antenna
    carrier: float
    bandwidth: float
    target: Target | None
    clutter_a: float = 0.9
    clutter_var: float = 0.0
    seed: int = 0
    reflection_loss_db: float = 6.0
    document: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def monostatic(self) -> bool:
        return tuple(self.tx_pos) == tuple(self.rx_pos)

    @property
    def sample_rate(self) -> float:
        return self.bandwidth

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier

    @property
    def default_n_taps(self) -> int:
        diag = float(np.linalg.norm(self.room))
        return int(math.ceil(2 * diag / SPEED_OF_LIGHT * self.sample_rate)) + 1

    def without_target(self) -> "Scenario":
        return replace(self, target=None)


def _merge(base: dict, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _inside(p, room) -> bool:
    return all(0.0 <= float(c) <= float(r) for c, r in zip(p, room))


def load_scenario(source) -> Scenario:
    """Resolve a preset name, JSON path or mapping into a :class:`Scenario`.

    Mappings may name a ``preset`` whose values act as defaults; ``custom``
    (or no preset) requires every geometric key.  All geometry problems are
    collected and raised together.
    """
    if isinstance(source, Scenario):
        return source
    if isinstance(source, str) and source in PRESETS:
        doc = {"preset": source}
    elif isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigurationError(f"scenario file not found: {source}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"scenario file {source} is not valid JSON: {exc}") from exc
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        raise ConfigurationError(f"cannot load a scenario from {type(source).__name__}")

    unknown = sorted(set(doc) - _KEYS)
    if unknown:
        raise ValidationError([f"unknown scenario key {k!r}" for k in unknown])
    preset = doc.get("preset", "custom")
    if preset != "custom" and preset not in PRESETS:
        raise ValidationError([f"unknown preset {preset!r}"])
    resolved = _merge(PRESETS.get(preset, {}), doc)
    resolved["preset"] = preset
    missing = [k for k in ("room", "tx", "rx", "carrier_hz", "bandwidth_hz") if k not in resolved]
    if missing:
        raise ValidationError([f"missing key {k!r}" for k in missing])

    problems: list[str] = []
    try:
        r = resolved["room"]
        room = (float(r["x"]), float(r["y"]), float(r["z"]))
        tx = tuple(float(v) for v in resolved["tx"])
        rx = tuple(float(v) for v in resolved["rx"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"malformed geometry: {exc}"]) from exc
    if any(d <= 0 for d in room):
        problems.append(f"room dimensions must be positive, got {room}")
    for name, p in (("tx", tx), ("rx", rx)):
        if len(p) != 3:
            problems.append(f"{name} must have 3 coordinates")
        elif not _inside(p, room):
            problems.append(f"{name} position {p} lies outside the room {room}")
    carrier = float(resolved["carrier_hz"])
    bandwidth = float(resolved["bandwidth_hz"])
    if bandwidth <= 0:
        problems.append(f"bandwidth_hz must be positive, got {bandwidth}")
    if carrier <= bandwidth:
        problems.append(f"carrier_hz ({carrier}) must exceed bandwidth_hz ({bandwidth})")

    a = resolved.get("antenna", {"type": "isotropic"})
    atype = a.get("type", "isotropic")
    if atype not in ("isotropic", "directional"):
        problems.append(f"antenna type must be isotropic or directional, got {atype!r}")
    antenna = Antenna(atype, tuple(float(v) for v in a.get("boresight", (1.0, 0.0, 0.0))), float(a.get("beamwidth_deg", 60.0)))
    if atype == "directional" and not 0 < antenna.beamwidth_deg <= 360:
        problems.append(f"beamwidth_deg must be in (0, 360], got {antenna.beamwidth_deg}")

    target = None
    tdoc = resolved.get("target")
    if tdoc:
        wps = tdoc.get("waypoints", [])
        if not wps:
            problems.append("target needs at least one waypoint")
        times, points = [], []
        for i, wp in enumerate(wps):
            try:
                t = float(wp["t"])
                p = (float(wp["x"]), float(wp["y"]), float(wp["z"]))
            except (KeyError, TypeError, ValueError):
                problems.append(f"waypoint {i} is malformed: {wp!r}")
                continue
            if not _inside(p, room):
                problems.append(f"waypoint {i} (t={t} s) at {p} lies outside the room {room}")
            if times and t <= times[-1]:
                problems.append(f"waypoint {i} time {t} s is not after the previous waypoint")
            times.append(t)
            points.append(p)
        rcs = float(tdoc.get("rcs", 1.0))
        if rcs < 0:
            problems.append(f"target rcs must be nonnegative, got {rcs}")
        if not problems:
            target = Target(Trajectory(tuple(times), tuple(points)), rcs)

    clutter = resolved.get("clutter", {}) or {}
    ca, cvar = float(clutter.get("a", 0.9)), float(clutter.get("var", 0.0))
    if not -1 < ca < 1:
        problems.append(f"clutter a must lie in (-1, 1), got {ca}")
    if cvar < 0:
        problems.append(f"clutter var must be nonnegative, got {cvar}")
    if problems:
        raise ValidationError(problems)
    return Scenario(
        preset=preset,
        room=room,
        tx_pos=tx,
        rx_pos=rx,
        antenna=antenna,
        carrier=carrier,
        bandwidth=bandwidth,
        target=target,
        clutter_a=ca,
        clutter_var=cvar,
        seed=int(resolved.get("seed", 0)),
        reflection_loss_db=float(resolved.get("reflection_loss_db", 6.0)),
        document=resolved,
    )


# --------------------------------------------------------------------------
# Rays
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ray:
    delay: float
    gain: complex
    doppler: float = 0.0
    origin: str = "static"
    label: str = ""

    def __post_init__(self):
        if self.delay < 0:
            raise OutOfRangeError(f"ray {self.label or self.origin} has negative delay {self.delay}")
        if not np.isfinite(self.gain):
            raise OutOfRangeError(f"ray {self.label or self.origin} has a non-finite gain")


def _mirror(p: np.ndarray, axis: int, plane: float) -> np.ndarray:
    q = p.copy()
    q[axis] = 2 * plane - p[axis]
    return q


_WALLS = [(axis, side) for axis in range(3) for side in (0, 1)]
_WALL_NAMES = {(0, 0): "x0", (0, 1): "x1", (1, 0): "y0", (1, 1): "y1", (2, 0): "floor", (2, 1): "ceiling"}


def trace_rays(s: Scenario, t: float) -> list[Ray]:
    """Static and target rays at time ``t``.

    Doppler is ``-(1/lambda) d(path)/dt``, so a target closing on the sensor
    gives positive Doppler.
    """
    lam = s.wavelength
    tx, rx = np.array(s.tx_pos, float), np.array(s.rx_pos, float)
    rays: list[Ray] = []
    if not s.monostatic:
        d = float(np.linalg.norm(rx - tx))
        g = lam / (4 * np.pi * d) * s.antenna.amplitude(rx - tx) * s.antenna.amplitude(tx - rx)
        rays.append(Ray(d / SPEED_OF_LIGHT, g, 0.0, "static", "los"))
    loss = 10.0 ** (-s.reflection_loss_db / 20.0)
    for axis, side in _WALLS:
        plane = s.room[axis] * side
        rx_img = _mirror(rx, axis, plane)
        tx_img = _mirror(tx, axis, plane)
        d = float(np.linalg.norm(rx_img - tx))
        if d == 0:
            continue
        g = lam / (4 * np.pi * d) * loss * s.antenna.amplitude(rx_img - tx) * s.antenna.amplitude(tx_img - rx)
        rays.append(Ray(d / SPEED_OF_LIGHT, g, 0.0, "static", f"wall:{_WALL_NAMES[(axis, side)]}"))
    if s.target is not None:
        p, v = s.target.trajectory.state(t)
        u1, u2 = p - tx, p - rx
        d1, d2 = float(np.linalg.norm(u1)), float(np.linalg.norm(u2))
        if d1 > 0 and d2 > 0:
            u1, u2 = u1 / d1, u2 / d2
            g = lam * math.sqrt(s.target.rcs) / ((4 * np.pi) ** 1.5 * d1 * d2)
            g *= s.antenna.amplitude(u1) * s.antenna.amplitude(u2)
            doppler = -float(np.dot(v, u1 + u2)) / lam
            rays.append(Ray((d1 + d2) / SPEED_OF_LIGHT, g, doppler, "target", "target"))
    return rays


def target_truth(s: Scenario, t: float) -> dict:
    """Ground-truth range, range rate and Doppler of the target at ``t``.

    Monostatic range is the one-way distance; bistatic range is the path sum
    ``d1 + d2``.  ``velocity`` is the matching range rate.
    """
    if s.target is None:
        raise ConfigurationError("scenario has no target")
    p, v = s.target.trajectory.state(t)
    tx, rx = np.array(s.tx_pos, float), np.array(s.rx_pos, float)
    u1, u2 = p - tx, p - rx
    d1, d2 = float(np.linalg.norm(u1)), float(np.linalg.norm(u2))
    rate = float(np.dot(v, u1 / d1 + u2 / d2))
    doppler = -rate / s.wavelength
    if s.monostatic:
        return {"range": d1, "velocity": -rate / 2, "doppler": doppler, "position": p}
    return {"range": d1 + d2, "velocity": -rate, "doppler": doppler, "position": p}


# --------------------------------------------------------------------------
# Clutter
# --------------------------------------------------------------------------


@dataclass
class ClutterModel:
    """AR(1) per-tap target-unrelated clutter, ``x <- a x + w``."""

    ar_coefficient: float
    innovation_variance: float
    n_taps: int
    state: np.ndarray | None = None

    def __post_init__(self):
        if not -1 < self.ar_coefficient < 1:
            raise ConfigurationError(f"AR coefficient must lie in (-1, 1), got {self.ar_coefficient}")
        if self.innovation_variance < 0:
            raise ConfigurationError("innovation variance must be nonnegative")
        if self.state is None:
            self.state = np.zeros(self.n_taps, dtype=complex)

    @property
    def stationary_power(self) -> float:
        return self.innovation_variance / (1 - self.ar_coefficient**2)

    def step(self, rng: np.random.Generator) -> np.ndarray:
        w = (rng.standard_normal(self.n_taps) + 1j * rng.standard_normal(self.n_taps)) * math.sqrt(self.innovation_variance / 2)
        self.state = self.ar_coefficient * self.state + w
        return self.state.copy()


def clutter_step(model: ClutterModel, rng: np.random.Generator) -> np.ndarray:
    return model.step(rng)


def clutter_rays(values: np.ndarray, sample_rate: float) -> list[Ray]:
    return [
        Ray(k / sample_rate, complex(v), 0.0, "clutter", f"clutter:{k}")
        for k, v in enumerate(values)
        if v != 0
    ]


# --------------------------------------------------------------------------
# Realization and waveform application
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    time: float
    rays: tuple[Ray, ...]
    cir: np.ndarray
    sample_rate: float
    carrier: float
    taps: tuple[int, ...] = ()
    phasors: tuple[complex, ...] = ()

    def cfr(self, n_subcarriers: int | None = None) -> CsiMatrix:
        n = self.cir.size if n_subcarriers is None else int(n_subcarriers)
        return CsiMatrix(np.fft.fft(self.cir, n), self.sample_rate)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.cir) ** 2))


def realize_channel(rays: Sequence[Ray], sample_rate: float, n_taps: int, carrier: float = 60.48e9, time: float = 0.0) -> ChannelRealization:
    """Bin rays into ``n_taps`` taps at the nearest sample delay."""
    cir = np.zeros(n_taps, dtype=complex)
    taps, phasors = [], []
    for r in rays:
        k = int(np.floor(r.delay * sample_rate + 0.5))
        if k >= n_taps:
            raise OutOfRangeError(
                f"ray {r.label or r.origin} delay {r.delay:.6g} s maps to tap {k}, beyond {n_taps} taps"
            )
        ph = r.gain * np.exp(-2j * np.pi * carrier * r.delay)
        cir[k] += ph
        taps.append(k)
        phasors.append(complex(ph))
    return ChannelRealization(time, tuple(rays), cir, sample_rate, carrier, tuple(taps), tuple(phasors))


def apply_channel(tx: ComplexSequence, c: ChannelRealization, snr_db: float, rng: np.random.Generator | None = None) -> ComplexSequence:
    """Convolve with the CIR, rotate Doppler-shifted rays in fast time, add AWGN.

    Noise variance is the measured mean output power over ``10**(snr_db/10)``.
    ``snr_db = inf`` adds no noise.
    """
    if tx.sample_rate != c.sample_rate:
        raise ConfigurationError(f"sample rates differ: {tx.sample_rate} Hz vs {c.sample_rate} Hz")
    x = tx.samples
    moving = [i for i, r in enumerate(c.rays) if r.doppler != 0.0]
    if not moving:
        y = np.convolve(x, c.cir)
    else:
        still = c.cir.copy()
        for i in moving:
            still[c.taps[i]] -= c.phasors[i]
        y = np.convolve(x, still)
        n = np.arange(y.size)
        for i in moving:
            k = c.taps[i]
            seg = np.zeros(y.size, dtype=complex)
            seg[k : k + x.size] = x * c.phasors[i]
            y += seg * np.exp(2j * np.pi * c.rays[i].doppler * n / c.sample_rate)
    if np.isfinite(snr_db):
        if rng is None:
            raise ConfigurationError("a random stream is required when snr_db is finite")
        p_sig = float(np.mean(np.abs(y) ** 2))
        var = p_sig / 10.0 ** (snr_db / 10.0)
        y = y + (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size)) * math.sqrt(var / 2)
    elif snr_db < 0:
        raise ConfigurationError("snr_db = -inf is not meaningful")
    return ComplexSequence(y, tx.sample_rate)


def write_pdp_csv(path, realizations: Sequence[ChannelRealization]) -> Path:
    rows = (
        (float(c.time), k, k / c.sample_rate, float(abs(v)))
        for c in realizations
        for k, v in enumerate(c.cir)
    )
    return write_csv(path, ("time_s", "tap_index", "delay_s", "magnitude"), rows)
