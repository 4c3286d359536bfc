"""Range-Doppler maps, CA-CFAR detection, RMSE and the accuracy harness.

Processing chain per burst: matched filter of each exchange's samples
against the sounding reference (fast time, one bin per sample), then a DFT
across exchanges at every range bin (slow time).  Parameters come from the
strongest CFAR detection without sub-bin interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import (
    SPEED_OF_LIGHT,
    ClutterModel,
    Scenario,
    apply_channel,
    clutter_rays,
    load_scenario,
    realize_channel,
    target_truth,
    trace_rays,
)
from .errors import ConfigurationError, DegenerateInputError, OutOfRangeError
from .io import write_csv
from .mac import DmgBurstSchedule, SensingEngine, SessionAttrs, StaProfile
from .rng import stream
from .waveform import ComplexSequence, build_ce_sequence

KINDS = ("range", "velocity", "doppler")


@dataclass(frozen=True, eq=False)
class RdaMap:
    """|X|^2 over ``[doppler, range]`` with the complex map kept alongside."""

    range_bins: np.ndarray
    doppler_bins: np.ndarray
    magnitudes: np.ndarray
    complex_map: np.ndarray | None = None
    carrier: float = 60.48e9
    monostatic: bool = True

    def __post_init__(self):
        if self.magnitudes.shape != (self.doppler_bins.size, self.range_bins.size):
            raise ConfigurationError("map grid does not match its axes")

    @property
    def range_bin_size(self) -> float:
        return float(self.range_bins[1] - self.range_bins[0]) if self.range_bins.size > 1 else float("nan")

    @property
    def doppler_bin_size(self) -> float:
        return float(self.doppler_bins[1] - self.doppler_bins[0]) if self.doppler_bins.size > 1 else float("nan")


@dataclass(frozen=True)
class Detection:
    range: float
    doppler: float
    velocity: float
    magnitude: float
    snr_estimate: float
    cell: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class EstimationRecord:
    kind: str
    estimate: float
    truth: float


def doppler_to_velocity(doppler: float, carrier: float, monostatic: bool = True) -> float:
    """Closing speed for monostatic maps, path-sum rate for bistatic ones."""
    lam = SPEED_OF_LIGHT / carrier
    return doppler * lam / 2 if monostatic else doppler * lam


def range_bin_size(sample_rate: float, monostatic: bool = True) -> float:
    return SPEED_OF_LIGHT / (2 * sample_rate) if monostatic else SPEED_OF_LIGHT / sample_rate


def matched_filter(y: np.ndarray, ref: np.ndarray, n_lags: int) -> np.ndarray:
    """``sum_n y[n + l] conj(ref[n])`` for lags ``l = 0 .. n_lags-1``."""
    need = ref.size + n_lags - 1
    if y.size < need:
        y = np.concatenate([y, np.zeros(need - y.size, dtype=complex)])
    full = np.correlate(y[:need], ref, mode="valid")
    return full[:n_lags]


def build_rda_map(
    burst: Sequence,
    ref: ComplexSequence,
    intra_interval: float,
    f_c: float,
    n_range_bins: int | None = None,
    monostatic: bool = True,
    remove_static: bool = False,
) -> RdaMap:
    """Range-Doppler map from one burst of received exchanges.

    Parameters
    ----------
    burst : sequence of ComplexSequence or arrays
        Received samples per exchange, all the same length.
    ref : ComplexSequence
        Transmitted sounding sequence.
    remove_static : bool
        Subtract the slow-time mean of every range bin before the Doppler
        transform, which removes zero-Doppler returns.
    """
    if len(burst) < 1:
        raise ConfigurationError("a burst needs at least one exchange")
    rows = [np.asarray(b.samples if isinstance(b, ComplexSequence) else b, dtype=complex) for b in burst]
    if len({r.size for r in rows}) != 1:
        raise ConfigurationError("all exchanges in a burst must have the same length")
    n_bins = rows[0].size - len(ref) + 1 if n_range_bins is None else int(n_range_bins)
    if n_bins < 1:
        raise ConfigurationError("received sequences are shorter than the reference")
    profiles = np.stack([matched_filter(r, ref.samples, n_bins) for r in rows])
    if remove_static:
        profiles = profiles - profiles.mean(axis=0, keepdims=True)
    k = profiles.shape[0]
    cmap = np.fft.fftshift(np.fft.fft(profiles, axis=0), axes=0)
    dop = np.fft.fftshift(np.fft.fftfreq(k, d=intra_interval))
    rng_axis = np.arange(n_bins) * range_bin_size(ref.sample_rate, monostatic)
    return RdaMap(rng_axis, dop, np.abs(cmap) ** 2, cmap, f_c, monostatic)


def cfar_scale(pfa: float, n_train: int) -> float:
    """CA-CFAR multiplier for exponentially distributed (square-law) noise."""
    if not 0 < pfa < 1:
        raise OutOfRangeError(f"pfa must lie in (0, 1), got {pfa}")
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def _pair(v) -> tuple[int, int]:
    if np.isscalar(v):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def cfar_training_mean(mags: np.ndarray, guard_cells, train_cells) -> tuple[np.ndarray, int]:
    """Mean of the training ring around every cell (circular edges)."""
    gd, gr = _pair(guard_cells)
    td, tr = _pair(train_cells)
    wd, wr = gd + td, gr + tr
    total = np.zeros_like(mags)
    n = 0
    for i in range(-wd, wd + 1):
        for j in range(-wr, wr + 1):
            if abs(i) <= gd and abs(j) <= gr:
                continue
            total += np.roll(mags, (i, j), axis=(0, 1))
            n += 1
    return total / n, n


def cfar_detect(rmap: RdaMap, guard_cells=(1, 2), train_cells=(3, 6), scale_factor: float | None = None, pfa: float = 1e-3) -> list[Detection]:
    """Two-dimensional cell-averaging CFAR.

    A cell is detected when its magnitude exceeds ``scale_factor`` times the
    mean of its training ring.  ``guard_cells`` and ``train_cells`` are
    per-axis half-widths ``(doppler, range)``; edges wrap around.  Without a
    ``scale_factor`` the multiplier is derived from ``pfa``.
    """
    mags = rmap.magnitudes
    gd, gr = _pair(guard_cells)
    td, tr = _pair(train_cells)
    if min(gd, gr) < 0 or min(td, tr) < 0 or (td == 0 and tr == 0):
        raise ConfigurationError("guard cells must be >= 0 and at least one training cell is needed")
    if 2 * (gd + td) + 1 > mags.shape[0] or 2 * (gr + tr) + 1 > mags.shape[1]:
        raise ConfigurationError(
            f"CFAR window {2 * (gd + td) + 1}x{2 * (gr + tr) + 1} does not fit the {mags.shape[0]}x{mags.shape[1]} map"
        )
    mean, n = cfar_training_mean(mags, (gd, gr), (td, tr))
    alpha = cfar_scale(pfa, n) if scale_factor is None else float(scale_factor)
    hits = np.argwhere(mags > alpha * mean)
    out = []
    for i, j in hits:
        m, mu = float(mags[i, j]), float(mean[i, j])
        snr = float("inf") if mu == 0 else 10 * math.log10(m / mu)
        d = float(rmap.doppler_bins[i])
        out.append(Detection(float(rmap.range_bins[j]), d, doppler_to_velocity(d, rmap.carrier, rmap.monostatic), m, snr, (int(i), int(j))))
    return out


def strongest(detections: Sequence[Detection]) -> Detection | None:
    if not detections:
        return None
    return max(detections, key=lambda d: (d.magnitude, -d.cell[0], -d.cell[1]))


def rmse(records: Sequence[EstimationRecord]) -> float:
    """``sqrt(mean((estimate - truth)**2))`` over one kind of record."""
    if not records:
        raise DegenerateInputError("rmse of an empty record set is undefined")
    kinds = {r.kind for r in records}
    if len(kinds) > 1:
        raise ConfigurationError(f"records mix kinds {sorted(kinds)}")
    err = np.array([r.estimate - r.truth for r in records], dtype=float)
    return float(np.sqrt(np.mean(err**2)))


# --------------------------------------------------------------------------
# Evaluation harness
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    """Burst and detector settings for :func:`evaluate`."""

    n_exchanges: int = 16
    intra_interval: float = 0.25e-3
    n_range_bins: int = 64
    guard_cells: tuple[int, int] = (1, 2)
    train_cells: tuple[int, int] = (3, 6)
    pfa: float = 1e-3
    kind: str = "range"
    hist_samples: int = 8
    hist_bins: int = 21
    hist_half_width: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n_exchanges < 1 or self.n_range_bins < 1:
            raise ConfigurationError("need at least one exchange and one range bin")


@dataclass(frozen=True)
class AccuracyCurve:
    kind: str
    snr_db: tuple[float, ...]
    rmse: tuple[float, ...]
    miss_rate: tuple[float, ...]
    trials: int

    def rows(self):
        return [(s, r, m, self.trials) for s, r, m in zip(self.snr_db, self.rmse, self.miss_rate)]


@dataclass(frozen=True)
class AccuracyHistogram:
    kind: str
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    samples: int
    misses: int

    def rows(self):
        return [(self.edges[i], self.edges[i + 1], c) for i, c in enumerate(self.counts)]


@dataclass(frozen=True)
class TrialResult:
    trial: int
    snr_db: float
    record: EstimationRecord | None
    detection: Detection | None = field(default=None, compare=False)


def _engine(s: Scenario) -> tuple[SensingEngine, int, str]:
    if s.monostatic:
        eng = SensingEngine([StaProfile(0, is_ap=True, dmg_capable=True)])
        eng.setup_session(SessionAttrs(1, 0, (), quant=None))
        return eng, 1, "monostatic"
    eng = SensingEngine([StaProfile(0, is_ap=True, dmg_capable=True), StaProfile(1, dmg_capable=True)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,), quant=None))
    return eng, 1, "bistatic"


def _truth(s: Scenario, t: float, kind: str) -> float:
    return float(target_truth(s, t)[kind])


def _estimate(det: Detection, kind: str) -> float:
    return {"range": det.range, "velocity": det.velocity, "doppler": det.doppler}[kind]


def run_burst(
    s: Scenario,
    t0: float,
    snr_db: float,
    noise_rng: np.random.Generator,
    cfg: EvalConfig,
    ref: ComplexSequence,
    clutter_rng: np.random.Generator | None = None,
    noise_var: float | None = None,
) -> tuple[RdaMap, list]:
    """Drive one DMG burst through the MAC engine and the channel.

    Returns the range-Doppler map (static returns removed) and the exchange
    records.  ``noise_var`` fixes the noise power instead of deriving it from
    the commanded SNR.
    """
    eng, sid, kind = _engine(s)
    n_taps = max(s.default_n_taps, cfg.n_range_bins)
    clutter = ClutterModel(s.clutter_a, s.clutter_var, n_taps) if s.clutter_var > 0 else None

    def hook(ctx):
        rays = trace_rays(s, ctx.time)
        if clutter is not None:
            rays = rays + clutter_rays(clutter.step(clutter_rng), s.sample_rate)
        real = realize_channel(rays, s.sample_rate, n_taps, s.carrier, ctx.time)
        if noise_var is not None:
            y = apply_channel(ref, real, math.inf)
            g = noise_rng
            return y.samples + (g.standard_normal(len(y)) + 1j * g.standard_normal(len(y))) * math.sqrt(noise_var / 2)
        return apply_channel(ref, real, snr_db, noise_rng).samples

    sched = DmgBurstSchedule(cfg.n_exchanges, cfg.intra_interval, cfg.intra_interval * (cfg.n_exchanges + 1))
    recs = eng.run_dmg_burst(sid, kind, sched, hook, t0=t0)
    burst = [r.measurements[0].data for r in recs]
    rmap = build_rda_map(burst, ref, cfg.intra_interval, s.carrier, cfg.n_range_bins, s.monostatic, remove_static=True)
    return rmap, recs


def _burst_span(cfg: EvalConfig) -> float:
    return cfg.intra_interval * cfg.n_exchanges


def _trial_start(s: Scenario, seed: int, trial: int, cfg: EvalConfig) -> float:
    t_lo, t_hi = s.target.trajectory.domain
    hi = max(t_lo, t_hi - _burst_span(cfg))
    g = stream(seed, "geometry", trial)
    # quantize to whole nanoseconds so the MAC schedule reproduces it exactly
    return round(float(g.uniform(t_lo, hi)) * 1e9) / 1e9


def _snr_key(snr: float):
    return "inf" if math.isinf(snr) else float(snr)


def run_trial(s: Scenario, snr_db: float, trial: int, seed: int, cfg: EvalConfig, ref: ComplexSequence) -> TrialResult:
    t0 = _trial_start(s, seed, trial, cfg)
    noise = stream(seed, "noise", _snr_key(snr_db), trial)
    clutter = stream(seed, "clutter", trial)
    rmap, _ = run_burst(s, t0, snr_db, noise, cfg, ref, clutter)
    det = strongest(cfar_detect(rmap, cfg.guard_cells, cfg.train_cells, pfa=cfg.pfa))
    if det is None:
        return TrialResult(trial, snr_db, None)
    t_mid = t0 + _burst_span(cfg) / 2
    return TrialResult(trial, snr_db, EstimationRecord(cfg.kind, _estimate(det, cfg.kind), _truth(s, t_mid, cfg.kind)), det)


def evaluate(
    scenario,
    snr_list: Sequence[float],
    trials: int,
    mode: str = "curve",
    seed: int | None = None,
    cfg: EvalConfig | None = None,
    trial_order: Sequence[int] | None = None,
):
    """Accuracy-vs-SNR curve or accuracy histogram for a scenario.

    Curve mode runs ``trials`` bursts per SNR; the burst start time comes
    from a geometry stream keyed by trial only, so every SNR sees the same
    geometries.  Trials with no detection count as misses and are excluded
    from the RMSE.

    Histogram mode uses the first SNR.  Each trial walks the trajectory with
    ``cfg.hist_samples`` evenly spaced bursts; the noise power is fixed from
    the first burst of the trial so SNR changes with the target's distance.
    Errors beyond the histogram range land in the outer bins.

    ``trial_order`` permutes execution order; results do not depend on it.
    """
    s = load_scenario(scenario)
    if s.target is None:
        raise ConfigurationError("scenario has no target to estimate")
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    snrs = [float(x) for x in snr_list]
    if not snrs:
        raise ConfigurationError("snr list is empty")
    cfg = cfg or EvalConfig()
    seed = s.seed if seed is None else int(seed)
    order = list(range(trials)) if trial_order is None else [int(t) for t in trial_order]
    if sorted(order) != list(range(trials)):
        raise ConfigurationError("trial_order must be a permutation of range(trials)")
    ref = build_ce_sequence("CE0", s.sample_rate)
    if mode == "curve":
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ConfigurationError("snr points must be strictly increasing")
        out_r, out_m = [], []
        for snr in snrs:
            results = {t: run_trial(s, snr, t, seed, cfg, ref) for t in order}
            recs = [results[t].record for t in range(trials) if results[t].record is not None]
            misses = trials - len(recs)
            out_r.append(rmse(recs) if recs else float("nan"))
            out_m.append(misses / trials)
        return AccuracyCurve(cfg.kind, tuple(snrs), tuple(out_r), tuple(out_m), trials)
    if mode == "histogram":
        return _histogram(s, snrs[0], trials, seed, cfg, ref, order)
    raise ConfigurationError(f"mode must be curve or histogram, got {mode!r}")


def _histogram(s, snr, trials, seed, cfg, ref, order) -> AccuracyHistogram:
    t_lo, t_hi = s.target.trajectory.domain
    span = _burst_span(cfg)
    starts = np.linspace(t_lo, max(t_lo, t_hi - span), cfg.hist_samples)
    starts = [round(float(t) * 1e9) / 1e9 for t in starts]
    errors: dict[int, list[float]] = {}
    misses = 0
    for trial in order:
        errs = []
        noise_var = None
        for k, t0 in enumerate(starts):
            noise = stream(seed, "noise", _snr_key(snr), trial, k)
            clutter = stream(seed, "clutter", trial, k)
            if noise_var is None and math.isfinite(snr):
                _, recs = run_burst(s, t0, math.inf, noise, cfg, ref, stream(seed, "clutter", trial, k))
                p_sig = float(np.mean(np.abs(recs[0].measurements[0].data) ** 2))
                noise_var = p_sig / 10 ** (snr / 10)
            rmap, _ = run_burst(s, t0, snr, noise, cfg, ref, clutter, noise_var=noise_var)
            det = strongest(cfar_detect(rmap, cfg.guard_cells, cfg.train_cells, pfa=cfg.pfa))
            if det is None:
                errs.append(None)
                continue
            errs.append(_estimate(det, cfg.kind) - _truth(s, t0 + span / 2, cfg.kind))
        errors[trial] = errs
    flat = [e for t in range(trials) for e in errors[t]]
    misses = sum(e is None for e in flat)
    vals = np.array([e for e in flat if e is not None], dtype=float)
    half = cfg.hist_half_width
    if half is None:
        unit = {
            "range": range_bin_size(s.sample_rate, s.monostatic),
            "doppler": 1.0 / span,
            "velocity": doppler_to_velocity(1.0 / span, s.carrier, s.monostatic),
        }[cfg.kind]
        half = 5 * unit
    edges = np.linspace(-half, half, cfg.hist_bins + 1)
    idx = np.clip(np.searchsorted(edges, vals, side="right") - 1, 0, cfg.hist_bins - 1)
    counts = np.bincount(idx, minlength=cfg.hist_bins)
    return AccuracyHistogram(cfg.kind, tuple(float(e) for e in edges), tuple(int(c) for c in counts), len(flat), misses)


def write_curve_csv(path: str | Path, curve: AccuracyCurve) -> Path:
    return write_csv(path, ("snr_db", "rmse", "miss_rate", "trials"), curve.rows())


def write_histogram_csv(path: str | Path, hist: AccuracyHistogram) -> Path:
    return write_csv(path, ("bin_low", "bin_high", "count"), hist.rows())


def write_rda_csv(path: str | Path, rmap: RdaMap) -> Path:
    rows = (
        (float(fd), float(r), float(rmap.magnitudes[i, j]))
        for i, fd in enumerate(rmap.doppler_bins)
        for j, r in enumerate(rmap.range_bins)
    )
    return write_csv(path, ("doppler_hz", "range_m", "magnitude"), rows)
