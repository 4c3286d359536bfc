"""Discrete ambiguity function, low-ambiguity-zone metrics and correlations.

The continuous ambiguity integral is evaluated as a sum over samples::

    X(tau, f_d) = sum_n a[n] conj(b[n - tau]) exp(j 2 pi f_d n / fs)

with integer-sample lags and zero padding outside each sequence's support.
Magnitudes are stored as ``|X|**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, OutOfRangeError
from .io import write_csv
from .waveform import GOLAY_BLOCK, ComplexSequence, build_sync_subfield

SPEED_OF_LIGHT = 3e8
DEFAULT_DOPPLER_POINTS = 201


@dataclass(frozen=True, eq=False)
class AmbiguityMap:
    """|X|^2 on a delay/Doppler grid, indexed ``magnitudes[doppler, delay]``."""

    delays: np.ndarray
    dopplers: np.ndarray
    magnitudes: np.ndarray
    lags: np.ndarray

    def __post_init__(self):
        if self.magnitudes.shape != (self.dopplers.size, self.delays.size):
            raise ConfigurationError(
                f"grid shape {self.magnitudes.shape} does not match axes ({self.dopplers.size}, {self.delays.size})"
            )

    def cell(self, delay: float, doppler: float) -> float:
        i = int(np.argmin(np.abs(self.dopplers - doppler)))
        j = int(np.argmin(np.abs(self.delays - delay)))
        return float(self.magnitudes[i, j])

    def zero_doppler_row(self) -> np.ndarray:
        idx = np.flatnonzero(self.dopplers == 0.0)
        if idx.size == 0:
            raise OutOfRangeError("map has no 0 Hz Doppler row")
        return self.magnitudes[idx[0]]


@dataclass(frozen=True)
class LazMetrics:
    peak: float
    max_sidelobe: float
    peak_to_sidelobe_db: float | None
    zone: tuple[float, float]


def max_doppler(carrier_hz: float, v_max: float, c: float = SPEED_OF_LIGHT) -> float:
    """One-way Doppler bound ``f_c v / c`` used to size the zone."""
    return carrier_hz * v_max / c


def _check_rates(a: ComplexSequence, b: ComplexSequence) -> float:
    if a.sample_rate != b.sample_rate:
        raise ConfigurationError(f"sample rates differ: {a.sample_rate} Hz vs {b.sample_rate} Hz")
    return a.sample_rate


def correlation_lags(len_a: int, len_b: int) -> np.ndarray:
    """Lags matching :func:`cross_correlation` output, ``-(len_b-1) .. len_a-1``."""
    return np.arange(-(len_b - 1), len_a)


def _complex_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.correlate(a, b, "full")[k] = sum_n a[n] conj(b[n - lag_k])
    return np.correlate(a, b, mode="full")


def cross_correlation(a: ComplexSequence, b: ComplexSequence) -> np.ndarray:
    """|sum_n a[n] conj(b[n - tau])| for every lag (see :func:`correlation_lags`)."""
    _check_rates(a, b)
    return np.abs(_complex_correlation(a.samples, b.samples))


def block_correlation(a: ComplexSequence, b: ComplexSequence, block: int = GOLAY_BLOCK) -> np.ndarray:
    """Golay correlator bank output for block-structured sequences.

    Both sequences are cut into consecutive ``block``-sample pieces; piece c of
    ``a`` is correlated (aperiodically) with piece c of ``b`` and the results
    are summed.  This is how complementary Golay blocks are received: the
    sidelobes of Ga and Gb cancel only when each block is correlated against
    its own reference.  Lags run ``-(block-1) .. block-1``.
    """
    _check_rates(a, b)
    if len(a) != len(b) or len(a) % block:
        raise ConfigurationError(f"block correlation needs equal lengths divisible by {block}")
    xa = a.samples.reshape(-1, block)
    xb = b.samples.reshape(-1, block)
    acc = np.zeros(2 * block - 1, dtype=complex)
    for pa, pb in zip(xa, xb):
        acc += _complex_correlation(pa, pb)
    return np.abs(acc)


def sync_correlation_matrix(method: str = "block", sample_rate: float = 20e6) -> np.ndarray:
    """8x8 matrix of max |correlation| over lags between Sync subfields.

    ``method="block"`` uses :func:`block_correlation`; ``"aperiodic"`` uses the
    full-length :func:`cross_correlation`.
    """
    seqs = [build_sync_subfield(r, sample_rate) for r in range(1, 9)]
    fn = {"block": block_correlation, "aperiodic": cross_correlation}.get(method)
    if fn is None:
        raise ConfigurationError(f"unknown correlation method {method!r}")
    out = np.zeros((8, 8))
    for i in range(8):
        for j in range(8):
            out[i, j] = fn(seqs[i], seqs[j]).max()
    return out


def ambiguity_map(
    a: ComplexSequence,
    b: ComplexSequence,
    max_delay: float,
    doppler_grid=None,
    max_doppler_hz: float = 1000.0,
) -> AmbiguityMap:
    """Evaluate |X(tau, f_d)|^2 over integer lags within ``max_delay``.

    Parameters
    ----------
    a, b : ComplexSequence
        Pass the same object twice for the auto-ambiguity function.
    max_delay : float
        Largest |lag| in seconds; must not exceed the shorter duration.
    doppler_grid : array-like, optional
        Doppler frequencies in Hz.  Defaults to 201 points over
        ``+-max_doppler_hz``.  0 Hz is added if missing.
    """
    fs = _check_rates(a, b)
    shorter = min(a.duration, b.duration)
    if max_delay < 0 or max_delay > shorter * (1 + 1e-12):
        raise OutOfRangeError(f"max_delay {max_delay} s outside [0, {shorter}] s")
    if doppler_grid is None:
        doppler_grid = np.linspace(-max_doppler_hz, max_doppler_hz, DEFAULT_DOPPLER_POINTS)
    dop = np.unique(np.append(np.asarray(doppler_grid, dtype=float), 0.0))
    max_lag = min(int(np.floor(max_delay * fs + 1e-9)), min(len(a), len(b)) - 1)
    lags = np.arange(-max_lag, max_lag + 1)

    xa, xb = a.samples, b.samples
    n = np.arange(len(xa))
    # prod[l, n] = a[n] conj(b[n - lag_l]), zero where n - lag is off b's support
    idx = n[None, :] - lags[:, None]
    valid = (idx >= 0) & (idx < len(xb))
    prod = np.where(valid, xa[None, :] * np.conj(xb[np.clip(idx, 0, len(xb) - 1)]), 0.0)
    steer = np.exp(2j * np.pi * np.outer(dop, n) / fs)
    x = steer @ prod.T
    mags = np.abs(x) ** 2
    return AmbiguityMap(lags / fs, dop, mags, lags)


def laz_metrics(amap: AmbiguityMap, max_delay: float, max_doppler: float, is_auto: bool) -> LazMetrics:
    """Peak and sidelobe statistics inside ``|tau| <= max_delay, |f_d| <= max_doppler``.

    For auto maps the (0, 0) cell is the mainlobe and is excluded from the
    sidelobe search; a zone with no sidelobe energy reports an infinite ratio.
    For cross maps the peak is 0 and the ratio is ``None``.
    """
    tol = 1e-12
    if max_delay > np.max(np.abs(amap.delays)) * (1 + tol) + tol or max_doppler > np.max(np.abs(amap.dopplers)) * (1 + tol) + tol:
        raise OutOfRangeError(f"zone ({max_delay} s, {max_doppler} Hz) exceeds the map extent")
    dmask = np.abs(amap.dopplers) <= max_doppler * (1 + tol)
    tmask = np.abs(amap.delays) <= max_delay * (1 + tol) + tol / 1e3
    zone = amap.magnitudes[np.ix_(dmask, tmask)]
    if not is_auto:
        return LazMetrics(0.0, float(zone.max()), None, (max_delay, max_doppler))
    i0 = int(np.flatnonzero(amap.dopplers[dmask] == 0.0)[0])
    j0 = int(np.flatnonzero(amap.delays[tmask] == 0.0)[0])
    peak = float(zone[i0, j0])
    side = zone.copy()
    side[i0, j0] = -np.inf
    max_side = float(side.max()) if side.size > 1 else 0.0
    max_side = max(max_side, 0.0)
    ratio = float("inf") if max_side == 0.0 else float(10 * np.log10(peak / max_side))
    return LazMetrics(peak, max_side, ratio, (max_delay, max_doppler))


def write_map_csv(path: str | Path, amap: AmbiguityMap) -> Path:
    rows = (
        (float(fd), float(tau), float(amap.magnitudes[i, j]))
        for i, fd in enumerate(amap.dopplers)
        for j, tau in enumerate(amap.delays)
    )
    return write_csv(path, ("doppler_hz", "delay_s", "magnitude"), rows)


__all__ = [
    "AmbiguityMap",
    "LazMetrics",
    "ambiguity_map",
    "block_correlation",
    "correlation_lags",
    "cross_correlation",
    "laz_metrics",
    "max_doppler",
    "sync_correlation_matrix",
    "write_map_csv",
]
