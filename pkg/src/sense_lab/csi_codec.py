"""CSI quantization, feedback encoding and the binary report format.

Four scaling schemes map a complex CFR ``H[k, rx, tx]`` to signed ``n_b``-bit
I/Q integers.  Let ``L = 2**(n_b-1) - 1`` and ``m_H(k)`` be the largest
|I| or |Q| component on subcarrier k.

``legacy_11n``
    ``m_H(k)`` is rounded up onto a 3-bit dB grid below the matrix maximum and
    ``h_q = Round(h / M_H(k) * L)``.
``simplified_linear``
    One linear scale for the whole matrix.
``power_of_two``
    ``h_q = Round(alpha_H h 2**(n_b - n_p))`` with ``alpha_H`` the largest power
    of two keeping ``alpha_H m_H(k) <= 2**(n_p-1) - 1``.
``fractional``
    ``h_q = Round(alpha / beta * h)``, alpha from a configured set and beta a
    power of two, with the largest ratio not exceeding ``L / m_H(k)``.

``Round`` is round-half-up, ``floor(x + 0.5)``, on I and Q separately.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, FormatError, OutOfRangeError
from .rng import stream

SCHEMES = ("legacy_11n", "simplified_linear", "power_of_two", "fractional")
REPORT_TYPES = ("full_csi", "amplitude_only", "phase_only", "tcir", "differential")
# Exponent range searched for the fractional denominator beta = 2**e.
BETA_EXP_RANGE = (-64, 64)


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x) + 0.5)


@dataclass(frozen=True, eq=False)
class CsiMatrix:
    """Channel frequency response, ``entries[k, rx, tx]``."""

    entries: np.ndarray
    bandwidth: float = 20e6

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.complex128)
        if e.ndim == 1:
            e = e[:, None, None]
        elif e.ndim == 2:
            e = e[:, :, None]
        if e.ndim != 3 or e.shape[0] < 1 or 0 in e.shape:
            raise ConfigurationError(f"CSI entries must be (subcarrier, rx, tx), got shape {np.shape(self.entries)}")
        if not np.all(np.isfinite(e)):
            raise ConfigurationError("CSI entries must be finite")
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def n_subcarriers(self) -> int:
        return self.entries.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class QuantConfig:
    scheme: str
    n_b: int = 8
    n_p: int | None = None
    alpha_set: tuple[int, ...] | None = None
    legacy_step_db: float = 3.0
    legacy_levels: int = 8
    diff_saving: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown quantization scheme {self.scheme!r}")
        if not 2 <= self.n_b <= 16:
            raise ConfigurationError(f"n_b must be in 2..16, got {self.n_b}")
        if self.scheme == "power_of_two":
            n_p = self.n_b + 1 if self.n_p is None else self.n_p
            if n_p <= self.n_b:
                raise ConfigurationError(f"n_p ({n_p}) must exceed n_b ({self.n_b})")
            object.__setattr__(self, "n_p", int(n_p))
        if self.scheme == "fractional":
            if not self.alpha_set:
                raise ConfigurationError("fractional scheme needs a nonempty alpha_set")
            alphas = tuple(sorted({int(a) for a in self.alpha_set}))
            if alphas[0] < 1:
                raise ConfigurationError("alpha_set values must be positive integers")
            object.__setattr__(self, "alpha_set", alphas)
        if self.legacy_step_db <= 0 or self.legacy_levels < 1:
            raise ConfigurationError("legacy grid needs a positive step and at least one level")
        if self.diff_saving is None:
            # two bits saved by default, fewer when n_b is too small for that
            object.__setattr__(self, "diff_saving", min(2, self.n_b - 2))
        if not 0 <= self.diff_saving < self.n_b - 1:
            raise ConfigurationError(f"diff_saving must be in 0..{self.n_b - 2}")

    @property
    def full_scale(self) -> int:
        return 2 ** (self.n_b - 1) - 1


@dataclass(frozen=True, eq=False)
class QuantizedCsi:
    """Integer I/Q plus the scale descriptors needed to invert them.

    ``params`` holds per-scheme descriptors: ``m0``/``codes`` (legacy),
    ``scale`` (simplified), ``exponents`` (power of two), ``alphas``/``beta_exps``
    (fractional).
    """

    scheme: str
    n_b: int
    i: np.ndarray
    q: np.ndarray
    params: dict = field(default_factory=dict)

    def factors(self) -> np.ndarray:
        """Per-subcarrier multiplier applied before rounding."""
        return _factors(self.scheme, self.n_b, self.params, self.i.shape[0])

    def step(self) -> np.ndarray:
        M = _peaks(self.scheme, self.params, self.i.shape[0])
        if M is not None:
            return M / (2 ** (self.n_b - 1) - 1)
        if self.scheme == "power_of_two":
            return np.ldexp(1.0, -_pow2_shift(self.n_b, self.params))
        return 1.0 / self.factors()


def _component_max(e: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(e.real), np.abs(e.imag)).reshape(e.shape[0], -1).max(axis=1)


def _factors(scheme: str, n_b: int, p: dict, k: int) -> np.ndarray:
    L = 2 ** (n_b - 1) - 1
    M = _peaks(scheme, p, k)
    if M is not None:
        with np.errstate(over="ignore", divide="ignore"):
            return L / M
    if scheme == "power_of_two":
        return np.ldexp(1.0, _pow2_shift(n_b, p))
    if scheme == "fractional":
        return np.asarray(p["alphas"], dtype=float) / np.ldexp(1.0, np.asarray(p["beta_exps"], dtype=int))
    raise FormatError(f"unknown scheme tag {scheme!r}")


def _pow2_shift(n_b: int, p: dict) -> np.ndarray:
    return np.asarray(p["exponents"], dtype=int) + n_b - int(p["n_p"])


def _peaks(scheme: str, p: dict, k: int) -> np.ndarray | None:
    """Per-subcarrier full-scale magnitude M for the schemes that define one."""
    if scheme == "legacy_11n":
        return p["m0"] * 10.0 ** (-np.asarray(p["codes"]) * p["step_db"] / 20.0)
    if scheme == "simplified_linear":
        return np.full(k, float(p["scale"]))
    return None


def _legacy_params(m: np.ndarray, cfg: QuantConfig) -> dict:
    m0 = float(m.max())
    codes = np.full(m.size, cfg.legacy_levels - 1, dtype=int)
    nz = m > 0
    # Ceiling onto the dB grid: M_H = m0 * 10**(-code*step/20) >= m_H.
    with np.errstate(over="ignore"):
        ratio_db = 20.0 * np.log10(m0 / m[nz])
    codes[nz] = np.minimum(cfg.legacy_levels - 1, np.floor(ratio_db / cfg.legacy_step_db + 1e-12)).astype(int)
    M = m0 * 10.0 ** (-codes * cfg.legacy_step_db / 20.0)
    # Guard against the last ulp of the log10 round trip.
    codes = np.where(nz & (M < m), codes - 1, codes)
    return {"m0": m0, "codes": codes, "step_db": cfg.legacy_step_db, "levels": cfg.legacy_levels}


def power_of_two_exponents(m: np.ndarray, n_p: int) -> np.ndarray:
    """Largest e with ``2**e * m <= 2**(n_p-1) - 1``; zero subcarriers get ``n_p - 1``."""
    top = 2 ** (n_p - 1) - 1
    e = np.full(m.size, n_p - 1, dtype=int)
    nz = m > 0
    e[nz] = np.floor(np.log2(top) - np.log2(m[nz])).astype(int)
    e = np.where(nz & (np.ldexp(m, e) > top), e - 1, e)
    e = np.where(nz & (np.ldexp(m, e + 1) <= top), e + 1, e)
    return e


def fractional_ratio(m: np.ndarray, L: int, alpha_set) -> tuple[np.ndarray, np.ndarray]:
    """Per-subcarrier (alpha, beta exponent) with the largest ``alpha/2**e <= L/m``."""
    alphas = np.asarray(alpha_set, dtype=float)
    lo, hi = BETA_EXP_RANGE
    out_a = np.full(m.size, int(alphas[-1]), dtype=int)
    out_e = np.zeros(m.size, dtype=int)
    nz = np.flatnonzero(m > 0)
    if nz.size == 0:
        return out_a, out_e
    a2 = alphas[None, :]
    m2 = m[nz, None]

    def fits(e):
        # alpha * m <= L * 2**e, scaled so nothing overflows or underflows
        return a2 * np.ldexp(m2, -e) <= L

    # smallest e with alpha * m <= L * 2**e, nudged to be exact
    e = np.ceil(np.log2(a2) + np.log2(m2) - np.log2(L))
    e = np.clip(e, lo - 1, hi + 1).astype(int)
    e = np.where(~fits(e), e + 1, e)
    e = np.where(fits(e - 1), e - 1, e)
    e = np.clip(e, lo, hi)
    ok = fits(e)
    bad = ~ok.any(axis=1)
    if bad.any():
        idx = int(nz[np.argmax(bad)])
        raise OutOfRangeError(f"no alpha/beta ratio fits subcarrier {idx} (m_H = {m[idx]})")
    ratio = np.where(ok, alphas[None, :] / np.ldexp(1.0, e), -np.inf)
    best = np.argmax(ratio, axis=1)
    out_a[nz] = alphas[best].astype(int)
    out_e[nz] = e[np.arange(nz.size), best]
    return out_a, out_e


def quantize_csi(H: CsiMatrix, cfg: QuantConfig) -> QuantizedCsi:
    """Scale and round ``H`` to ``cfg.n_b``-bit I/Q integers."""
    e = H.entries
    m = _component_max(e)
    if not np.any(m > 0):
        raise DegenerateInputError("CSI matrix is all zero; scale is undefined")
    L = cfg.full_scale
    if cfg.scheme == "legacy_11n":
        params = _legacy_params(m, cfg)
    elif cfg.scheme == "simplified_linear":
        params = {"scale": float(m.max())}
    elif cfg.scheme == "power_of_two":
        params = {"exponents": power_of_two_exponents(m, cfg.n_p), "n_p": cfg.n_p}
    else:
        a, b = fractional_ratio(m, L, cfg.alpha_set)
        params = {"alphas": a, "beta_exps": b}
    M = _peaks(cfg.scheme, params, e.shape[0])
    if M is not None:
        # divide first: L / M overflows for subnormal peaks
        M = M[:, None, None]
        xi, xq = e.real / M * L, e.imag / M * L
    elif cfg.scheme == "power_of_two":
        # Exact power-of-two scaling, same bits as a binary shift.
        sh = _pow2_shift(cfg.n_b, params)[:, None, None]
        xi, xq = np.ldexp(e.real, sh), np.ldexp(e.imag, sh)
    else:
        f = _factors(cfg.scheme, cfg.n_b, params, e.shape[0])[:, None, None]
        xi, xq = e.real * f, e.imag * f
    qi = np.clip(round_half_up(xi), -L, L).astype(np.int64)
    qq = np.clip(round_half_up(xq), -L, L).astype(np.int64)
    return QuantizedCsi(cfg.scheme, cfg.n_b, qi, qq, params)


def dequantize_csi(q: QuantizedCsi, bandwidth: float = 20e6) -> CsiMatrix:
    if q.scheme not in SCHEMES:
        raise FormatError(f"unknown scheme tag {q.scheme!r}")
    if q.i.size == 0:
        raise FormatError("quantized payload is empty")
    M = _peaks(q.scheme, q.params, q.i.shape[0])
    if M is not None:
        L = 2 ** (q.n_b - 1) - 1
        return CsiMatrix((q.i + 1j * q.q) / L * M[:, None, None], bandwidth)
    if q.scheme == "power_of_two":
        sh = -_pow2_shift(q.n_b, q.params)[:, None, None]
        return CsiMatrix(np.ldexp(q.i.astype(float), sh) + 1j * np.ldexp(q.q.astype(float), sh), bandwidth)
    f = q.factors()[:, None, None]
    return CsiMatrix((q.i + 1j * q.q) / f, bandwidth)


def shift_round(x: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``floor(x * 2**shift + 0.5)`` for integer x using only integer shifts."""
    x = np.asarray(x, dtype=np.int64)
    s = np.broadcast_to(np.asarray(shift, dtype=np.int64), x.shape)
    left = np.left_shift(x, np.maximum(s, 0))
    r = np.maximum(-s, 0)
    half = np.where(r > 0, np.left_shift(np.int64(1), np.maximum(r - 1, 0)), 0)
    right = np.right_shift(x + half, r)
    return np.where(s >= 0, left, right)


def quantize_power_of_two_fixed(i_int: np.ndarray, q_int: np.ndarray, n_b: int, n_p: int):
    """Power-of-two quantizer on ``n_p``-bit integer CSI using shifts only.

    Returns ``(i, q, exponents)``; agrees bit for bit with :func:`quantize_csi`
    on the same integers.
    """
    i_int = np.asarray(i_int, dtype=np.int64)
    q_int = np.asarray(q_int, dtype=np.int64)
    k = i_int.shape[0]
    m = np.maximum(np.abs(i_int), np.abs(q_int)).reshape(k, -1).max(axis=1)
    top = (1 << (n_p - 1)) - 1
    e = np.full(k, n_p - 1, dtype=np.int64)
    for idx in np.flatnonzero(m > 0):
        mk = int(m[idx])
        # m * 2**e <= top, tested as m << e <= top or m <= top << -e
        ek = 0
        if mk <= top:
            while (mk << (ek + 1)) <= top:
                ek += 1
        else:
            while mk > (top << -ek):
                ek -= 1
        e[idx] = ek
    shape = (k,) + (1,) * (i_int.ndim - 1)
    sh = (e + n_b - n_p).reshape(shape)
    L = (1 << (n_b - 1)) - 1
    return np.clip(shift_round(i_int, sh), -L, L), np.clip(shift_round(q_int, sh), -L, L), e


# --------------------------------------------------------------------------
# Feedback reports
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeedbackReport:
    """Encoded feedback.

    ``payload`` is a :class:`QuantizedCsi` for ``full_csi``, quantized
    ``tcir`` and ``differential``; a complex tap array for unquantized
    ``tcir``; and an integer code array for the partial types.
    ``params`` carries the scale for partial and differential payloads.
    """

    report_type: str
    payload: object
    n_subcarriers: int
    tap_count: int = 0
    params: dict = field(default_factory=dict)


def _partial_levels(n_b: int) -> int:
    return 2 ** (n_b - 1) - 1


def encode_feedback(H: CsiMatrix, report_type: str, cfg: QuantConfig | None = None, L: int | None = None) -> FeedbackReport:
    """Encode ``H`` as one of the feedback report types.

    ``L`` (tap count) is required for ``tcir`` and rejected otherwise.  A
    ``None`` config on ``tcir`` keeps the taps unquantized.
    """
    if report_type not in REPORT_TYPES:
        raise ConfigurationError(f"unknown report type {report_type!r}")
    k = H.n_subcarriers
    if (L is not None) != (report_type == "tcir"):
        raise ConfigurationError("tap count L is given exactly when report_type is tcir")
    if report_type != "tcir" and cfg is None:
        raise ConfigurationError(f"{report_type} needs a quantization config")
    if report_type == "full_csi":
        return FeedbackReport("full_csi", quantize_csi(H, cfg), k)
    if report_type == "tcir":
        if not 1 <= L <= k:
            raise OutOfRangeError(f"tap count {L} outside 1..{k}")
        taps = np.fft.ifft(H.entries, axis=0)[:L]
        if cfg is None:
            return FeedbackReport("tcir", taps, k, L)
        return FeedbackReport("tcir", quantize_csi(CsiMatrix(taps, H.bandwidth), cfg), k, L)
    levels = _partial_levels(cfg.n_b)
    if report_type == "amplitude_only":
        amp = np.abs(H.entries)
        top = float(amp.max())
        if top == 0:
            raise DegenerateInputError("CSI matrix is all zero; amplitude scale is undefined")
        codes = round_half_up(amp / top * levels).astype(np.int64)
        return FeedbackReport("amplitude_only", codes, k, params={"n_b": cfg.n_b, "scale": top})
    if report_type == "phase_only":
        theta = np.angle(H.entries)
        theta = np.where(theta <= -np.pi, np.pi, theta)
        codes = np.clip(round_half_up(theta / np.pi * levels), -levels, levels).astype(np.int64)
        return FeedbackReport("phase_only", codes, k, params={"n_b": cfg.n_b})
    return _encode_differential(H, cfg)


def _encode_differential(H: CsiMatrix, cfg: QuantConfig) -> FeedbackReport:
    e = H.entries
    m = _component_max(e)
    if not np.any(m > 0):
        raise DegenerateInputError("CSI matrix is all zero; scale is undefined")
    full = cfg.full_scale
    s = full / float(m.max())
    dmax = 2 ** (cfg.n_b - cfg.diff_saving - 1) - 1
    xi, xq = e.real * s, e.imag * s
    qi = np.zeros(e.shape, dtype=np.int64)
    qq = np.zeros(e.shape, dtype=np.int64)
    sat = np.zeros(e.shape[0], dtype=bool)
    qi[0] = round_half_up(xi[0])
    qq[0] = round_half_up(xq[0])
    acc_i, acc_q = qi[0].copy(), qq[0].copy()
    for k in range(1, e.shape[0]):
        # Closed loop: difference against the reconstructed previous value.
        di = round_half_up(xi[k] - acc_i)
        dq = round_half_up(xq[k] - acc_q)
        ci, cq = np.clip(di, -dmax, dmax), np.clip(dq, -dmax, dmax)
        sat[k] = bool(np.any(ci != di) or np.any(cq != dq))
        qi[k], qq[k] = ci, cq
        acc_i = acc_i + qi[k]
        acc_q = acc_q + qq[k]
    params = {"n_b": cfg.n_b, "scale": float(m.max()), "diff_saving": cfg.diff_saving, "saturated": sat}
    payload = QuantizedCsi("simplified_linear", cfg.n_b, qi, qq, {"scale": float(m.max())})
    return FeedbackReport("differential", payload, e.shape[0], params=params)


def decode_feedback(r: FeedbackReport, n_subcarriers: int | None = None, bandwidth: float = 20e6):
    """Invert :func:`encode_feedback`.

    Returns a :class:`CsiMatrix` for ``full_csi``, ``tcir`` and
    ``differential``; a real array (amplitudes or radians) for the partial
    types.
    """
    n = r.n_subcarriers if n_subcarriers is None else int(n_subcarriers)
    if r.report_type not in REPORT_TYPES:
        raise FormatError(f"unknown report type {r.report_type!r}")
    p = r.payload
    if p is None or (isinstance(p, np.ndarray) and p.size == 0) or (isinstance(p, QuantizedCsi) and p.i.size == 0):
        raise FormatError(f"{r.report_type} report has an empty payload")
    if r.report_type == "full_csi":
        if not isinstance(p, QuantizedCsi):
            raise FormatError("full_csi payload must be quantized CSI")
        return dequantize_csi(p, bandwidth)
    if r.report_type == "tcir":
        if isinstance(p, QuantizedCsi):
            taps = dequantize_csi(p).entries
        elif isinstance(p, np.ndarray) and np.iscomplexobj(p):
            taps = p
        else:
            raise FormatError("tcir payload must be complex taps or quantized CSI")
        if taps.shape[0] != r.tap_count or r.tap_count > n:
            raise FormatError(f"tcir payload has {taps.shape[0]} taps, header says {r.tap_count} (n = {n})")
        padded = np.zeros((n,) + taps.shape[1:], dtype=complex)
        padded[: taps.shape[0]] = taps
        return CsiMatrix(np.fft.fft(padded, axis=0), bandwidth)
    if r.report_type == "differential":
        if not isinstance(p, QuantizedCsi):
            raise FormatError("differential payload must be quantized CSI")
        s = (2 ** (p.n_b - 1) - 1) / r.params["scale"]
        acc = np.cumsum(p.i, axis=0) + 1j * np.cumsum(p.q, axis=0)
        return CsiMatrix(acc / s, bandwidth)
    if not isinstance(p, np.ndarray) or np.iscomplexobj(p):
        raise FormatError(f"{r.report_type} payload must be an integer code array")
    levels = _partial_levels(r.params["n_b"])
    if r.report_type == "amplitude_only":
        return p / levels * r.params["scale"]
    return p / levels * np.pi


def csi_variation(current: CsiMatrix, previous: CsiMatrix) -> float:
    """Normalized correlation distance ``1 - |<c, p>| / (|c| |p|)`` in [0, 1]."""
    c, p = current.entries, previous.entries
    if c.shape != p.shape:
        raise ConfigurationError(f"CSI shapes differ: {c.shape} vs {p.shape}")
    nc, np_ = np.linalg.norm(c), np.linalg.norm(p)
    if nc == 0 or np_ == 0:
        raise DegenerateInputError("csi_variation is undefined for a zero-norm matrix")
    rho = abs(np.vdot(p.ravel(), c.ravel())) / (nc * np_)
    return float(min(1.0, max(0.0, 1.0 - rho)))


# --------------------------------------------------------------------------
# Binary serialization
# --------------------------------------------------------------------------

_TYPE_TAG = {t: i + 1 for i, t in enumerate(REPORT_TYPES)}
_SCHEME_TAG = {s: i + 1 for i, s in enumerate(SCHEMES)}
_SCHEME_TAG["partial"] = 0x10
_SCHEME_TAG["raw"] = 0xFF
_FLAG_SATURATED = 0x01


def _scale_vector(r: FeedbackReport) -> tuple[str, int, list[float]]:
    """Flatten the scale descriptors into (scheme tag, n_b, float list)."""
    p = r.payload
    if r.report_type in ("amplitude_only", "phase_only"):
        return "partial", r.params["n_b"], [r.params.get("scale", 0.0)]
    if isinstance(p, np.ndarray):
        return "raw", 0, []
    prm = p.params
    if r.report_type == "differential":
        return p.scheme, p.n_b, [prm["scale"], float(r.params["diff_saving"])] + [float(x) for x in r.params["saturated"]]
    if p.scheme == "legacy_11n":
        vec = [prm["m0"], prm["step_db"], float(prm["levels"])] + [float(c) for c in prm["codes"]]
    elif p.scheme == "simplified_linear":
        vec = [prm["scale"]]
    elif p.scheme == "power_of_two":
        vec = [float(prm["n_p"])] + [float(x) for x in prm["exponents"]]
    else:
        vec = [float(x) for x in prm["alphas"]] + [float(x) for x in prm["beta_exps"]]
    return p.scheme, p.n_b, vec


def _int_dtype(n_b: int) -> str:
    return {1: "<i1", 2: "<i2"}[(n_b + 7) // 8]


def serialize_report(r: FeedbackReport) -> bytes:
    """Length-prefixed little-endian encoding of a feedback report.

    Layout: ``u32 body_len`` then ``u8 type, u8 scheme, u8 n_b, u8 flags,
    u32 ndim, u32 dims..., u32 tap_count, u32 n_subcarriers, u32 n_scale,
    f64 scales..., samples``.  Samples are I/Q integers as two's complement
    of ``ceil(n_b/8)`` bytes, codes for partial types, or f64 I/Q pairs for
    unquantized taps.
    """
    scheme, n_b, scales = _scale_vector(r)
    p = r.payload
    flags = 0
    if r.report_type == "differential" and np.any(r.params["saturated"]):
        flags |= _FLAG_SATURATED
    if isinstance(p, QuantizedCsi):
        dims = p.i.shape
        inter = np.stack([p.i.ravel(), p.q.ravel()], axis=1).ravel()
        data = inter.astype(_int_dtype(n_b)).tobytes()
    elif scheme == "raw":
        dims = p.shape
        inter = np.stack([p.real.ravel(), p.imag.ravel()], axis=1).ravel()
        data = inter.astype("<f8").tobytes()
    else:
        dims = p.shape
        data = p.ravel().astype(_int_dtype(n_b)).tobytes()
    head = struct.pack("<BBBBI", _TYPE_TAG[r.report_type], _SCHEME_TAG[scheme], n_b, flags, len(dims))
    head += struct.pack(f"<{len(dims)}I", *dims)
    head += struct.pack("<III", r.tap_count, r.n_subcarriers, len(scales))
    head += np.asarray(scales, dtype="<f8").tobytes()
    body = head + data
    return struct.pack("<I", len(body)) + body


def deserialize_report(buf: bytes) -> FeedbackReport:
    try:
        return _deserialize(memoryview(bytes(buf)))
    except (struct.error, KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed feedback report: {exc}") from exc


def _deserialize(mv: memoryview) -> FeedbackReport:
    if len(mv) < 4:
        raise FormatError("feedback report shorter than its length prefix")
    (body_len,) = struct.unpack_from("<I", mv, 0)
    if body_len != len(mv) - 4:
        raise FormatError(f"length prefix {body_len} does not match body size {len(mv) - 4}")
    off = 4
    t, s, n_b, flags, ndim = struct.unpack_from("<BBBBI", mv, off)
    off += 8
    dims = struct.unpack_from(f"<{ndim}I", mv, off)
    off += 4 * ndim
    tap_count, n_sub, n_scale = struct.unpack_from("<III", mv, off)
    off += 12
    scales = np.frombuffer(mv, dtype="<f8", count=n_scale, offset=off).astype(float)
    off += 8 * n_scale
    rtype = {v: k for k, v in _TYPE_TAG.items()}.get(t)
    scheme = {v: k for k, v in _SCHEME_TAG.items()}.get(s)
    if rtype is None or scheme is None:
        raise FormatError(f"unknown type/scheme tag {t}/{s}")
    count = int(np.prod(dims)) if dims else 0
    if count == 0:
        raise FormatError("feedback report has an empty payload")
    rest = mv[off:]
    if scheme == "raw":
        vals = np.frombuffer(rest, dtype="<f8")
        if vals.size != 2 * count:
            raise FormatError("raw tap payload size mismatch")
        taps = (vals[0::2] + 1j * vals[1::2]).reshape(dims)
        return FeedbackReport(rtype, taps, n_sub, tap_count)
    dt = _int_dtype(n_b)
    if scheme == "partial":
        codes = np.frombuffer(rest, dtype=dt).astype(np.int64)
        if codes.size != count:
            raise FormatError("partial payload size mismatch")
        params = {"n_b": n_b}
        if rtype == "amplitude_only":
            params["scale"] = float(scales[0])
        return FeedbackReport(rtype, codes.reshape(dims), n_sub, tap_count, params)
    vals = np.frombuffer(rest, dtype=dt).astype(np.int64)
    if vals.size != 2 * count:
        raise FormatError("I/Q payload size mismatch")
    qi, qq = vals[0::2].reshape(dims), vals[1::2].reshape(dims)
    k = dims[0]
    if rtype == "differential":
        sat = scales[2:].astype(bool)
        if bool(flags & _FLAG_SATURATED) != bool(sat.any()):
            raise FormatError("saturation flag disagrees with per-subcarrier flags")
        params = {"n_b": n_b, "scale": float(scales[0]), "diff_saving": int(scales[1]), "saturated": sat}
        payload = QuantizedCsi(scheme, n_b, qi, qq, {"scale": float(scales[0])})
        return FeedbackReport(rtype, payload, n_sub, tap_count, params)
    if scheme == "legacy_11n":
        prm = {"m0": float(scales[0]), "step_db": float(scales[1]), "levels": int(scales[2]), "codes": scales[3 : 3 + k].astype(int)}
    elif scheme == "simplified_linear":
        prm = {"scale": float(scales[0])}
    elif scheme == "power_of_two":
        prm = {"n_p": int(scales[0]), "exponents": scales[1 : 1 + k].astype(int)}
    else:
        prm = {"alphas": scales[:k].astype(int), "beta_exps": scales[k : 2 * k].astype(int)}
    return FeedbackReport(rtype, QuantizedCsi(scheme, n_b, qi, qq, prm), n_sub, tap_count)


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------


def random_csi_ensemble(count: int, n_subcarriers: int = 64, seed: int = 0, n_rx: int = 1, n_tx: int = 1) -> list[CsiMatrix]:
    """Seeded i.i.d. complex Gaussian CFRs (unit average power per entry)."""
    g = stream(seed, "csi_ensemble", n_subcarriers, n_rx, n_tx)
    shape = (count, n_subcarriers, n_rx, n_tx)
    x = (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / np.sqrt(2)
    return [CsiMatrix(h) for h in x]


def ensemble_error(ensemble, cfg: QuantConfig) -> float:
    """Mean absolute I/Q component reconstruction error."""
    total, n = 0.0, 0
    for H in ensemble:
        d = dequantize_csi(quantize_csi(H, cfg)).entries - H.entries
        total += float(np.abs(d.real).sum() + np.abs(d.imag).sum())
        n += 2 * d.size
    return total / n
