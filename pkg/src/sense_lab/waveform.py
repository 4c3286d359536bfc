"""Sensing PHY sequences: Golay pairs, CE0/CE1, Sync subfields and sensing PPDUs.

All chip-level content is real ``+1/-1`` stored as ``complex128`` (no pulse
shaping).  Golay pairs come from the recursive delay/weight construction;
exact standard constants can be injected from a sequence-constants file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError, OutOfRangeError, StructuralError

#: Sample rate used when none is given (20 MHz, the AF demo bandwidth).
DEFAULT_SAMPLE_RATE = 20e6
#: DMG single-carrier chip rate.
DMG_CHIP_RATE = 1.76e9

GOLAY_BLOCK = 128
SYNC_LEN = 8 * GOLAY_BLOCK
CE_LEN = 8 * GOLAY_BLOCK

# Delay vectors per order.  Order 7 uses the DMG-style permutation, others
# ascending powers of two; any permutation keeps the pair complementary.
_DELAYS = {k: [2**i for i in range(k)] for k in range(1, 11)}
_DELAYS[7] = [1, 8, 2, 4, 16, 32, 64]


def _weights(order: int, pair_index: int) -> list[int]:
    w = [-1] * order
    if order > 4:
        w[4] = 1
    if pair_index == 8:
        # Flipping the first weight turns the pair into a Golay mate of pair 7.
        w[0] = -w[0]
    return w


# Row r of this matrix weights the eight 128-chip blocks of the Sync subfield
# sent to STA r.
SYNC_COEFFICIENTS = np.array(
    [
        [1, -1, 1, -1, 1, 1, 1, 1],
        [1, -1, 1, -1, 1, 1, 1, 1],
        [1, 1, -1, -1, 1, -1, -1, 1],
        [1, 1, -1, -1, 1, -1, -1, 1],
        [-1, 1, -1, 1, 1, 1, 1, 1],
        [-1, 1, -1, 1, 1, 1, 1, 1],
        [1, -1, -1, 1, -1, -1, 1, 1],
        [1, -1, -1, 1, -1, -1, 1, 1],
    ],
    dtype=int,
)
SYNC_COEFFICIENTS.flags.writeable = False

# (Gi, Gj) base sequences for r = 1..8, as (letter, pair_index).
_SYNC_BASES = {
    1: (("a", 7), ("b", 7)),
    2: (("a", 8), ("b", 8)),
    3: (("a", 7), ("b", 7)),
    4: (("a", 8), ("b", 8)),
    5: (("b", 7), ("a", 7)),
    6: (("b", 8), ("a", 8)),
    7: (("b", 7), ("a", 7)),
    8: (("b", 8), ("a", 8)),
}

_CE_SIGNS = (1, -1, 1, -1, 1, 1, 1, 1)


@dataclass(frozen=True, eq=False)
class ComplexSequence:
    """Baseband sampled waveform.

    Attributes
    ----------
    samples : numpy.ndarray
        Complex amplitudes (read-only copy).
    sample_rate : float
        Samples per second.
    """

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.complex128).ravel()
        if s.size == 0:
            raise ConfigurationError("sequence must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ConfigurationError("sequence samples must be finite")
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def scaled(self, factor: complex) -> "ComplexSequence":
        return ComplexSequence(self.samples * factor, self.sample_rate)

    def with_rate(self, sample_rate: float) -> "ComplexSequence":
        return ComplexSequence(self.samples, sample_rate)

    def equals(self, other: "ComplexSequence") -> bool:
        return (
            self.sample_rate == other.sample_rate
            and len(self) == len(other)
            and bool(np.array_equal(self.samples, other.samples))
        )


@dataclass(frozen=True, eq=False)
class GolayPair:
    a: ComplexSequence
    b: ComplexSequence
    pair_index: int

    def __post_init__(self):
        n = len(self.a)
        if len(self.b) != n or n < 2 or n & (n - 1):
            raise StructuralError(f"Golay pair halves must share a power-of-two length >= 2, got {len(self.a)}/{len(self.b)}")
        acf = aperiodic_autocorrelation(self.a.samples) + aperiodic_autocorrelation(self.b.samples)
        side = np.delete(acf, n - 1)
        if not np.allclose(acf[n - 1], 2 * n) or np.any(np.abs(side) > 1e-9):
            raise StructuralError(f"sequences for pair {self.pair_index} are not complementary")

    @property
    def length(self) -> int:
        return len(self.a)


def aperiodic_autocorrelation(x: np.ndarray) -> np.ndarray:
    """All-lag aperiodic autocorrelation, lags ``-(N-1) .. N-1``."""
    x = np.asarray(x)
    return np.correlate(x, x, mode="full")


def golay_recursion(delays: Sequence[int], weights: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Recursive delay/weight Golay construction.

    ``a_k(n) = w_k a_{k-1}(n) + b_{k-1}(n - D_k)`` and
    ``b_k(n) = w_k a_{k-1}(n) - b_{k-1}(n - D_k)``, started from a unit impulse.
    ``delays`` must be a permutation of ``1, 2, ..., 2**(k-1)``.
    """
    k = len(delays)
    if sorted(delays) != [2**i for i in range(k)]:
        raise ConfigurationError(f"delays must permute powers of two up to 2**{k - 1}, got {list(delays)}")
    if len(weights) != k or any(w not in (1, -1) for w in weights):
        raise ConfigurationError("weights must be +1/-1, one per delay")
    n = 2**k
    a = np.zeros(n)
    b = np.zeros(n)
    a[0] = b[0] = 1.0
    for d, w in zip(delays, weights):
        shifted = np.roll(b, d)
        shifted[:d] = 0.0
        a, b = w * a + shifted, w * a - shifted
    return a, b


def generate_golay_pair(
    order: int,
    pair_index: int = 7,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    constants: Mapping[str, np.ndarray] | None = None,
) -> GolayPair:
    """Build a complementary pair of length ``2**order``.

    Parameters
    ----------
    order : int
        Exponent k in 1..10.
    pair_index : int
        7 or 8; the two indices use different weight vectors, so they give
        distinct pairs (at order 7 pair 8 is a Golay mate of pair 7).
    constants : mapping, optional
        Sequences keyed ``"Ga<idx>"``/``"Gb<idx>"``; when present and of the
        right length they replace the recursive construction.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 10:
        raise OutOfRangeError(f"Golay order must be an integer in 1..10, got {order!r}")
    if pair_index not in (7, 8):
        raise OutOfRangeError(f"pair_index must be 7 or 8, got {pair_index!r}")
    n = 2**order
    if constants and f"Ga{pair_index}" in constants:
        a = np.asarray(constants[f"Ga{pair_index}"], dtype=float)
        b = np.asarray(constants[f"Gb{pair_index}"], dtype=float)
        if a.size != n or b.size != n:
            raise ConfigurationError(f"constants Ga{pair_index}/Gb{pair_index} have length {a.size}/{b.size}, expected {n}")
    else:
        a, b = golay_recursion(_DELAYS[order], _weights(order, pair_index))
    return GolayPair(ComplexSequence(a, sample_rate), ComplexSequence(b, sample_rate), pair_index)


def load_sequence_constants(path: str | Path) -> dict[str, np.ndarray]:
    """Read a sequence-constants file.

    One sequence per line: a name, then comma-separated ``+1``/``-1`` values.
    The name may be separated from the values by a comma or whitespace.  Blank
    lines and lines starting with ``#`` are ignored.
    """
    out: dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, sep, rest = line.partition(",")
        if " " in head.strip() or "\t" in head.strip():
            head, _, more = head.strip().partition(" ")
            rest = more + sep + rest
        name = head.strip()
        try:
            values = [int(tok) for tok in rest.replace(" ", "").split(",") if tok]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer value in sequence {name!r}") from exc
        if not name or not values:
            raise FormatError(f"{path}:{lineno}: expected a name followed by values")
        if any(v not in (1, -1) for v in values):
            raise FormatError(f"{path}:{lineno}: sequence {name!r} contains values other than +1/-1")
        out[name] = np.array(values, dtype=float)
    return out


def write_sequence_constants(path: str | Path, sequences: Mapping[str, np.ndarray]) -> None:
    lines = []
    for name, values in sequences.items():
        vals = np.real(np.asarray(values)).astype(int)
        lines.append(name + "," + ",".join(f"{v:+d}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _golay_128(sample_rate, constants):
    p7 = generate_golay_pair(7, 7, sample_rate, constants)
    p8 = generate_golay_pair(7, 8, sample_rate, constants)
    return {("a", 7): p7.a.samples, ("b", 7): p7.b.samples, ("a", 8): p8.a.samples, ("b", 8): p8.b.samples}


def build_ce_sequence(variant: str, sample_rate: float = DEFAULT_SAMPLE_RATE, constants=None) -> ComplexSequence:
    """CE0 (pair 7) or CE1 (pair 8): ``[Ga, -Gb, Ga, -Gb, Ga, Gb, Ga, Gb]``."""
    idx = {"CE0": 7, "CE1": 8}.get(str(variant).upper())
    if idx is None:
        raise ConfigurationError(f"unknown CE variant {variant!r}; expected CE0 or CE1")
    g = _golay_128(sample_rate, constants)
    blocks = [s * (g[("a", idx)] if c % 2 == 0 else g[("b", idx)]) for c, s in enumerate(_CE_SIGNS)]
    return ComplexSequence(np.concatenate(blocks), sample_rate)


def sync_blocks(sta_index: int, sample_rate: float = DEFAULT_SAMPLE_RATE, constants=None) -> list[np.ndarray]:
    """The eight weighted 128-chip blocks of the Sync subfield for ``sta_index``.

    Blocks alternate Gi, Gj (even positions Gi) and block c is multiplied by
    ``SYNC_COEFFICIENTS[r-1, c]``.
    """
    if not isinstance(sta_index, (int, np.integer)) or not 1 <= sta_index <= 8:
        raise OutOfRangeError(f"Sync STA index must be in 1..8, got {sta_index!r}")
    g = _golay_128(sample_rate, constants)
    gi, gj = _SYNC_BASES[int(sta_index)]
    row = SYNC_COEFFICIENTS[sta_index - 1]
    return [row[c] * (g[gi] if c % 2 == 0 else g[gj]) for c in range(8)]


def build_sync_subfield(sta_index: int, sample_rate: float = DEFAULT_SAMPLE_RATE, constants=None) -> ComplexSequence:
    return ComplexSequence(np.concatenate(sync_blocks(sta_index, sample_rate, constants)), sample_rate)


# --------------------------------------------------------------------------
# Sensing PPDUs
# --------------------------------------------------------------------------

PPDU_KINDS = ("standard_sensing", "brp_with_trn", "multistatic_sensing")

#: Preamble placeholder length in chips (STF-like: 17 Golay blocks).
PREAMBLE_LEN = 17 * GOLAY_BLOCK
#: TRN subfield: [Ga, -Gb, Ga, Gb, Ga, -Gb] of pair 7.
TRN_SUBFIELD_LEN = 6 * GOLAY_BLOCK
#: One TRN-Unit is one subfield long in this model.
TRN_UNIT_LEN = TRN_SUBFIELD_LEN


@dataclass(frozen=True)
class PpduSpec:
    kind: str
    p_count: int = 0
    m_count: int = 0
    awv_schedule: tuple = ()
    sync_sta_indices: tuple = ()
    padding_len: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "awv_schedule", tuple(self.awv_schedule))
        object.__setattr__(self, "sync_sta_indices", tuple(int(i) for i in self.sync_sta_indices))

    def validate(self, trn_unit_len: int = TRN_UNIT_LEN) -> int:
        """Check the invariants; return the padding length to use."""
        if self.kind not in PPDU_KINDS:
            raise StructuralError(f"unknown PPDU kind {self.kind!r}")
        if self.p_count < 0 or self.m_count < 0:
            raise StructuralError(f"TRN subfield counts must be >= 0 (P={self.p_count}, M={self.m_count})")
        if len(self.awv_schedule) != self.m_count:
            raise StructuralError(
                f"awv_schedule has {len(self.awv_schedule)} entries but m_count is {self.m_count}"
            )
        if self.kind != "multistatic_sensing":
            if self.sync_sta_indices or self.padding_len:
                raise StructuralError(f"Sync fields and padding only exist in multistatic PPDUs, not {self.kind}")
            return 0
        idx = self.sync_sta_indices
        if not idx:
            raise StructuralError("multistatic PPDU needs at least one Sync STA index")
        if len(set(idx)) != len(idx) or any(not 1 <= i <= 8 for i in idx):
            raise StructuralError(f"Sync STA indices must be distinct values in 1..8, got {list(idx)}")
        sync_len = SYNC_LEN * len(idx)
        if self.padding_len is None:
            return required_padding(len(idx), trn_unit_len)
        total = sync_len + self.padding_len
        if self.padding_len < 0 or total % trn_unit_len:
            raise StructuralError(
                f"Sync fields plus padding span {total} samples, not a multiple of the TRN-Unit length {trn_unit_len}"
            )
        return self.padding_len


def required_padding(n_sync: int, trn_unit_len: int = TRN_UNIT_LEN) -> int:
    return (-n_sync * SYNC_LEN) % trn_unit_len


@dataclass(frozen=True)
class PpduField:
    name: str
    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class TrnSubfield:
    kind: str  # "P" or "M"
    index: int
    awv: object
    start: int
    stop: int


@dataclass(frozen=True, eq=False)
class SensingPpdu:
    sequence: ComplexSequence
    fields: tuple[PpduField, ...]
    trn_subfields: tuple[TrnSubfield, ...] = field(default=())
    tx_sta_index: int = 0

    def field(self, name: str) -> PpduField:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def fields_named(self, prefix: str) -> list[PpduField]:
        return [f for f in self.fields if f.name.split(":")[0] == prefix]

    def segment(self, name: str) -> np.ndarray:
        f = self.field(name)
        return self.sequence.samples[f.start : f.stop]


def preamble_placeholder(length: int = PREAMBLE_LEN, sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    ga = generate_golay_pair(7, 7, sample_rate).a.samples
    reps = -(-length // GOLAY_BLOCK)
    return np.tile(ga, reps)[:length]


def trn_subfield(sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    p = generate_golay_pair(7, 7, sample_rate)
    a, b = p.a.samples, p.b.samples
    return np.concatenate([a, -b, a, b, a, -b])


def assemble_sensing_ppdu(
    spec: PpduSpec,
    tx_sta_index: int = 0,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    preamble_len: int = PREAMBLE_LEN,
    trn_unit_len: int = TRN_UNIT_LEN,
) -> SensingPpdu:
    """Concatenate preamble, Sync fields (+padding) and the TRN field.

    The returned field map covers the sample stream with no gaps or overlap:
    ``preamble``, then ``sync:<r>`` per Sync STA and ``padding`` (multistatic
    only), then ``trn``.  P subfields carry the data-field AWV (``"data"``, or
    ``"rx:<r>"`` cycling over the Sync STAs in a multistatic PPDU); M
    subfields carry the ``awv_schedule`` entries in order.
    """
    padding = spec.validate(trn_unit_len)
    parts: list[np.ndarray] = []
    fields: list[PpduField] = []
    cursor = 0

    def add(name, samples):
        nonlocal cursor
        parts.append(samples)
        fields.append(PpduField(name, cursor, cursor + samples.size))
        cursor += samples.size

    add("preamble", preamble_placeholder(preamble_len, sample_rate))
    if spec.kind == "multistatic_sensing":
        for r in spec.sync_sta_indices:
            add(f"sync:{r}", build_sync_subfield(r, sample_rate).samples)
        ga = generate_golay_pair(7, 7, sample_rate).a.samples
        add("padding", np.resize(ga, padding) if padding else np.zeros(0, complex))

    unit = trn_subfield(sample_rate)
    subfields = []
    trn_start = cursor
    trn_parts = []
    pos = trn_start
    for i in range(spec.p_count):
        if spec.kind == "multistatic_sensing":
            awv = f"rx:{spec.sync_sta_indices[i % len(spec.sync_sta_indices)]}"
        else:
            awv = "data"
        subfields.append(TrnSubfield("P", i, awv, pos, pos + unit.size))
        trn_parts.append(unit)
        pos += unit.size
    for i, awv in enumerate(spec.awv_schedule):
        subfields.append(TrnSubfield("M", i, awv, pos, pos + unit.size))
        trn_parts.append(unit)
        pos += unit.size
    add("trn", np.concatenate(trn_parts) if trn_parts else np.zeros(0, complex))

    seq = ComplexSequence(np.concatenate(parts), sample_rate)
    return SensingPpdu(seq, tuple(fields), tuple(subfields), tx_sta_index)
