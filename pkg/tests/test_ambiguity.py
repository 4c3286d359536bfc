import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sense_lab.ambiguity import (
    ambiguity_map,
    block_correlation,
    correlation_lags,
    cross_correlation,
    laz_metrics,
    max_doppler,
    sync_correlation_matrix,
    write_map_csv,
)
from sense_lab.errors import ConfigurationError, OutOfRangeError
from sense_lab.io import read_csv
from sense_lab.waveform import DMG_CHIP_RATE, ComplexSequence, build_ce_sequence, build_sync_subfield

# Max |aperiodic cross-correlation| over all lags between Sync subfields,
# from a brute-force correlation of the constructed sequences.
APERIODIC_SYNC_MAX = np.array(
    [
        [1024, 129, 256, 99, 896, 165, 384, 93],
        [129, 1024, 99, 256, 165, 896, 93, 384],
        [256, 99, 1024, 124, 384, 84, 896, 132],
        [99, 256, 124, 1024, 84, 384, 132, 896],
        [896, 165, 384, 84, 1024, 129, 512, 57],
        [165, 896, 84, 384, 129, 1024, 57, 512],
        [384, 93, 896, 132, 512, 57, 1024, 116],
        [93, 384, 132, 896, 57, 512, 116, 1024],
    ]
)


def direct_af(a, b, lag, fd, fs):
    """Oracle: sum_n a[n] conj(b[n - lag]) exp(j 2 pi fd n / fs)."""
    total = 0j
    for n in range(len(a)):
        m = n - lag
        if 0 <= m < len(b):
            total += a[n] * np.conj(b[m]) * np.exp(2j * np.pi * fd * n / fs)
    return abs(total) ** 2


def test_max_doppler_example():
    assert max_doppler(60e9, 5.0) == 1000.0


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False), min_size=3, max_size=12),
    st.floats(min_value=-3e5, max_value=3e5),
)
def test_ambiguity_map_matches_direct_sum(xs, fd):
    fs = 1e6
    a = ComplexSequence(np.array(xs), fs)
    b = ComplexSequence(np.roll(np.array(xs), 1) + 0.5, fs)
    amap = ambiguity_map(a, b, (len(xs) - 1) / fs, doppler_grid=[fd])
    i = int(np.flatnonzero(amap.dopplers == fd)[0])
    for j, lag in enumerate(amap.lags):
        want = direct_af(a.samples, b.samples, int(lag), fd, fs)
        assert amap.magnitudes[i, j] == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_aaf_peak_is_energy_squared():
    ce0 = build_ce_sequence("CE0", DMG_CHIP_RATE)
    amap = ambiguity_map(ce0, ce0, 32 / DMG_CHIP_RATE)
    assert amap.cell(0.0, 0.0) == pytest.approx(ce0.energy**2)
    assert amap.cell(0.0, 0.0) == 1024**2


def test_zero_doppler_row_is_squared_correlation():
    ce0 = build_ce_sequence("CE0", DMG_CHIP_RATE)
    n = len(ce0)
    amap = ambiguity_map(ce0, ce0, (n - 1) / DMG_CHIP_RATE)
    acf = cross_correlation(ce0, ce0) ** 2
    assert np.allclose(amap.zero_doppler_row(), acf, rtol=1e-9, atol=1e-6)
    assert np.array_equal(amap.lags, correlation_lags(n, n))


def test_ambiguity_symmetry():
    ce0 = build_ce_sequence("CE0", DMG_CHIP_RATE)
    amap = ambiguity_map(ce0, ce0, 64 / DMG_CHIP_RATE)
    assert np.allclose(amap.magnitudes, amap.magnitudes[::-1, ::-1], rtol=1e-9, atol=1e-6)


def test_zero_doppler_added_to_grid():
    ce0 = build_ce_sequence("CE0")
    amap = ambiguity_map(ce0, ce0, 0.0, doppler_grid=[-5.0, 5.0])
    assert list(amap.dopplers) == [-5.0, 0.0, 5.0]


def test_max_delay_beyond_duration():
    ce0 = build_ce_sequence("CE0")
    with pytest.raises(OutOfRangeError):
        ambiguity_map(ce0, ce0, 2 * ce0.duration)


def test_sample_rate_mismatch():
    with pytest.raises(ConfigurationError):
        cross_correlation(build_ce_sequence("CE0", 1.0), build_ce_sequence("CE0", 2.0))


def test_block_correlation_sync_pattern():
    mat = sync_correlation_matrix("block")
    assert np.array_equal(np.diag(mat), np.full(8, 1024.0))
    assert np.all(mat[~np.eye(8, dtype=bool)] == 0)


def test_block_auto_correlation_has_no_sidelobes():
    s = build_sync_subfield(3)
    out = block_correlation(s, s)
    assert out[127] == 1024
    assert np.all(np.delete(out, 127) == 0)


def test_aperiodic_sync_regression_constants():
    mat = sync_correlation_matrix("aperiodic")
    assert np.array_equal(np.round(mat).astype(int), APERIODIC_SYNC_MAX)


def test_full_aperiodic_zero_at_all_lags_is_unattainable():
    # At lag +-(N-1) only one product of two +-1 chips survives.
    for i in range(1, 9):
        for j in range(1, 9):
            x = cross_correlation(build_sync_subfield(i), build_sync_subfield(j))
            assert x[0] == 1 and x[-1] == 1


def test_laz_metrics_auto_and_cross():
    fs = DMG_CHIP_RATE
    ce0, ce1 = build_ce_sequence("CE0", fs), build_ce_sequence("CE1", fs)
    auto = laz_metrics(ambiguity_map(ce0, ce0, 64 / fs), 32 / fs, 1000.0, True)
    assert auto.peak == 1024**2
    assert auto.max_sidelobe < auto.peak
    cross = laz_metrics(ambiguity_map(ce0, ce1, 64 / fs), 32 / fs, 1000.0, False)
    assert cross.peak == 0.0 and cross.peak_to_sidelobe_db is None


def test_laz_zone_larger_than_map():
    ce0 = build_ce_sequence("CE0")
    amap = ambiguity_map(ce0, ce0, 8 / 20e6)
    with pytest.raises(OutOfRangeError):
        laz_metrics(amap, 16 / 20e6, 100.0, True)
    with pytest.raises(OutOfRangeError):
        laz_metrics(amap, 8 / 20e6, 5000.0, True)


def test_laz_sidelobe_free_zone_gives_infinite_ratio():
    x = ComplexSequence(np.ones(1), 1.0)
    amap = ambiguity_map(x, x, 0.0, doppler_grid=[0.0])
    assert laz_metrics(amap, 0.0, 0.0, True).peak_to_sidelobe_db == float("inf")


def test_map_csv(tmp_path):
    ce0 = build_ce_sequence("CE0")
    amap = ambiguity_map(ce0, ce0, 2 / 20e6, doppler_grid=[0.0, 10.0])
    header, rows = read_csv(write_map_csv(tmp_path / "m.csv", amap))
    assert header == ["doppler_hz", "delay_s", "magnitude"]
    assert len(rows) == amap.magnitudes.size
