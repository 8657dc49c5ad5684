import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import c2f.entropy as ent
import c2f.rangecoder as rc
from c2f.errors import ContractViolation, CorruptStreamError


def uniform_table(nbins=256):
    step = rc.CDF_TOTAL // nbins
    return rc.CdfTable(0, np.arange(0, rc.CDF_TOTAL + step, step, dtype=np.int64))


def random_table(rng, max_bins=257):
    """Random valid table: distinct cut points guarantee freq >= 1."""
    nbins = int(rng.integers(1, max_bins + 1))
    cuts = rng.choice(np.arange(1, rc.CDF_TOTAL), size=nbins - 1, replace=False)
    cum = np.concatenate([[0], np.sort(cuts), [rc.CDF_TOTAL]]).astype(np.int64)
    smin = int(rng.integers(-200, 200))
    return rc.CdfTable(smin, cum).validate()


def skew_table(nbins=256, hot=0):
    """One bin holds 65536-(nbins-1), every other bin holds 1."""
    freqs = np.ones(nbins, dtype=np.int64)
    freqs[hot] = rc.CDF_TOTAL - (nbins - 1)
    return rc.CdfTable(0, np.concatenate([[0], np.cumsum(freqs)])).validate()


def roundtrip(symbols, tables):
    data = rc.encode(symbols, tables)
    return data, rc.decode(data, tables, len(symbols))


# ---------------------------------------------------------------------------

def test_empty_stream_is_flush_only():
    data = rc.encode([], [])
    assert len(data) <= 8
    assert rc.decode(data, [], 0) == []


def test_uniform_bytes_cost_one_byte_each():
    rng = np.random.default_rng(0)
    symbols = rng.integers(0, 256, size=1000).tolist()
    tables = [uniform_table()] * 1000
    data, back = roundtrip(symbols, tables)
    assert back == symbols
    assert abs(len(data) - 1000) <= 8


def test_encode_is_deterministic():
    rng = np.random.default_rng(1)
    symbols = rng.integers(0, 256, size=300).tolist()
    tables = [uniform_table()] * 300
    assert rc.encode(symbols, tables) == rc.encode(symbols, tables)


def test_extreme_skew_roundtrip():
    table = skew_table(256, hot=10)
    symbols = [10] * 5000 + [0, 255, 10, 128]
    data, back = roundtrip(symbols, [table] * len(symbols))
    assert back == symbols
    # nearly-certain symbols cost almost nothing
    assert len(data) < 40


def test_mixed_tables_roundtrip():
    rng = np.random.default_rng(2)
    tables = [random_table(rng) for _ in range(400)]
    symbols = [int(rng.integers(t.smin, t.smin + t.nsymbols)) for t in tables]
    _, back = roundtrip(symbols, tables)
    assert back == symbols


@pytest.mark.parametrize("sigma", [0.05, 1.0, 30.0])
def test_gaussian_tables_roundtrip(sigma):
    rng = np.random.default_rng(3)
    n = 2000
    values = np.clip(np.round(rng.normal(0, sigma, size=n)), -127, 128).astype(int)
    table = ent.build_cdf_table(0.0, sigma)
    data, back = roundtrip(values.tolist(), [table] * n)
    assert back == values.tolist()


def test_escape_values_roundtrip():
    table = ent.build_cdf_table(0.0, 1.0)
    symbols = [0, 1, 900, -5000, 2, 2 ** 31 - 1, -(2 ** 31), -1]
    _, back = roundtrip(symbols, [table] * len(symbols))
    assert back == symbols


def test_escape_rejected_beyond_int32():
    table = ent.build_cdf_table(0.0, 1.0)
    with pytest.raises(ContractViolation):
        rc.encode([2 ** 31], [table])


def test_out_of_alphabet_without_escape():
    with pytest.raises(ContractViolation):
        rc.encode([300], [uniform_table()])


def test_truncated_stream_errors():
    rng = np.random.default_rng(4)
    symbols = rng.integers(0, 256, size=200).tolist()
    tables = [uniform_table()] * 200
    data = rc.encode(symbols, tables)
    for cut in (0, 1, 7, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptStreamError):
            rc.decode(data[:cut], tables, 200)


def test_symbol_table_count_mismatch():
    with pytest.raises(ContractViolation):
        rc.encode([1, 2], [uniform_table()])
    with pytest.raises(ContractViolation):
        rc.decode(b"\x00" * 16, [uniform_table()] * 2, 3)


def test_encoder_single_use():
    enc = rc.RangeEncoder()
    enc.finish()
    with pytest.raises(ContractViolation):
        enc.finish()
    with pytest.raises(ContractViolation):
        enc.encode(0, uniform_table())


def test_compression_bound():
    rng = np.random.default_rng(5)
    for _ in range(20):
        tables = [random_table(rng, max_bins=64) for _ in range(500)]
        symbols = [int(rng.integers(t.smin, t.smin + t.nsymbols)) for t in tables]
        data = rc.encode(symbols, tables)
        ideal = 0.0
        for s, t in zip(symbols, tables):
            idx = t.index_of(s)
            ideal += -np.log2((t.cum[idx + 1] - t.cum[idx]) / rc.CDF_TOTAL)
        assert len(data) * 8 <= ideal + 256 + 0.001 * ideal


def test_table_validation():
    with pytest.raises(ContractViolation):
        rc.CdfTable(0, [0, 100]).validate()           # wrong total
    with pytest.raises(ContractViolation):
        rc.CdfTable(0, [0, 5, 5, 65536]).validate()   # zero-frequency bin
    with pytest.raises(ContractViolation):
        rc.CdfTable(0, [1, 65536]).validate()         # does not start at 0


# ---------------------------------------------------------------------------
# properties

@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 60))
def test_roundtrip_property(seed, n):
    rng = np.random.default_rng(seed)
    tables = [random_table(rng) for _ in range(n)]
    symbols = [int(rng.integers(t.smin, t.smin + t.nsymbols)) for t in tables]
    data, back = roundtrip(symbols, tables)
    assert back == symbols


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_skew_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    nbins = int(rng.integers(2, 257))
    table = skew_table(nbins, hot=int(rng.integers(0, nbins)))
    n = int(rng.integers(1, 300))
    symbols = rng.integers(0, nbins, size=n).tolist()
    _, back = roundtrip(symbols, [table] * n)
    assert back == symbols
