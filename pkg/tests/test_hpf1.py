import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hessapprox import hpf1

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.tuples(st.integers(0, 5), st.integers(0, 5)), elements=finite))
def test_round_trip_rank2(a):
    b = hpf1.decode(hpf1.encode(a))
    assert b.shape == a.shape and b.dtype == np.float64
    np.testing.assert_array_equal(a, b)


def test_ranks_and_complex():
    for a in (np.float64(3.5), np.arange(4.0), np.arange(6.0).reshape(2, 3)):
        np.testing.assert_array_equal(hpf1.decode(hpf1.encode(a)), a)
    z = np.array([[1 + 2j, -3j], [0.5, 4]])
    buf = hpf1.encode(z)
    assert int.from_bytes(buf[4:8], "little") & hpf1.COMPLEX_FLAG
    np.testing.assert_array_equal(hpf1.decode(buf), z)


def test_header_layout():
    buf = hpf1.encode(np.ones((2, 3)))
    assert buf[:4] == b"HPF1"
    assert [int.from_bytes(buf[i:i + 4], "little") for i in (4, 8, 12)] == [2, 2, 3]
    assert len(buf) == 16 + 6 * 8


def test_decode_errors():
    good = hpf1.encode(np.ones(3))
    for bad in (good[:10], b"XXXX" + good[4:], good[:-1]):
        with pytest.raises(ValueError):
            hpf1.decode(bad)
    with pytest.raises(ValueError):
        hpf1.encode(np.ones((2, 2, 2)))


def test_bundle(tmp_path):
    arrs = {"b": np.eye(2), "a": np.arange(3.0)}
    d = hpf1.write_bundle(tmp_path / "bun", arrs, {"kind": "Test"})
    first = (d / "manifest.json").read_bytes()
    got, man = hpf1.read_bundle(d)
    assert man["kind"] == "Test" and set(man["files"]) == {"a", "b"}
    for k in arrs:
        np.testing.assert_array_equal(got[k], arrs[k])
    hpf1.write_bundle(tmp_path / "bun", arrs, {"kind": "Test"})
    assert (d / "manifest.json").read_bytes() == first
