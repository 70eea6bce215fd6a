import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from loca.errors import DataError
from loca.numerics import container


@given(st.dictionaries(st.text("abcxyz._", min_size=1, max_size=8),
                       arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=4),
                              elements=st.floats(allow_nan=False)), max_size=4))
def test_round_trip_preserves_names_shapes_and_bits(arrs):
    out, meta = container.decode(container.encode(arrs, {"k": [1, "a"]}))
    assert meta == {"k": [1, "a"]}
    assert set(out) == set(arrs)
    for k, v in arrs.items():
        assert out[k].shape == v.shape
        assert np.array_equal(out[k], v)


def test_encoding_is_deterministic_and_little_endian():
    a = {"w": np.arange(3.0), "b": np.array(2.5)}
    blob = container.encode(a, {"z": 1, "a": 2})
    assert blob == container.encode(dict(reversed(list(a.items()))), {"a": 2, "z": 1})
    assert blob[:4] == b"LOCA" and blob[4] == container.VERSION
    assert np.arange(3.0).astype("<f8").tobytes() in blob


def test_bad_magic_version_and_truncation():
    blob = container.encode({"w": np.ones(10)})
    with pytest.raises(DataError):
        container.decode(b"NOPE" + blob[4:])
    with pytest.raises(DataError):
        container.decode(blob[:4] + bytes([99]) + blob[5:])
    with pytest.raises(DataError):
        container.decode(blob[:-8])


def test_atomic_save_leaves_no_temporaries(tmp_path):
    path = tmp_path / "sub" / "x.loca"
    container.save(path, {"a": np.ones(2)}, {"m": 1})
    container.save(path, {"a": np.zeros(2)}, {"m": 2})
    arrays_, meta = container.load(path)
    assert meta == {"m": 2} and not arrays_["a"].any()
    assert [p.name for p in path.parent.iterdir()] == ["x.loca"]
