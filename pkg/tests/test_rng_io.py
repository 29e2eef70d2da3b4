import numpy as np
import pytest

from msre import rng as rngmod
from msre.disorder import HeightGrid, HurstParams, sample_disorder
from msre.io import FormatError, load_disorder, load_field, save_disorder, save_field
from msre.lattice import Domain, LatticeField


def test_stream_depends_only_on_path():
    a = rngmod.stream(5, 1, 2, 3).standard_normal(4)
    b = rngmod.stream(5, 1, 2, 3).standard_normal(4)
    c = rngmod.stream(5, 1, 2, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_vertex_stream_negative_coords():
    a = rngmod.vertex_stream(0, rngmod.DISORDER, [-1, 2]).random()
    b = rngmod.vertex_stream(0, rngmod.DISORDER, [1, 2]).random()
    c = rngmod.vertex_stream(0, rngmod.DISORDER, [-1, 2], resample=1).random()
    assert len({a, b, c}) == 3


def test_child_seed_range():
    s = rngmod.child_seed(2 ** 62, 7, -3)
    assert 0 <= s < 2 ** 63
    assert s == rngmod.child_seed(2 ** 62, 7, -3)


def test_disorder_roundtrip(tmp_path):
    f = sample_disorder(Domain.box(2, 2), HeightGrid(2, 0.5, 1), HurstParams(0.3, 2), 11, resample=2)
    p = tmp_path / "eta.bin"
    save_disorder(p, f)
    g = load_disorder(p)
    assert g == f
    assert (g.rng_seed, g.resample) == (11, 2)


def test_masked_field_roundtrip(tmp_path):
    mask = np.array([[True, False], [True, True]])
    dom = Domain([0, 0], [1, 1], mask)
    f = LatticeField(dom, np.arange(16.0).reshape(4, 4))
    p = tmp_path / "f.bin"
    save_field(p, f, {"note": "x"})
    g, header = load_field(p)
    assert header["note"] == "x"
    assert np.array_equal(g.values, f.values)
    assert np.array_equal(g.domain.mask, dom.mask)


def test_format_errors(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOPE" + b"\0" * 8)
    with pytest.raises(FormatError):
        load_disorder(p)
    f = LatticeField.zeros(Domain.box(1, 1))
    save_field(p, f)
    with pytest.raises(FormatError):
        load_disorder(p)
