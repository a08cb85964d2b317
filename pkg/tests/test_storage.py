"""Field containers: layout/alignment/padding arithmetic, GTSF round trips,
and zero-copy descriptor export."""

import ctypes
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stencilforge import storage as sto
from stencilforge.errors import Code, StorageError

PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


class TestAllocate:
    def test_basic_shape_and_origin(self):
        f = sto.allocate("f64", (4, 4, 4), (1, 1, 0))
        assert f.shape == (6, 6, 4)
        assert f.origin == (1, 1, 0)
        assert np.all(np.asarray(f.data()) == 0.0)

    def test_padding_arithmetic_perm_201(self):
        # perm (2,0,1): outermost axis 2, innermost axis 1; 64B / 8B = 8-element
        # padding of the innermost extent
        layout = sto.LayoutSpec((2, 0, 1), 64)
        f = sto.allocate("f64", (3, 3, 3), (0, 0, 0), layout)
        assert f.strides == (8, 1, 24)  # i: padded j-extent, j: 1, k: 8*3

    def test_negative_halo_rejected(self):
        with pytest.raises(StorageError) as exc:
            sto.allocate("f64", (4, 4, 4), (-1, 0, 0))
        assert exc.value.code is Code.ALLOCATION

    def test_zero_compute_shape_rejected(self):
        with pytest.raises(StorageError):
            sto.allocate("f64", (0, 4, 4))

    def test_bad_permutation_rejected(self):
        with pytest.raises(StorageError) as exc:
            sto.allocate("f64", (4, 4, 4), layout=sto.LayoutSpec((0, 0, 2)))
        assert exc.value.code is Code.INVALID_LAYOUT

    def test_bad_alignment_rejected(self):
        with pytest.raises(StorageError) as exc:
            sto.allocate("f64", (4, 4, 4), layout=sto.LayoutSpec((0, 1, 2), 24))
        assert exc.value.code is Code.INVALID_LAYOUT

    def test_poison_fill(self):
        f = sto.allocate("f64", (3, 3, 3), fill="poison")
        assert np.isnan(np.asarray(f.data())).all()

    def test_value_fill(self):
        f = sto.allocate("f32", (2, 2, 2), fill=2.5)
        assert np.all(np.asarray(f.data()) == np.float32(2.5))

    @settings(max_examples=60, deadline=None)
    @given(
        st.sampled_from(["f32", "f64"]),
        st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7)),
        st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)),
        st.sampled_from(PERMS),
        st.sampled_from([8, 16, 32, 64, 128]),
    )
    def test_origin_alignment_property(self, dtype, shape, halo, perm, align):
        itemsize = 4 if dtype == "f32" else 8
        if align < itemsize:
            align = itemsize
        f = sto.allocate(dtype, shape, halo, sto.LayoutSpec(perm, align))
        origin_addr = f.base_address() + sum(
            o * s for o, s in zip(f.origin, f.strides)
        ) * f.itemsize
        assert origin_addr % align == 0

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(PERMS), st.integers(0, 999))
    def test_layout_invariant_logical_indexing(self, perm, seed):
        rng = np.random.default_rng(seed)
        f = sto.allocate("f64", (5, 4, 3), (1, 0, 1), sto.LayoutSpec(perm))
        probes = rng.integers(0, (7, 4, 5), size=(40, 3))
        for n, (i, j, k) in enumerate(probes):
            f.data()[i, j, k] = float(n)
        flat = np.frombuffer(f._base.data, dtype=np.float64)
        base_off = (f.base_address() - f._base.ctypes.data) // 8
        for n, (i, j, k) in enumerate(probes):
            # reading through raw strides must agree with logical indexing
            linear = base_off + i * f.strides[0] + j * f.strides[1] + k * f.strides[2]
            assert flat[linear] == f.data()[i, j, k]


def _nan_with_payload(payload: int) -> float:
    bits = 0x7FF0000000000000 | 0x0008000000000000 | payload
    return float(np.uint64(bits).view(np.float64))


class TestGtsf:
    def test_round_trip_bits(self):
        rng = np.random.default_rng(0)
        f = sto.allocate("f64", (4, 5, 6), (1, 0, 2))
        f.data()[...] = rng.uniform(-1, 1, f.shape)
        f.data()[0, 0, 0] = _nan_with_payload(0xDEAD)
        buf = io.BytesIO()
        sto.write_gtsf(f, buf)
        buf.seek(0)
        g = sto.read_gtsf(buf)
        assert g.shape == f.shape and g.origin == f.origin and g.dtype == f.dtype
        assert np.asarray(g.data()).tobytes() == np.ascontiguousarray(f.data()).tobytes()

    def test_relayout_on_read(self):
        rng = np.random.default_rng(1)
        f = sto.allocate("f64", (4, 4, 4), layout=sto.LayoutSpec((2, 1, 0)))
        f.data()[...] = rng.uniform(-1, 1, f.shape)
        buf = io.BytesIO()
        sto.write_gtsf(f, buf)
        buf.seek(0)
        g = sto.read_gtsf(buf, sto.LayoutSpec((0, 1, 2)))
        assert g.strides != f.strides
        assert np.array_equal(np.asarray(g.data()), np.asarray(f.data()))

    def test_bad_magic(self):
        buf = io.BytesIO(b"XTSF" + b"\x00" * 60)
        with pytest.raises(StorageError) as exc:
            sto.read_gtsf(buf)
        assert exc.value.code is Code.FORMAT

    def test_truncated_header(self):
        with pytest.raises(StorageError) as exc:
            sto.read_gtsf(io.BytesIO(b"GTSF\x01"))
        assert exc.value.code is Code.TRUNCATED_FILE

    def test_truncated_payload(self):
        f = sto.allocate("f64", (4, 4, 4))
        buf = io.BytesIO()
        sto.write_gtsf(f, buf)
        data = buf.getvalue()[:-8]
        with pytest.raises(StorageError) as exc:
            sto.read_gtsf(io.BytesIO(data))
        assert exc.value.code is Code.TRUNCATED_FILE

    def test_file_path_round_trip(self, tmp_path):
        f = sto.allocate("f32", (3, 3, 3), fill=1.5)
        path = str(tmp_path / "field.gtsf")
        sto.write_gtsf(f, path)
        g = sto.read_gtsf(path)
        assert np.array_equal(np.asarray(g.data()), np.asarray(f.data()))

    @settings(max_examples=50, deadline=None)
    @given(
        st.sampled_from(["f32", "f64"]),
        st.sampled_from(PERMS),
        st.sampled_from(PERMS),
        st.integers(0, 2**31),
    )
    def test_round_trip_property(self, dtype, perm_w, perm_r, seed):
        rng = np.random.default_rng(seed)
        np_dt = np.float32 if dtype == "f32" else np.float64
        f = sto.allocate(dtype, (3, 4, 2), (1, 0, 1), sto.LayoutSpec(perm_w))
        f.data()[...] = rng.uniform(-10, 10, f.shape).astype(np_dt)
        buf = io.BytesIO()
        sto.write_gtsf(f, buf)
        buf.seek(0)
        g = sto.read_gtsf(buf, sto.LayoutSpec(perm_r))
        assert np.ascontiguousarray(g.data()).tobytes() == np.ascontiguousarray(
            f.data()
        ).tobytes()


class TestDescriptor:
    def test_aliasing(self):
        f = sto.allocate("f64", (2, 2, 2))
        desc = sto.export_descriptor(f)
        n = f.strides[0] * f.shape[0]
        raw = (ctypes.c_double * n).from_address(desc.base_address)
        raw[0] = 42.0
        assert f.data()[0, 0, 0] == 42.0
        f.data()[0, 0, 1] = 7.0
        assert raw[f.strides[2]] == 7.0

    def test_strides_in_bytes(self):
        f = sto.allocate("f64", (3, 3, 3), layout=sto.LayoutSpec((2, 0, 1)))
        desc = sto.export_descriptor(f)
        assert desc.strides_bytes == tuple(s * 8 for s in f.strides)
        assert desc.shape == f.shape
        assert desc.base_address == f.base_address()
