"""Field containers: 3-D element buffers with configurable layout, alignment,
padding, and origin, plus the GTSF binary file format and a zero-copy buffer
descriptor export.

The GTSF format (little-endian): magic "GTSF", version u32=1, dtype u8
(1=f32, 2=f64), 3 reserved bytes, shape u64*3, origin u64*3, then
shape[0]*shape[1]*shape[2] elements in logical row-major order (i outermost,
k innermost). Data is stored in logical order regardless of in-memory layout,
so files are layout-portable and round trips are bit-exact, NaN payloads
included.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Union

import numpy as np

from .errors import Code, StorageError

GTSF_MAGIC = b"GTSF"
GTSF_VERSION = 1
_DTYPE_CODES = {"f32": 1, "f64": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_NP_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

Int3 = tuple[int, int, int]

DEFAULT_ALIGNMENT = 64


@dataclass(frozen=True)
class LayoutSpec:
    """Axis order from outermost to innermost plus alignment of the origin
    element; the innermost axis is padded so the next-inner stride is a
    multiple of the alignment."""

    permutation: Int3 = (0, 1, 2)
    alignment_bytes: int = DEFAULT_ALIGNMENT
    halo_default: Int3 = (0, 0, 0)

    def validate(self, itemsize: int) -> None:
        if sorted(self.permutation) != [0, 1, 2]:
            raise StorageError(
                Code.INVALID_LAYOUT, f"permutation {self.permutation} is not a permutation of 0,1,2"
            )
        a = self.alignment_bytes
        if a < itemsize or a & (a - 1) != 0 or a % itemsize != 0:
            raise StorageError(
                Code.INVALID_LAYOUT,
                f"alignment must be a power of two >= element size, got {a}",
            )


# documented per-backend default layouts: the reference and bulk engines keep
# k innermost; the native engine keeps k outermost with j contiguous to match
# its loop order
BACKEND_LAYOUTS: dict[str, LayoutSpec] = {
    "debug": LayoutSpec((0, 1, 2)),
    "vec": LayoutSpec((0, 1, 2)),
    "gen": LayoutSpec((2, 0, 1)),
}


def default_layout(backend: str) -> LayoutSpec:
    try:
        return BACKEND_LAYOUTS[backend]
    except KeyError:
        raise StorageError(Code.INVALID_LAYOUT, f"no default layout for backend '{backend}'")


@dataclass
class FieldStorage:
    """A 3-D element buffer. ``shape`` counts total allocated extents per
    logical axis (halo included, padding excluded); ``origin`` anchors compute
    index (0,0,0); ``strides`` are in elements per logical axis."""

    dtype: str
    shape: Int3
    origin: Int3
    layout: LayoutSpec
    strides: Int3
    view: np.ndarray = field(repr=False)  # logical-order strided view
    _base: np.ndarray = field(repr=False)  # owning 1-D buffer

    @property
    def itemsize(self) -> int:
        return _NP_DTYPES[self.dtype].itemsize

    def data(self) -> np.ndarray:
        """Logical (i,j,k)-indexable view aliasing the buffer."""
        return self.view

    def base_address(self) -> int:
        return self.view.ctypes.data

    def compute_view(self, domain: Int3, origin: Optional[Int3] = None) -> np.ndarray:
        o = origin if origin is not None else self.origin
        return self.view[
            o[0] : o[0] + domain[0], o[1] : o[1] + domain[1], o[2] : o[2] + domain[2]
        ]


@dataclass(frozen=True)
class BufferDescriptor:
    """Zero-copy description of a FieldStorage buffer; strides in bytes."""

    base_address: int
    dtype: str
    shape: Int3
    strides_bytes: Int3
    read_only: bool = False


def _compute_strides(shape: Int3, layout: LayoutSpec, itemsize: int) -> tuple[Int3, int]:
    """Element strides per logical axis and total padded element count."""
    align_elems = layout.alignment_bytes // itemsize
    outer, mid, inner = layout.permutation
    padded_inner = -(-shape[inner] // align_elems) * align_elems
    strides = [0, 0, 0]
    strides[inner] = 1
    strides[mid] = padded_inner
    strides[outer] = padded_inner * shape[mid]
    total = strides[outer] * shape[outer]
    return (strides[0], strides[1], strides[2]), total


def _make_storage(
    dtype: str,
    shape: Int3,
    origin: Int3,
    layout: LayoutSpec,
) -> FieldStorage:
    np_dtype = _NP_DTYPES[dtype]
    layout.validate(np_dtype.itemsize)
    strides, total = _compute_strides(shape, layout, np_dtype.itemsize)
    align = layout.alignment_bytes
    slack = align // np_dtype.itemsize
    base = np.empty(total + slack, dtype=np_dtype)
    origin_linear = sum(o * s for o, s in zip(origin, strides))
    addr = base.ctypes.data + origin_linear * np_dtype.itemsize
    shift_bytes = (-addr) % align
    assert shift_bytes % np_dtype.itemsize == 0
    shift = shift_bytes // np_dtype.itemsize
    view = np.lib.stride_tricks.as_strided(
        base[shift : shift + total],
        shape=shape,
        strides=tuple(s * np_dtype.itemsize for s in strides),
    )
    return FieldStorage(
        dtype=dtype,
        shape=shape,
        origin=origin,
        layout=layout,
        strides=strides,
        view=view,
        _base=base,
    )


def allocate(
    dtype: str,
    compute_shape: Int3,
    halo: Int3 = (0, 0, 0),
    layout: Optional[LayoutSpec] = None,
    fill: Union[str, float] = "zeros",
) -> FieldStorage:
    """Allocate a field: shape = compute_shape + 2*halo, origin = halo.

    ``fill`` is "zeros", "poison" (NaN everywhere), or a numeric value.
    """
    if dtype not in _NP_DTYPES:
        raise StorageError(Code.ALLOCATION, f"unknown dtype '{dtype}'")
    if any(c < 1 for c in compute_shape):
        raise StorageError(
            Code.ALLOCATION, f"compute shape must be >= 1 per axis, got {compute_shape}"
        )
    if any(h < 0 for h in halo):
        raise StorageError(Code.ALLOCATION, f"halo must be >= 0 per axis, got {halo}")
    shape = tuple(c + 2 * h for c, h in zip(compute_shape, halo))
    storage = _make_storage(dtype, shape, tuple(halo), layout or LayoutSpec())
    if fill == "zeros":
        storage.view[...] = 0
    elif fill == "poison":
        storage.view[...] = np.nan
    elif isinstance(fill, (int, float)):
        storage.view[...] = fill
    else:
        raise StorageError(Code.ALLOCATION, f"unknown fill mode {fill!r}")
    return storage


def from_array(
    values: np.ndarray,
    origin: Int3 = (0, 0, 0),
    layout: Optional[LayoutSpec] = None,
    dtype: Optional[str] = None,
) -> FieldStorage:
    """Build a storage from a logical (i,j,k) array; values are copied."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise StorageError(Code.ALLOCATION, f"expected a 3-D array, got ndim={values.ndim}")
    dt = dtype or ("f32" if values.dtype == np.float32 else "f64")
    storage = _make_storage(dt, values.shape, tuple(origin), layout or LayoutSpec())
    storage.view[...] = values
    return storage


def export_descriptor(storage: FieldStorage, read_only: bool = False) -> BufferDescriptor:
    """Describe the buffer without copying; mutations through either view are
    observed by the other."""
    return BufferDescriptor(
        base_address=storage.base_address(),
        dtype=storage.dtype,
        shape=storage.shape,
        strides_bytes=tuple(s * storage.itemsize for s in storage.strides),
        read_only=read_only,
    )


# ---------------------------------------------------------------------------
# GTSF binary format
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIB3x3Q3Q")


def write_gtsf(storage: FieldStorage, sink: Union[str, BinaryIO]) -> None:
    """Serialize in logical row-major order; bit-exact including NaN payloads."""
    header = _HEADER.pack(
        GTSF_MAGIC,
        GTSF_VERSION,
        _DTYPE_CODES[storage.dtype],
        *storage.shape,
        *storage.origin,
    )
    logical = np.ascontiguousarray(storage.view)
    payload = logical.astype(_NP_DTYPES[storage.dtype], copy=False).tobytes()
    if isinstance(sink, str):
        with open(sink, "wb") as f:
            f.write(header)
            f.write(payload)
    else:
        sink.write(header)
        sink.write(payload)


def read_gtsf(
    source: Union[str, BinaryIO], layout: Optional[LayoutSpec] = None
) -> FieldStorage:
    """Read a GTSF file; the storage may be re-laid-out per ``layout``."""
    if isinstance(source, str):
        with open(source, "rb") as f:
            return read_gtsf(f, layout)
    raw = source.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise StorageError(Code.TRUNCATED_FILE, "GTSF header truncated")
    magic, version, dtype_code, s0, s1, s2, o0, o1, o2 = _HEADER.unpack(raw)
    if magic != GTSF_MAGIC:
        raise StorageError(Code.FORMAT, f"bad magic {magic!r}")
    if version != GTSF_VERSION:
        raise StorageError(Code.FORMAT, f"unsupported GTSF version {version}")
    if dtype_code not in _CODE_DTYPES:
        raise StorageError(Code.FORMAT, f"unknown dtype code {dtype_code}")
    dtype = _CODE_DTYPES[dtype_code]
    shape = (int(s0), int(s1), int(s2))
    origin = (int(o0), int(o1), int(o2))
    if not all(0 <= o < s for o, s in zip(origin, shape)):
        raise StorageError(Code.FORMAT, f"origin {origin} outside shape {shape}")
    np_dtype = _NP_DTYPES[dtype]
    count = shape[0] * shape[1] * shape[2]
    payload = source.read(count * np_dtype.itemsize)
    if len(payload) < count * np_dtype.itemsize:
        raise StorageError(Code.TRUNCATED_FILE, "GTSF payload truncated")
    values = np.frombuffer(payload, dtype=np_dtype).reshape(shape)
    storage = _make_storage(dtype, shape, origin, layout or LayoutSpec())
    storage.view[...] = values
    return storage
