"""stencilforge: a standalone stencil-DSL compiler and runtime for regular
Cartesian grids, with a reference interpreter, a bulk whole-plane engine, and
a native code generator with fingerprint-based build caching."""

from .errors import (
    BackendError,
    Code,
    CompilationError,
    Diagnostic,
    DslError,
    InvocationError,
    StencilForgeError,
    StorageError,
)
from .ir import Extent, Fingerprint, canonical_serialize, dump_ir, fingerprint
from .runtime import (
    CompiledStencil,
    ExecutionReport,
    compile_stencil,
    invoke,
    resolve_domain_origin,
)
from .storage import (
    BufferDescriptor,
    FieldStorage,
    LayoutSpec,
    allocate,
    default_layout,
    export_descriptor,
    from_array,
    read_gtsf,
    write_gtsf,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "BufferDescriptor",
    "Code",
    "CompilationError",
    "CompiledStencil",
    "Diagnostic",
    "DslError",
    "ExecutionReport",
    "Extent",
    "FieldStorage",
    "Fingerprint",
    "InvocationError",
    "LayoutSpec",
    "StencilForgeError",
    "StorageError",
    "allocate",
    "canonical_serialize",
    "compile_stencil",
    "default_layout",
    "dump_ir",
    "export_descriptor",
    "fingerprint",
    "from_array",
    "invoke",
    "read_gtsf",
    "resolve_domain_origin",
    "write_gtsf",
]
