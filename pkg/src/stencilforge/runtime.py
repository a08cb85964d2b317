"""User-facing compile/invoke layer: source + backend + externals in, an
invocable CompiledStencil out. Resolves domain/origin defaults, validates
arguments per the active policy, and dispatches to the backend."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from . import analysis, ir
from .backends import BACKEND_IDS, debug as debug_backend, gen as gen_backend, vec as vec_backend
from .backends.common import ExecutableStencil, Int3
from .errors import Code, CompilationError, DslError, InvocationError
from .frontend import bind_externals, inline_functions, parse_program
from .storage import BACKEND_LAYOUTS, FieldStorage


@dataclass(frozen=True)
class ExecutionReport:
    """Per-invocation timing; validation overhead is separated from kernel time."""

    total_ns: int
    validate_ns: int
    kernel_ns: int
    domain: Int3
    validated: bool

    def as_dict(self) -> dict:
        return {
            "total_ns": self.total_ns,
            "validate_ns": self.validate_ns,
            "kernel_ns": self.kernel_ns,
            "domain": list(self.domain),
            "validated": self.validated,
        }


OriginArg = Union[None, Int3, dict[str, Int3]]


@dataclass
class CompiledStencil:
    """Executable handle: fingerprint, backend id, signature, and extents."""

    name: str
    fingerprint: ir.Fingerprint
    backend: str
    implementation: ir.StencilImplementation
    executable: ExecutableStencil
    validation: str = "full"  # "full" | "skip"

    @property
    def field_signature(self) -> tuple[ir.FieldDecl, ...]:
        return self.implementation.api_fields

    @property
    def scalar_signature(self) -> tuple[ir.ScalarDecl, ...]:
        return self.implementation.api_scalars

    @property
    def k_min(self) -> int:
        return self.implementation.k_min

    def field_extent(self, name: str) -> ir.Extent:
        return self.implementation.field_extent(name)

    @property
    def build_info(self) -> dict:
        return self.executable.build_info

    def __call__(
        self,
        *,
        domain: Optional[Int3] = None,
        origin: OriginArg = None,
        validate: Optional[bool] = None,
        **arguments: Any,
    ) -> ExecutionReport:
        return invoke(self, arguments, domain=domain, origin=origin, validate=validate)


def _collect_args(
    stencil: CompiledStencil, arguments: dict[str, Any]
) -> tuple[dict[str, FieldStorage], dict[str, float]]:
    fields: dict[str, FieldStorage] = {}
    scalars: dict[str, float] = {}
    names = set()
    for f in stencil.field_signature:
        names.add(f.name)
        if f.name not in arguments:
            raise InvocationError(Code.MISSING_ARGUMENT, f"missing field argument '{f.name}'")
        value = arguments[f.name]
        if not isinstance(value, FieldStorage):
            raise InvocationError(
                Code.DTYPE_MISMATCH,
                f"argument '{f.name}' must be a FieldStorage, got {type(value).__name__}",
            )
        fields[f.name] = value
    for s in stencil.scalar_signature:
        names.add(s.name)
        if s.name not in arguments:
            raise InvocationError(Code.MISSING_ARGUMENT, f"missing scalar argument '{s.name}'")
        value = arguments[s.name]
        if isinstance(value, bool) or not isinstance(
            value, (int, float, np.floating, np.integer)
        ):
            raise InvocationError(
                Code.DTYPE_MISMATCH, f"scalar '{s.name}' must be numeric, got {value!r}"
            )
        scalars[s.name] = float(value)
    extra = set(arguments) - names
    if extra:
        raise InvocationError(
            Code.UNEXPECTED_ARGUMENT, f"unexpected argument(s): {', '.join(sorted(extra))}"
        )
    return fields, scalars


def resolve_domain_origin(
    stencil: CompiledStencil,
    fields: dict[str, FieldStorage],
    domain: Optional[Int3] = None,
    origin: OriginArg = None,
    check: bool = True,
) -> tuple[Int3, dict[str, Int3]]:
    """Resolve the compute domain and per-field origins.

    Per-field origin defaults to the storage origin; an explicit ``origin``
    argument (one triple for all fields, or a per-field map) overrides it.
    The default domain is the componentwise minimum over fields of
    shape - origin - hi_extent. With ``check``, verifies domain >= 1, the
    vertical minimum, and that every field covers origin+lo .. origin+domain+hi.
    """
    origins: dict[str, Int3] = {}
    for f in stencil.field_signature:
        storage = fields[f.name]
        if isinstance(origin, dict):
            o = origin.get(f.name, storage.origin)
        elif origin is not None:
            o = origin
        else:
            o = storage.origin
        origins[f.name] = tuple(int(x) for x in o)  # type: ignore[assignment]

    if domain is None:
        if not stencil.field_signature:
            raise InvocationError(
                Code.DOMAIN_TOO_SMALL, "stencil has no fields; pass an explicit domain"
            )
        limits = []
        for f in stencil.field_signature:
            storage, o = fields[f.name], origins[f.name]
            hi = stencil.field_extent(f.name).hi
            limits.append(tuple(storage.shape[a] - o[a] - hi[a] for a in range(3)))
        resolved = tuple(min(l[a] for l in limits) for a in range(3))
    else:
        resolved = tuple(int(x) for x in domain)

    if check:
        if any(d < 1 for d in resolved):
            binding = ""
            if domain is None:
                for f in stencil.field_signature:
                    storage, o = fields[f.name], origins[f.name]
                    hi = stencil.field_extent(f.name).hi
                    for a in range(3):
                        if storage.shape[a] - o[a] - hi[a] == min(resolved):
                            binding = f" (binding constraint: field '{f.name}', axis {a})"
                            break
                    if binding:
                        break
            raise InvocationError(
                Code.DOMAIN_TOO_SMALL, f"resolved domain {resolved} is empty{binding}"
            )
        if resolved[2] < stencil.k_min:
            raise InvocationError(
                Code.K_BELOW_MINIMUM,
                f"vertical size {resolved[2]} is below this stencil's minimum "
                f"{stencil.k_min}",
            )
        for f in stencil.field_signature:
            storage, o = fields[f.name], origins[f.name]
            ext = stencil.field_extent(f.name)
            for a in range(3):
                if o[a] + ext.lo[a] < 0:
                    raise InvocationError(
                        Code.OUT_OF_BOUNDS,
                        f"field '{f.name}': origin {o} leaves no room for halo "
                        f"{ext.lo} on axis {a}",
                    )
                if o[a] + resolved[a] + ext.hi[a] > storage.shape[a]:
                    raise InvocationError(
                        Code.OUT_OF_BOUNDS,
                        f"field '{f.name}': origin {o} + domain {resolved} + halo "
                        f"{ext.hi} exceeds shape {storage.shape} on axis {a}",
                    )
    return resolved, origins  # type: ignore[return-value]


def _validate_storages(stencil: CompiledStencil, fields: dict[str, FieldStorage]) -> None:
    expected_layout = BACKEND_LAYOUTS[stencil.backend]
    for f in stencil.field_signature:
        storage = fields[f.name]
        if storage.dtype != f.dtype:
            raise InvocationError(
                Code.DTYPE_MISMATCH,
                f"field '{f.name}' expects dtype {f.dtype}, got {storage.dtype}",
            )
        if storage.layout.permutation != expected_layout.permutation:
            raise InvocationError(
                Code.LAYOUT_MISMATCH,
                f"field '{f.name}' has layout permutation {storage.layout.permutation}; "
                f"backend '{stencil.backend}' expects {expected_layout.permutation}",
            )


def invoke(
    stencil: CompiledStencil,
    arguments: dict[str, Any],
    domain: Optional[Int3] = None,
    origin: OriginArg = None,
    validate: Optional[bool] = None,
) -> ExecutionReport:
    """Run the stencil on the given storages, mutating output fields in place."""
    t_start = time.perf_counter_ns()
    do_validate = (stencil.validation == "full") if validate is None else bool(validate)
    fields, scalars = _collect_args(stencil, arguments)

    t_val0 = time.perf_counter_ns()
    resolved, origins = resolve_domain_origin(
        stencil, fields, domain, origin, check=do_validate
    )
    if do_validate:
        _validate_storages(stencil, fields)
    t_val1 = time.perf_counter_ns()

    field_args = {name: (fields[name], origins[name]) for name in fields}
    t_k0 = time.perf_counter_ns()
    stencil.executable.run(resolved, field_args, scalars)
    t_k1 = time.perf_counter_ns()

    return ExecutionReport(
        total_ns=t_k1 - t_start,
        validate_ns=(t_val1 - t_val0) if do_validate else 0,
        kernel_ns=t_k1 - t_k0,
        domain=resolved,
        validated=do_validate,
    )


# ---------------------------------------------------------------------------
# Compilation pipeline
# ---------------------------------------------------------------------------


def compile_stencil(
    source: str,
    stencil_name: Optional[str] = None,
    backend: str = "debug",
    externals: Optional[dict[str, Union[int, float]]] = None,
    validation: str = "full",
    cache_dir: Optional[str] = None,
    gen_options: Optional[dict] = None,
    file: Optional[str] = None,
) -> CompiledStencil:
    """Run the full pipeline: parse -> inline -> bind -> validate -> normalize
    -> extents -> lower -> backend build (cache-backed for gen)."""
    if backend not in BACKEND_IDS:
        raise InvocationError(
            Code.UNKNOWN_BACKEND,
            f"unknown backend '{backend}'; supported: {', '.join(BACKEND_IDS)}",
        )
    externals = dict(externals or {})

    try:
        items = parse_program(source, file)
        stencils = inline_functions(items)
        if not stencils:
            raise DslError(Code.SYNTAX, ir.UNKNOWN_SPAN, "no stencil in program")
        if stencil_name is None:
            if len(stencils) > 1:
                names = ", ".join(s.name for s in stencils)
                raise DslError(
                    Code.SYNTAX,
                    ir.UNKNOWN_SPAN,
                    f"program has multiple stencils ({names}); pass stencil_name",
                )
            definition = stencils[0]
        else:
            match = [s for s in stencils if s.name == stencil_name]
            if not match:
                raise DslError(
                    Code.SYNTAX, ir.UNKNOWN_SPAN, f"no stencil named '{stencil_name}'"
                )
            definition = match[0]
        bound = bind_externals(definition, externals)
    except DslError as exc:
        raise CompilationError([exc.as_diagnostic()])

    impl = analysis.lower(bound)

    toolchain = gen_backend.toolchain_version() if backend == "gen" else "builtin"
    fp = ir.fingerprint(bound, backend, externals, toolchain, gen_options)

    if backend == "debug":
        executable = debug_backend.build(impl, fp)
    elif backend == "vec":
        executable = vec_backend.build(impl, fp)
    else:
        cache = gen_backend.BuildCache(cache_dir)
        executable = gen_backend.compile_and_load(impl, fp, cache, gen_options)

    return CompiledStencil(
        name=impl.name,
        fingerprint=fp,
        backend=backend,
        implementation=impl,
        executable=executable,
        validation=validation,
    )


def frontend_pipeline(
    source: str,
    stencil_name: Optional[str] = None,
    externals: Optional[dict[str, Union[int, float]]] = None,
    file: Optional[str] = None,
) -> ir.StencilDefinition:
    """Parse, inline, and bind a single stencil without lowering it."""
    try:
        stencils = inline_functions(parse_program(source, file))
        if stencil_name is not None:
            stencils = [s for s in stencils if s.name == stencil_name]
        if not stencils:
            raise DslError(Code.SYNTAX, ir.UNKNOWN_SPAN, "no matching stencil in program")
        return bind_externals(stencils[0], dict(externals or {}))
    except DslError as exc:
        raise CompilationError([exc.as_diagnostic()])
