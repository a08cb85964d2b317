"""IR node types, extent algebra, canonical serialization, and fingerprinting.

Two trees live here: the high-level definition IR produced by the frontend
(mirroring the source program) and the lowered implementation IR produced by
analysis (multistages, stages with compute extents, temporary allocations).
Nodes are immutable dataclasses; source spans ride along for diagnostics but
are excluded from equality, canonical bytes, and dumps, so formatting-only
source changes produce identical canonical forms.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

from .errors import Span, UNKNOWN_SPAN

SCHEMA_VERSION = "gts-ir-v1"

F32 = "f32"
F64 = "f64"
DTYPES = (F32, F64)

PARALLEL = "PARALLEL"
FORWARD = "FORWARD"
BACKWARD = "BACKWARD"
ORDERS = (PARALLEL, FORWARD, BACKWARD)

START = "start"
END = "end"

# name -> arity
BUILTINS = {
    "abs": 1,
    "min": 2,
    "max": 2,
    "sqrt": 1,
    "exp": 1,
    "log": 1,
    "pow": 2,
    "floor": 1,
    "ceil": 1,
}

Offset = tuple[int, int, int]
ZERO_OFFSET: Offset = (0, 0, 0)


def _span_field() -> Span:
    return field(default=UNKNOWN_SPAN, compare=False, repr=False)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Literal(Expr):
    """Numeric literal; ``kind`` is "f64" for floats, "i64" for integer externals."""

    value: float
    kind: str = "f64"
    span: Span = _span_field()


@dataclass(frozen=True)
class NameRef(Expr):
    """Unresolved bare identifier; eliminated by external binding."""

    name: str
    span: Span = _span_field()


@dataclass(frozen=True)
class ScalarRef(Expr):
    name: str
    span: Span = _span_field()


@dataclass(frozen=True)
class FieldAccess(Expr):
    field: str
    offset: Offset = ZERO_OFFSET
    span: Span = _span_field()


@dataclass(frozen=True)
class UnaryOp(Expr):
    op: str  # "-" | "not"
    operand: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class BinaryOp(Expr):
    op: str  # arithmetic, comparison, or boolean operator
    left: Expr
    right: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class BuiltinCall(Expr):
    name: str
    args: tuple[Expr, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class FuncCall(Expr):
    """Call of a user function; eliminated by inlining."""

    name: str
    args: tuple[Expr, ...]
    span: Span = _span_field()


COMPARISON_OPS = ("<", "<=", ">", ">=", "==", "!=")
BOOLEAN_OPS = ("and", "or")
ARITHMETIC_OPS = ("+", "-", "*", "/")


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stmt:
    pass


@dataclass(frozen=True)
class Assign(Stmt):
    target: FieldAccess
    value: Expr
    span: Span = _span_field()


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then_body: tuple[Stmt, ...]
    else_body: tuple[Stmt, ...] = ()
    span: Span = _span_field()


# ---------------------------------------------------------------------------
# Vertical axis: bounds and intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=False)
class AxisBound:
    """A vertical level anchored at the domain start or end.

    Bounds stay symbolic: their concrete level is ``offset`` (start-anchored)
    or ``K + offset`` (end-anchored) for a vertical domain of size K.
    """

    ref: str  # START | END
    offset: int

    def level(self, k_size: int) -> int:
        return self.offset if self.ref == START else k_size + self.offset

    @staticmethod
    def start(offset: int = 0) -> "AxisBound":
        return AxisBound(START, offset)

    @staticmethod
    def end(offset: int = 0) -> "AxisBound":
        return AxisBound(END, offset)


@dataclass(frozen=True)
class Interval:
    """Half-open vertical range [start, end)."""

    start: AxisBound
    end: AxisBound

    def levels(self, k_size: int) -> range:
        return range(self.start.level(k_size), self.end.level(k_size))

    @staticmethod
    def full() -> "Interval":
        return Interval(AxisBound.start(0), AxisBound.end(0))


@dataclass(frozen=True)
class IntervalBlock:
    """One `with interval` body; ``interval`` is None for a bare statement body
    until normalization assigns the implicit full interval."""

    interval: Optional[Interval]
    body: tuple[Stmt, ...]
    span: Span = _span_field()


@dataclass(frozen=True)
class Computation:
    order: str  # PARALLEL | FORWARD | BACKWARD
    intervals: tuple[IntervalBlock, ...]
    span: Span = _span_field()


# ---------------------------------------------------------------------------
# Declarations and top-level definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldDecl:
    name: str
    dtype: str
    span: Span = _span_field()


@dataclass(frozen=True)
class ScalarDecl:
    name: str
    dtype: str
    span: Span = _span_field()


@dataclass(frozen=True)
class StencilDefinition:
    name: str
    api_fields: tuple[FieldDecl, ...]
    api_scalars: tuple[ScalarDecl, ...]
    computations: tuple[Computation, ...]
    span: Span = _span_field()

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.api_fields)

    def scalar_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.api_scalars)


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: tuple[Assign, ...]
    return_expr: Expr
    span: Span = _span_field()


# ---------------------------------------------------------------------------
# Extents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extent:
    """Signed per-axis halo bounds around the compute domain; lo <= 0 <= hi."""

    lo: Offset = ZERO_OFFSET
    hi: Offset = ZERO_OFFSET

    def __post_init__(self) -> None:
        for a in range(3):
            if self.lo[a] > 0 or self.hi[a] < 0:
                raise ValueError(f"extent must satisfy lo <= 0 <= hi, got {self}")

    @staticmethod
    def zero() -> "Extent":
        return Extent()

    def union(self, other: "Extent") -> "Extent":
        return Extent(
            tuple(min(a, b) for a, b in zip(self.lo, other.lo)),  # type: ignore[arg-type]
            tuple(max(a, b) for a, b in zip(self.hi, other.hi)),  # type: ignore[arg-type]
        )

    def shift(self, offset: Offset) -> "Extent":
        """Extent of a read at ``offset`` made from every point of this extent,
        widened to keep the zero point inside."""
        return Extent(
            tuple(min(l + o, 0) for l, o in zip(self.lo, offset)),  # type: ignore[arg-type]
            tuple(max(h + o, 0) for h, o in zip(self.hi, offset)),  # type: ignore[arg-type]
        )

    def drop_vertical(self) -> "Extent":
        return Extent((self.lo[0], self.lo[1], 0), (self.hi[0], self.hi[1], 0))

    def is_zero(self) -> bool:
        return self.lo == ZERO_OFFSET and self.hi == ZERO_OFFSET


# ---------------------------------------------------------------------------
# Implementation IR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stage:
    """One lowered statement with its interval and horizontal compute extent."""

    interval: Interval
    body: Stmt
    compute_extent: Extent


@dataclass(frozen=True)
class MultiStage:
    order: str
    stages: tuple[Stage, ...]


@dataclass(frozen=True)
class TempDecl:
    name: str
    dtype: str
    extent: Extent


@dataclass(frozen=True)
class StencilImplementation:
    name: str
    api_fields: tuple[FieldDecl, ...]
    api_scalars: tuple[ScalarDecl, ...]
    multistages: tuple[MultiStage, ...]
    temporaries: tuple[TempDecl, ...]
    field_extents: tuple[tuple[str, Extent], ...]  # sorted by field name
    k_min: int

    def field_extent(self, name: str) -> Extent:
        for n, e in self.field_extents:
            if n == name:
                return e
        raise KeyError(name)

    def temp(self, name: str) -> TempDecl:
        for t in self.temporaries:
            if t.name == name:
                return t
        raise KeyError(name)

    def temp_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.temporaries)


IRNode = Union[StencilDefinition, StencilImplementation, FunctionDef]


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def _float_token(value: float) -> str:
    # hex form is exact and platform independent
    return float(value).hex()


def _to_jsonable(node):
    if isinstance(node, Literal):
        if node.kind == "i64":
            return ["lit_i", int(node.value)]
        return ["lit_f", _float_token(node.value)]
    if isinstance(node, tuple):
        return [_to_jsonable(x) for x in node]
    if isinstance(node, (int, str, bool)) or node is None:
        return node
    if isinstance(node, Extent):
        return ["extent", list(node.lo), list(node.hi)]
    # generic dataclass walk, spans dropped
    out = [type(node).__name__]
    for f in fields(node):
        if f.name == "span":
            continue
        out.append(_to_jsonable(getattr(node, f.name)))
    return out


def canonical_serialize(node: IRNode) -> bytes:
    """Deterministic, platform-independent byte form of an IR tree.

    Spans are excluded, so two parses of sources differing only in comments,
    blank lines, or trailing whitespace serialize identically.
    """
    payload = json.dumps(_to_jsonable(node), separators=(",", ":"), sort_keys=False)
    return SCHEMA_VERSION.encode() + b"\x00" + payload.encode()


# ---------------------------------------------------------------------------
# Fingerprint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fingerprint:
    digest: str  # 64 hex chars (256 bits)

    @property
    def short(self) -> str:
        return self.digest[:8]


def fingerprint(
    definition: StencilDefinition,
    backend_id: str,
    externals: dict[str, float],
    toolchain: str,
    options: Optional[dict] = None,
) -> Fingerprint:
    """256-bit digest keying the build cache.

    Inputs: canonical IR bytes, backend id, external binding values, dtype
    configuration, generation options, and the toolchain version string.
    """
    h = hashlib.sha256()
    h.update(canonical_serialize(definition))
    h.update(b"\x00backend:" + backend_id.encode())
    for name in sorted(externals):
        v = externals[name]
        tok = str(int(v)) if isinstance(v, int) else _float_token(float(v))
        h.update(f"\x00ext:{name}={tok}".encode())
    h.update(b"\x00dtypes:f32,f64")
    for key in sorted(options or {}):
        h.update(f"\x00opt:{key}={(options or {})[key]!r}".encode())
    h.update(b"\x00toolchain:" + toolchain.encode())
    return Fingerprint(h.hexdigest())


# ---------------------------------------------------------------------------
# Human-readable dumps (stable; used for golden tests)
# ---------------------------------------------------------------------------


def _num_token(value: float) -> str:
    return repr(float(value))


def format_expr(e: Expr) -> str:
    if isinstance(e, Literal):
        return str(int(e.value)) if e.kind == "i64" else _num_token(e.value)
    if isinstance(e, NameRef):
        return e.name
    if isinstance(e, ScalarRef):
        return e.name
    if isinstance(e, FieldAccess):
        i, j, k = e.offset
        return f"{e.field}[{i},{j},{k}]"
    if isinstance(e, UnaryOp):
        sep = " " if e.op == "not" else ""
        return f"({e.op}{sep}{format_expr(e.operand)})"
    if isinstance(e, BinaryOp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, (BuiltinCall, FuncCall)):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    raise TypeError(f"unknown expression node {type(e).__name__}")


def _format_bound(b: AxisBound) -> str:
    return f"{b.ref}{b.offset:+d}"


def format_interval(iv: Optional[Interval]) -> str:
    if iv is None:
        return "[<implicit full>)"
    return f"[{_format_bound(iv.start)}, {_format_bound(iv.end)})"


def _format_extent(e: Extent) -> str:
    parts = [f"{lo}..{hi}" for lo, hi in zip(e.lo, e.hi)]
    return "[" + ", ".join(parts) + "]"


def _dump_stmts(stmts: tuple[Stmt, ...], indent: int, out: list[str]) -> None:
    pad = "  " * indent
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{format_expr(s.target)} = {format_expr(s.value)}")
        elif isinstance(s, If):
            out.append(f"{pad}if {format_expr(s.cond)}:")
            _dump_stmts(s.then_body, indent + 1, out)
            if s.else_body:
                out.append(f"{pad}else:")
                _dump_stmts(s.else_body, indent + 1, out)
        else:
            raise TypeError(f"unknown statement node {type(s).__name__}")


def dump_ir(node: IRNode, stage: str = "definition") -> str:
    """Stable, diff-friendly text for an IR tree.

    ``stage`` names the expected tree kind ("definition" or "implementation")
    and is checked against the node type.
    """
    out: list[str] = []
    if stage == "definition":
        if not isinstance(node, StencilDefinition):
            raise TypeError("definition dump requires a StencilDefinition")
        out.append(f"{SCHEMA_VERSION} definition")
        out.append(f"stencil {node.name}")
        for f in node.api_fields:
            out.append(f"  field {f.name}: {f.dtype}")
        for s in node.api_scalars:
            out.append(f"  scalar {s.name}: {s.dtype}")
        for comp in node.computations:
            out.append(f"  computation {comp.order}")
            for block in comp.intervals:
                out.append(f"    interval {format_interval(block.interval)}")
                _dump_stmts(block.body, 3, out)
    elif stage == "implementation":
        if not isinstance(node, StencilImplementation):
            raise TypeError("implementation dump requires a StencilImplementation")
        out.append(f"{SCHEMA_VERSION} implementation")
        out.append(f"stencil {node.name}")
        out.append(f"  k_min {node.k_min}")
        for f in node.api_fields:
            out.append(
                f"  field {f.name}: {f.dtype} extent {_format_extent(node.field_extent(f.name))}"
            )
        for s in node.api_scalars:
            out.append(f"  scalar {s.name}: {s.dtype}")
        for t in node.temporaries:
            out.append(f"  temp {t.name}: {t.dtype} extent {_format_extent(t.extent)}")
        for ms in node.multistages:
            out.append(f"  multistage {ms.order}")
            for st in ms.stages:
                out.append(
                    f"    stage extent {_format_extent(st.compute_extent)} "
                    f"interval {format_interval(st.interval)}"
                )
                _dump_stmts((st.body,), 3, out)
    else:
        raise ValueError(f"unknown dump stage {stage!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Tree helpers shared by analysis and backends
# ---------------------------------------------------------------------------


def walk_exprs(e: Expr):
    """Yield every expression node in ``e`` (pre-order)."""
    yield e
    if isinstance(e, UnaryOp):
        yield from walk_exprs(e.operand)
    elif isinstance(e, BinaryOp):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)
    elif isinstance(e, (BuiltinCall, FuncCall)):
        for a in e.args:
            yield from walk_exprs(a)


def stmt_reads(s: Stmt):
    """Yield every Expr read by statement ``s`` (targets excluded)."""
    if isinstance(s, Assign):
        yield from walk_exprs(s.value)
    elif isinstance(s, If):
        yield from walk_exprs(s.cond)
        for sub in s.then_body + s.else_body:
            yield from stmt_reads(sub)


def stmt_writes(s: Stmt):
    """Yield every assignment target in statement ``s`` (nested included)."""
    if isinstance(s, Assign):
        yield s.target
    elif isinstance(s, If):
        for sub in s.then_body + s.else_body:
            yield from stmt_writes(sub)


def map_exprs(s: Stmt, fn) -> Stmt:
    """Rebuild statement ``s`` with ``fn`` applied to every read expression
    (bottom-up); assignment targets pass through untouched."""

    def rec_expr(e: Expr) -> Expr:
        if isinstance(e, UnaryOp):
            e = replace(e, operand=rec_expr(e.operand))
        elif isinstance(e, BinaryOp):
            e = replace(e, left=rec_expr(e.left), right=rec_expr(e.right))
        elif isinstance(e, (BuiltinCall, FuncCall)):
            e = replace(e, args=tuple(rec_expr(a) for a in e.args))
        return fn(e)

    if isinstance(s, Assign):
        return replace(s, value=rec_expr(s.value))
    if isinstance(s, If):
        return replace(
            s,
            cond=rec_expr(s.cond),
            then_body=tuple(map_exprs(x, fn) for x in s.then_body),
            else_body=tuple(map_exprs(x, fn) for x in s.else_body),
        )
    raise TypeError(f"unknown statement node {type(s).__name__}")
