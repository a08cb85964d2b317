"""Semantic validation, interval normalization, temporary detection, extent
inference, and lowering of the definition IR to the implementation IR.

Vertical bounds stay symbolic in K (the runtime vertical size): predicates on
intervals are checked for every K >= k_min by evaluating on a window of K
values plus a large probe, which is exact because bound levels are affine in K
with slope 0 or 1.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Optional

from . import ir
from .errors import Code, CompilationError, Diagnostic, Span, error

_PROBE_K = 10**6


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diags)


def _raise_if_errors(diags: list[Diagnostic]) -> None:
    if has_errors(diags):
        raise CompilationError([d for d in diags if d.severity == "error"])


# ---------------------------------------------------------------------------
# Statement access collection
# ---------------------------------------------------------------------------


def _stage_read_accesses(stmt: ir.Stmt) -> list[ir.FieldAccess]:
    return [e for e in ir.stmt_reads(stmt) if isinstance(e, ir.FieldAccess)]


def _stage_write_names(stmt: ir.Stmt) -> set[str]:
    return {w.field for w in ir.stmt_writes(stmt)}


def _assigns_in(stmt: ir.Stmt) -> list[ir.Assign]:
    if isinstance(stmt, ir.Assign):
        return [stmt]
    if isinstance(stmt, ir.If):
        out = []
        for sub in stmt.then_body + stmt.else_body:
            out.extend(_assigns_in(sub))
        return out
    return []


def _flat_stages(stencil: ir.StencilDefinition):
    """Yield (comp_index, computation, block, stmt) in program order."""
    for ci, comp in enumerate(stencil.computations):
        for block in comp.intervals:
            for stmt in block.body:
                yield ci, comp, block, stmt


# ---------------------------------------------------------------------------
# Semantic validation (legality rules)
# ---------------------------------------------------------------------------


def validate_semantics(stencil: ir.StencilDefinition) -> list[Diagnostic]:
    """Check the offset legality rules; returns diagnostics, never raises.

    Per computation order: PARALLEL statements may not read any field they
    write at a nonzero offset, and no statement in a PARALLEL computation may
    read a computation-written field at a vertical offset; FORWARD forbids
    positive vertical reads of computation-written fields (BACKWARD negative);
    in every order a stage may not read a field it writes at a nonzero
    horizontal offset. Targets must carry zero offsets and must not be scalar
    parameters.
    """
    diags: list[Diagnostic] = []
    scalar_names = set(stencil.scalar_names())

    seen: set[str] = set()
    for decl in list(stencil.api_fields) + list(stencil.api_scalars):
        if decl.name in seen:
            diags.append(
                error(Code.SYNTAX, decl.span, f"duplicate parameter name '{decl.name}'")
            )
        seen.add(decl.name)

    for comp in stencil.computations:
        written_in_comp: set[str] = set()
        for block in comp.intervals:
            for stmt in block.body:
                written_in_comp |= _stage_write_names(stmt)

        for block in comp.intervals:
            for stmt in block.body:
                stage_writes = _stage_write_names(stmt)
                reads = _stage_read_accesses(stmt)

                for assign in _assigns_in(stmt):
                    if assign.target.offset != ir.ZERO_OFFSET:
                        diags.append(
                            error(
                                Code.TARGET_OFFSET,
                                assign.span,
                                f"assignment target '{assign.target.field}' must not "
                                "carry a nonzero offset",
                            )
                        )
                    if assign.target.field in scalar_names:
                        diags.append(
                            error(
                                Code.SCALAR_TARGET,
                                assign.span,
                                f"scalar parameter '{assign.target.field}' is read-only",
                            )
                        )

                for acc in reads:
                    off = acc.offset
                    horizontal = (off[0], off[1]) != (0, 0)
                    vertical = off[2] != 0
                    if acc.field in stage_writes and (horizontal or vertical):
                        if comp.order == ir.PARALLEL:
                            diags.append(
                                error(
                                    Code.SELF_ASSIGN_PARALLEL,
                                    acc.span,
                                    f"'{acc.field}' is written by this statement and read "
                                    f"at offset {off}; offset self-reads are forbidden in "
                                    "PARALLEL computations",
                                )
                            )
                            continue
                        if horizontal:
                            diags.append(
                                error(
                                    Code.HORIZONTAL_SELF_READ,
                                    acc.span,
                                    f"'{acc.field}' is written by this statement and read "
                                    f"at horizontal offset {off[:2]}",
                                )
                            )
                    if acc.field in written_in_comp:
                        if comp.order == ir.PARALLEL and vertical:
                            if acc.field not in stage_writes:
                                diags.append(
                                    error(
                                        Code.VERTICAL_PARALLEL_READ,
                                        acc.span,
                                        f"'{acc.field}' is written in this PARALLEL "
                                        f"computation and read at vertical offset {off[2]}",
                                    )
                                )
                        elif comp.order == ir.FORWARD and off[2] > 0:
                            diags.append(
                                error(
                                    Code.SEQUENTIAL_OFFSET_READ,
                                    acc.span,
                                    f"'{acc.field}' is written in this FORWARD computation "
                                    f"and read at positive vertical offset {off[2]}",
                                )
                            )
                        elif comp.order == ir.BACKWARD and off[2] < 0:
                            diags.append(
                                error(
                                    Code.SEQUENTIAL_OFFSET_READ,
                                    acc.span,
                                    f"'{acc.field}' is written in this BACKWARD computation "
                                    f"and read at negative vertical offset {off[2]}",
                                )
                            )
    return diags


# ---------------------------------------------------------------------------
# Interval normalization
# ---------------------------------------------------------------------------


def _interval_k_min(iv: ir.Interval, span: Span, diags: list[Diagnostic]) -> int:
    """Smallest K for which Start <= iv.start <= iv.end <= End.

    Always-empty or never-stabilizing intervals are diagnosed as errors.
    """
    s, e = iv.start, iv.end
    k_min = 1
    if s.ref == ir.START and e.ref == ir.START:
        if s.offset >= e.offset:
            diags.append(
                error(Code.EMPTY_INTERVAL, span, f"interval {ir.format_interval(iv)} is empty")
            )
        k_min = max(k_min, e.offset)  # end <= End
    elif s.ref == ir.START and e.ref == ir.END:
        k_min = max(k_min, s.offset - e.offset)  # start <= end
    elif s.ref == ir.END and e.ref == ir.END:
        if s.offset >= e.offset:
            diags.append(
                error(Code.EMPTY_INTERVAL, span, f"interval {ir.format_interval(iv)} is empty")
            )
        k_min = max(k_min, -s.offset)  # Start <= start
    else:  # end-anchored start, start-anchored end: empty for all large K
        diags.append(
            error(
                Code.EMPTY_INTERVAL,
                span,
                f"interval {ir.format_interval(iv)} is empty for all sufficiently "
                "large domains",
            )
        )
    return k_min


def _k_window(k_min: int, intervals: list[ir.Interval]) -> list[int]:
    max_off = max(
        [1] + [abs(b.offset) for iv in intervals for b in (iv.start, iv.end)]
    )
    window = list(range(k_min, k_min + 2 * max_off + 5))
    window.append(_PROBE_K + max_off)
    return window


def _disjoint_at(a: ir.Interval, b: ir.Interval, k: int) -> bool:
    a0, a1 = a.start.level(k), a.end.level(k)
    b0, b1 = b.start.level(k), b.end.level(k)
    if a0 >= a1 or b0 >= b1:  # one side empty at this K
        return True
    return a1 <= b0 or b1 <= a0


def _ordered_at(lo: ir.Interval, hi: ir.Interval, k: int) -> bool:
    """True when ``lo`` sits fully below ``hi`` at vertical size ``k``
    (empty intervals are vacuously ordered)."""
    l0, l1 = lo.start.level(k), lo.end.level(k)
    h0, h1 = hi.start.level(k), hi.end.level(k)
    if l0 >= l1 or h0 >= h1:
        return True
    return l1 <= h0


def normalize_intervals(
    stencil: ir.StencilDefinition,
) -> tuple[ir.StencilDefinition, int, list[Diagnostic]]:
    """Assign implicit full intervals, compute k_min, and check that interval
    lists are pairwise disjoint and ordered consistently with the iteration
    direction for every domain size K >= k_min."""
    diags: list[Diagnostic] = []
    comps = []
    k_min = 1

    for comp in stencil.computations:
        blocks = []
        for block in comp.intervals:
            iv = block.interval if block.interval is not None else ir.Interval.full()
            blocks.append(replace(block, interval=iv))
            k_min = max(k_min, _interval_k_min(iv, block.span, diags))
        comps.append(replace(comp, intervals=tuple(blocks)))

    if has_errors(diags):
        return replace(stencil, computations=tuple(comps)), k_min, diags

    for comp in comps:
        ivs = [b.interval for b in comp.intervals]
        spans = [b.span for b in comp.intervals]
        window = _k_window(k_min, ivs)
        for i in range(len(ivs)):
            for j in range(i + 1, len(ivs)):
                if not all(_disjoint_at(ivs[i], ivs[j], k) for k in window):
                    diags.append(
                        error(
                            Code.OVERLAPPING_INTERVALS,
                            spans[j],
                            f"intervals {ir.format_interval(ivs[i])} and "
                            f"{ir.format_interval(ivs[j])} overlap for some domain size",
                        )
                    )
        if comp.order in (ir.FORWARD, ir.BACKWARD):
            for i in range(len(ivs) - 1):
                lo, hi = (ivs[i], ivs[i + 1]) if comp.order == ir.FORWARD else (ivs[i + 1], ivs[i])
                if not all(_ordered_at(lo, hi, k) for k in window):
                    direction = "ascend" if comp.order == ir.FORWARD else "descend"
                    diags.append(
                        error(
                            Code.INTERVAL_ORDER_MISMATCH,
                            spans[i + 1],
                            f"{comp.order} interval list must {direction}: "
                            f"{ir.format_interval(ivs[i])} then {ir.format_interval(ivs[i + 1])}",
                        )
                    )

    return replace(stencil, computations=tuple(comps)), k_min, diags


# ---------------------------------------------------------------------------
# Temporaries: detection, dtype inference, definedness
# ---------------------------------------------------------------------------


def _shifted(iv: ir.Interval, k_off: int) -> ir.Interval:
    return ir.Interval(
        ir.AxisBound(iv.start.ref, iv.start.offset + k_off),
        ir.AxisBound(iv.end.ref, iv.end.offset + k_off),
    )


def _covered_at(read: ir.Interval, covers: list[ir.Interval], k: int) -> bool:
    r0, r1 = read.start.level(k), read.end.level(k)
    if r0 >= r1:
        return True
    spans = sorted(
        (c.start.level(k), c.end.level(k)) for c in covers if c.start.level(k) < c.end.level(k)
    )
    pos = r0
    for c0, c1 in spans:
        if c0 > pos:
            break
        pos = max(pos, c1)
        if pos >= r1:
            return True
    return pos >= r1


def _write_cover_intervals(
    stencil: ir.StencilDefinition,
    field: str,
    k_off: int,
    at_comp: int,
    at_block: int,
    at_stmt: int,
) -> list[ir.Interval]:
    """Intervals over which ``field`` is definitely written before a read at
    vertical offset ``k_off`` from statement (at_comp, at_block, at_stmt),
    under reference execution order."""
    covers: list[ir.Interval] = []
    for ci, comp in enumerate(stencil.computations):
        if ci > at_comp:
            break
        for bi, block in enumerate(comp.intervals):
            for si, stmt in enumerate(block.body):
                if field not in _stage_write_names(stmt):
                    continue
                if ci < at_comp:
                    covers.append(block.interval)  # earlier computation: fully executed
                    continue
                same_block = bi == at_block
                earlier_stmt = same_block and si < at_stmt
                if comp.order == ir.PARALLEL:
                    # within PARALLEL only same-level reads of earlier statements
                    # in the same block are defined (rule d bans vertical ones)
                    if earlier_stmt and k_off == 0:
                        covers.append(block.interval)
                elif k_off == 0:
                    if earlier_stmt:
                        covers.append(block.interval)
                else:
                    # sequential order: a level at |k_off| distance in the
                    # iteration direction was fully processed, any statement
                    if (comp.order == ir.FORWARD and k_off < 0) or (
                        comp.order == ir.BACKWARD and k_off > 0
                    ):
                        covers.append(block.interval)
    return covers


def detect_temporaries(
    stencil: ir.StencilDefinition, k_min: int
) -> tuple[dict[str, str], list[Diagnostic]]:
    """Identify temporary fields (first-assigned names absent from the
    signature), infer their dtypes, and check definedness: every vertical level
    a temporary is read at must have been written earlier in reference order,
    and vertical-offset reads of written api fields must stay inside the
    domain (their vertical extents are not tracked)."""
    diags: list[Diagnostic] = []
    field_names = set(stencil.field_names())
    scalar_names = set(stencil.scalar_names())
    field_dtypes = {f.name: f.dtype for f in stencil.api_fields}

    temp_names: list[str] = []
    for _, _, _, stmt in _flat_stages(stencil):
        for name in sorted(_stage_write_names(stmt)):
            if name not in field_names and name not in scalar_names and name not in temp_names:
                temp_names.append(name)

    written_api = {
        w for _, _, _, stmt in _flat_stages(stencil) for w in _stage_write_names(stmt)
    } & field_names

    all_intervals = [
        b.interval for c in stencil.computations for b in c.intervals if b.interval is not None
    ]
    window = _k_window(k_min, all_intervals)

    # definedness walk in program order
    for ci, comp in enumerate(stencil.computations):
        for bi, block in enumerate(comp.intervals):
            for si, stmt in enumerate(block.body):
                for acc in _stage_read_accesses(stmt):
                    k_off = acc.offset[2]
                    if acc.field in temp_names:
                        covers = _write_cover_intervals(stencil, acc.field, k_off, ci, bi, si)
                        read_iv = _shifted(block.interval, k_off)
                        if not all(_covered_at(read_iv, covers, k) for k in window):
                            diags.append(
                                error(
                                    Code.USE_BEFORE_DEFINE,
                                    acc.span,
                                    f"temporary '{acc.field}' read at vertical levels not "
                                    "written earlier in execution order",
                                )
                            )
                    elif acc.field in written_api and k_off != 0:
                        read_iv = _shifted(block.interval, k_off)
                        domain = ir.Interval.full()
                        if not all(_covered_at(read_iv, [domain], k) for k in window):
                            diags.append(
                                error(
                                    Code.OUT_OF_DOMAIN_READ,
                                    acc.span,
                                    f"'{acc.field}' is written by this stencil; reading it at "
                                    f"vertical offset {k_off} here leaves the compute domain",
                                )
                            )

    # dtype inference, in program order so temp dtypes are available to later temps
    temp_dtypes: dict[str, str] = {}
    contributing: dict[str, set[str]] = {t: set() for t in temp_names}
    for _, _, _, stmt in _flat_stages(stencil):
        for assign in _assigns_in(stmt):
            t = assign.target.field
            if t not in contributing:
                continue
            for e in ir.walk_exprs(assign.value):
                if isinstance(e, ir.FieldAccess):
                    if e.field in field_dtypes:
                        contributing[t].add(field_dtypes[e.field])
                    elif e.field in temp_dtypes:
                        contributing[t].add(temp_dtypes[e.field])
        for t in sorted(_stage_write_names(stmt) & set(temp_names)):
            if t not in temp_dtypes:
                kinds = contributing[t]
                temp_dtypes[t] = ir.F32 if kinds and kinds == {ir.F32} else ir.F64

    return {t: temp_dtypes.get(t, ir.F64) for t in temp_names}, diags


# ---------------------------------------------------------------------------
# Extent inference
# ---------------------------------------------------------------------------


def compute_extents(
    stencil: ir.StencilDefinition, temp_names: Iterable[str]
) -> tuple[dict[str, ir.Extent], dict[str, ir.Extent], list[ir.Extent]]:
    """Backward propagation of compute extents over stages in reverse program
    order. Returns (api field extents, temporary extents, per-stage extents in
    program order). Vertical components are tracked for pure input fields
    only; temporaries and written api fields keep zero vertical extents."""
    temp_set = set(temp_names)
    field_names = set(stencil.field_names())
    stages = list(_flat_stages(stencil))
    written = {w for _, _, _, stmt in stages for w in _stage_write_names(stmt)}
    pure_inputs = field_names - written

    required: dict[str, ir.Extent] = {}
    stage_extents: list[ir.Extent] = [ir.Extent.zero()] * len(stages)

    for idx in range(len(stages) - 1, -1, -1):
        _, _, _, stmt = stages[idx]
        writes = _stage_write_names(stmt)
        extent = ir.Extent.zero()
        if writes & temp_set:
            for t in writes & temp_set:
                extent = extent.union(required.get(t, ir.Extent.zero()))
            extent = extent.drop_vertical()
            if writes & field_names and not extent.is_zero():
                raise CompilationError(
                    [
                        error(
                            Code.TARGET_OFFSET,
                            stmt.span,
                            "statement writes both an api field and a temporary that "
                            "requires a halo; split it into separate statements",
                        )
                    ]
                )
        stage_extents[idx] = extent

        for acc in _stage_read_accesses(stmt):
            shifted = extent.shift(acc.offset)
            if acc.field not in pure_inputs:
                shifted = shifted.drop_vertical()
            required[acc.field] = required.get(acc.field, ir.Extent.zero()).union(shifted)

    field_extents = {f: required.get(f, ir.Extent.zero()) for f in sorted(field_names)}
    temp_extents = {t: required.get(t, ir.Extent.zero()) for t in sorted(temp_set)}
    return field_extents, temp_extents, stage_extents


# ---------------------------------------------------------------------------
# Lowering
# ---------------------------------------------------------------------------


def build_implementation(
    stencil: ir.StencilDefinition,
    field_extents: dict[str, ir.Extent],
    temp_dtypes: dict[str, str],
    temp_extents: dict[str, ir.Extent],
    stage_extents: list[ir.Extent],
    k_min: int,
) -> ir.StencilImplementation:
    """One multistage per computation, one stage per top-level statement."""
    multistages = []
    idx = 0
    for comp in stencil.computations:
        stages = []
        for block in comp.intervals:
            assert block.interval is not None
            for stmt in block.body:
                stages.append(ir.Stage(block.interval, stmt, stage_extents[idx]))
                idx += 1
        multistages.append(ir.MultiStage(comp.order, tuple(stages)))

    temporaries = tuple(
        ir.TempDecl(name, temp_dtypes[name], temp_extents[name]) for name in sorted(temp_dtypes)
    )
    return ir.StencilImplementation(
        name=stencil.name,
        api_fields=stencil.api_fields,
        api_scalars=stencil.api_scalars,
        multistages=tuple(multistages),
        temporaries=temporaries,
        field_extents=tuple(sorted(field_extents.items())),
        k_min=k_min,
    )


def lower(stencil: ir.StencilDefinition) -> ir.StencilImplementation:
    """Run the full analysis pipeline; raises CompilationError on diagnostics."""
    diags = validate_semantics(stencil)
    _raise_if_errors(diags)
    normalized, k_min, d2 = normalize_intervals(stencil)
    _raise_if_errors(diags + d2)
    temp_dtypes, d3 = detect_temporaries(normalized, k_min)
    _raise_if_errors(diags + d2 + d3)
    field_extents, temp_extents, stage_extents = compute_extents(normalized, temp_dtypes)
    return build_implementation(
        normalized, field_extents, temp_dtypes, temp_extents, stage_extents, k_min
    )
