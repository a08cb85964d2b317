"""Bulk whole-plane engine: each statement is one array operation over shifted
views, with the same observable semantics as the reference interpreter.

PARALLEL statements evaluate over full domain x interval slabs; FORWARD and
BACKWARD sweep level by level with one-plane slabs. Conditionals become masked
commits per nested statement. All arithmetic happens in float64 (f32 operands
widen on read, stores narrow), keeping results bitwise-aligned with the other
engines wherever operation order is preserved.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .. import ir
from .common import (
    ExecutableStencil,
    Int3,
    interval_groups,
    stage_region,
    temp_origin,
    temp_shape,
)

_UFUNCS = {
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "pow": np.power,
    "floor": np.floor,
    "ceil": np.ceil,
}


class _SlabCtx:
    """One stage execution region: absolute array slices per access."""

    __slots__ = ("arrays", "origins", "scalars", "i0", "i1", "j0", "j1", "k0", "k1")

    def __init__(self, arrays, origins, scalars, region, krange):
        self.arrays = arrays
        self.origins = origins
        self.scalars = scalars
        self.i0, self.i1, self.j0, self.j1 = region
        self.k0, self.k1 = krange

    def view(self, name: str, offset: ir.Offset) -> np.ndarray:
        oi, oj, ok = self.origins[name]
        di, dj, dk = offset
        return self.arrays[name][
            self.i0 + oi + di : self.i1 + oi + di,
            self.j0 + oj + dj : self.j1 + oj + dj,
            self.k0 + ok + dk : self.k1 + ok + dk,
        ]


def _eval(e: ir.Expr, ctx: _SlabCtx):
    if isinstance(e, ir.Literal):
        return float(e.value)
    if isinstance(e, ir.ScalarRef):
        return ctx.scalars[e.name]
    if isinstance(e, ir.FieldAccess):
        v = ctx.view(e.field, e.offset)
        return v.astype(np.float64) if v.dtype != np.float64 else v
    if isinstance(e, ir.UnaryOp):
        x = _eval(e.operand, ctx)
        return np.logical_not(x) if e.op == "not" else np.negative(x)
    if isinstance(e, ir.BinaryOp):
        lhs, rhs = _eval(e.left, ctx), _eval(e.right, ctx)
        op = e.op
        if op == "+":
            return lhs + rhs
        if op == "-":
            return lhs - rhs
        if op == "*":
            return lhs * rhs
        if op == "/":
            return np.divide(lhs, rhs)
        if op == "<":
            return np.less(lhs, rhs)
        if op == "<=":
            return np.less_equal(lhs, rhs)
        if op == ">":
            return np.greater(lhs, rhs)
        if op == ">=":
            return np.greater_equal(lhs, rhs)
        if op == "==":
            return np.equal(lhs, rhs)
        if op == "!=":
            return np.not_equal(lhs, rhs)
        if op == "and":
            return np.logical_and(lhs, rhs)
        if op == "or":
            return np.logical_or(lhs, rhs)
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(e, ir.BuiltinCall):
        return _UFUNCS[e.name](*(_eval(a, ctx) for a in e.args))
    raise TypeError(f"cannot evaluate expression node {type(e).__name__}")


def _exec_stmt(stmt: ir.Stmt, ctx: _SlabCtx, mask: Optional[np.ndarray]) -> None:
    if isinstance(stmt, ir.Assign):
        rhs = _eval(stmt.value, ctx)
        target = ctx.view(stmt.target.field, stmt.target.offset)
        if mask is None:
            target[...] = rhs
        else:
            target[...] = np.where(mask, rhs, target)
        return
    if isinstance(stmt, ir.If):
        cond = _eval(stmt.cond, ctx)
        cond = np.broadcast_to(cond, (ctx.i1 - ctx.i0, ctx.j1 - ctx.j0, ctx.k1 - ctx.k0))
        then_mask = cond if mask is None else np.logical_and(mask, cond)
        inv = np.logical_not(cond)
        else_mask = inv if mask is None else np.logical_and(mask, inv)
        for s in stmt.then_body:
            _exec_stmt(s, ctx, then_mask)
        for s in stmt.else_body:
            _exec_stmt(s, ctx, else_mask)
        return
    raise TypeError(f"unknown statement node {type(stmt).__name__}")


def build(impl: ir.StencilImplementation, fingerprint: ir.Fingerprint) -> ExecutableStencil:
    np_dtype = {ir.F32: np.float32, ir.F64: np.float64}

    def run(domain: Int3, field_args, scalar_args) -> None:
        if any(d == 0 for d in domain):
            return
        arrays: dict[str, np.ndarray] = {}
        origins: dict[str, Int3] = {}
        for f in impl.api_fields:
            storage, origin = field_args[f.name]
            arrays[f.name] = storage.view
            origins[f.name] = origin
        for t in impl.temporaries:
            arrays[t.name] = np.full(temp_shape(t, domain), np.nan, dtype=np_dtype[t.dtype])
            origins[t.name] = temp_origin(t)
        scalars = {name: float(v) for name, v in scalar_args.items()}
        nk = domain[2]

        def run_stage(stage: ir.Stage, k0: int, k1: int) -> None:
            region = stage_region(stage.compute_extent, domain)
            if region[0] >= region[1] or region[2] >= region[3] or k0 >= k1:
                return
            ctx = _SlabCtx(arrays, origins, scalars, region, (k0, k1))
            with np.errstate(all="ignore"):
                _exec_stmt(stage.body, ctx, None)

        for ms in impl.multistages:
            if ms.order == ir.PARALLEL:
                for stage in ms.stages:
                    levels = stage.interval.levels(nk)
                    run_stage(stage, levels.start, levels.stop)
            else:
                for interval, stages in interval_groups(ms):
                    levels = interval.levels(nk)
                    order = reversed(levels) if ms.order == ir.BACKWARD else levels
                    for k in order:
                        for stage in stages:
                            run_stage(stage, k, k + 1)

    return ExecutableStencil("vec", fingerprint, run)
