"""Reference interpreter: per-point evaluation with exact reference semantics.

Statements execute one at a time: PARALLEL evaluates the rhs over the whole
stage region and interval before committing; FORWARD/BACKWARD sweep level by
level, whole plane per statement. Expressions are compiled once into nested
closures evaluated per point, over flat Python-float buffers, so results are
plain IEEE double arithmetic in source expression order.
"""

from __future__ import annotations

import math
import operator
from typing import Callable

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

_NAN = float("nan")
_INF = float("inf")


# IEEE-shaped scalar builtins: NaN-propagating min/max, non-raising domain
# behavior to match the bulk and native engines
def _min(a: float, b: float) -> float:
    if a != a:
        return a
    if b != b:
        return b
    return a if a <= b else b


def _max(a: float, b: float) -> float:
    if a != a:
        return a
    if b != b:
        return b
    return a if a >= b else b


def _sqrt(a: float) -> float:
    try:
        return math.sqrt(a)
    except ValueError:
        return _NAN


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        return _INF


def _log(a: float) -> float:
    if a != a:
        return _NAN
    try:
        return math.log(a)
    except ValueError:
        return -_INF if a == 0.0 else _NAN


def _pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except ValueError:
        return _NAN
    except OverflowError:
        return math.copysign(_INF, a) if (b % 2.0) == 1.0 else _INF


def _floor(a: float) -> float:
    return float(math.floor(a)) if a == a and abs(a) != _INF else a


def _ceil(a: float) -> float:
    return float(math.ceil(a)) if a == a and abs(a) != _INF else a


_BUILTINS: dict[str, Callable] = {
    "abs": abs,
    "min": _min,
    "max": _max,
    "sqrt": _sqrt,
    "exp": _exp,
    "log": _log,
    "pow": _pow,
    "floor": _floor,
    "ceil": _ceil,
}

_CMP = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


def _narrow_f32(v: float) -> float:
    return float(np.float32(v))


class _Env:
    """Per-invocation binding of field buffers and scalar values."""

    __slots__ = ("fields", "scalars")

    def __init__(self):
        self.fields: dict[str, tuple[list, int, int, int, int, int, int]] = {}
        self.scalars: dict[str, float] = {}


def _compile_expr(e: ir.Expr):
    """Return binder(env) -> fn(i, j, k) evaluating ``e`` at a point."""
    if isinstance(e, ir.Literal):
        v = float(e.value)
        return lambda env: lambda i, j, k: v
    if isinstance(e, ir.ScalarRef):
        name = e.name
        def bind_scalar(env, _name=name):
            v = env.scalars[_name]
            return lambda i, j, k: v
        return bind_scalar
    if isinstance(e, ir.FieldAccess):
        name, (di, dj, dk) = e.field, e.offset
        def bind_access(env, _n=name, _di=di, _dj=dj, _dk=dk):
            buf, oi, oj, ok, si, sj, sk = env.fields[_n]
            base = (oi + _di) * si + (oj + _dj) * sj + (ok + _dk) * sk
            if sk == 1:
                return lambda i, j, k: buf[base + i * si + j * sj + k]
            return lambda i, j, k: buf[base + i * si + j * sj + k * sk]
        return bind_access
    if isinstance(e, ir.UnaryOp):
        fb = _compile_expr(e.operand)
        if e.op == "-":
            return lambda env: (lambda f: lambda i, j, k: -f(i, j, k))(fb(env))
        return lambda env: (lambda f: lambda i, j, k: not f(i, j, k))(fb(env))
    if isinstance(e, ir.BinaryOp):
        return _compile_binop(e)
    if isinstance(e, ir.BuiltinCall):
        fn = _BUILTINS[e.name]
        binders = [_compile_expr(a) for a in e.args]
        if len(binders) == 1:
            ab = binders[0]
            return lambda env: (lambda a: lambda i, j, k: fn(a(i, j, k)))(ab(env))
        ab, bb = binders
        return lambda env: (
            lambda a, b: lambda i, j, k: fn(a(i, j, k), b(i, j, k))
        )(ab(env), bb(env))
    raise TypeError(f"cannot interpret expression node {type(e).__name__}")


def _compile_binop(e: ir.BinaryOp):
    op = e.op
    lb, rb = _compile_expr(e.left), _compile_expr(e.right)
    lconst = float(e.left.value) if isinstance(e.left, ir.Literal) else None
    rconst = float(e.right.value) if isinstance(e.right, ir.Literal) else None

    if op == "+":
        if rconst is not None:
            return lambda env: (lambda l, c=rconst: lambda i, j, k: l(i, j, k) + c)(lb(env))
        if lconst is not None:
            return lambda env: (lambda r, c=lconst: lambda i, j, k: c + r(i, j, k))(rb(env))
        return lambda env: (lambda l, r: lambda i, j, k: l(i, j, k) + r(i, j, k))(lb(env), rb(env))
    if op == "-":
        if rconst is not None:
            return lambda env: (lambda l, c=rconst: lambda i, j, k: l(i, j, k) - c)(lb(env))
        if lconst is not None:
            return lambda env: (lambda r, c=lconst: lambda i, j, k: c - r(i, j, k))(rb(env))
        return lambda env: (lambda l, r: lambda i, j, k: l(i, j, k) - r(i, j, k))(lb(env), rb(env))
    if op == "*":
        if rconst is not None:
            return lambda env: (lambda l, c=rconst: lambda i, j, k: l(i, j, k) * c)(lb(env))
        if lconst is not None:
            return lambda env: (lambda r, c=lconst: lambda i, j, k: c * r(i, j, k))(rb(env))
        return lambda env: (lambda l, r: lambda i, j, k: l(i, j, k) * r(i, j, k))(lb(env), rb(env))
    if op == "/":
        def bind_div(env):
            l, r = lb(env), rb(env)
            def div(i, j, k):
                a, b = l(i, j, k), r(i, j, k)
                try:
                    return a / b
                except ZeroDivisionError:
                    # IEEE: x/0 = +-inf, 0/0 = NaN
                    if a != a or a == 0.0:
                        return _NAN
                    return math.copysign(_INF, a) * math.copysign(1.0, b)
            return div
        return bind_div
    if op in _CMP:
        cmp = _CMP[op]
        return lambda env: (
            lambda l, r: lambda i, j, k: cmp(l(i, j, k), r(i, j, k))
        )(lb(env), rb(env))
    if op == "and":
        return lambda env: (
            lambda l, r: lambda i, j, k: l(i, j, k) and r(i, j, k)
        )(lb(env), rb(env))
    if op == "or":
        return lambda env: (
            lambda l, r: lambda i, j, k: l(i, j, k) or r(i, j, k)
        )(lb(env), rb(env))
    raise ValueError(f"unknown operator {op!r}")


def _compile_point_stmt(stmt: ir.Stmt, dtypes: dict[str, str]):
    """binder(env) -> fn(i, j, k) executing the statement at one point."""
    if isinstance(stmt, ir.Assign):
        rhs_b = _compile_expr(stmt.value)
        name = stmt.target.field
        narrow = dtypes.get(name) == ir.F32
        def bind(env):
            buf, oi, oj, ok, si, sj, sk = env.fields[name]
            base = oi * si + oj * sj + ok * sk
            rhs = rhs_b(env)
            if narrow:
                def run_narrow(i, j, k):
                    buf[base + i * si + j * sj + k * sk] = _narrow_f32(rhs(i, j, k))
                return run_narrow
            def run(i, j, k):
                buf[base + i * si + j * sj + k * sk] = rhs(i, j, k)
            return run
        return bind
    if isinstance(stmt, ir.If):
        cond_b = _compile_expr(stmt.cond)
        then_bs = [_compile_point_stmt(s, dtypes) for s in stmt.then_body]
        else_bs = [_compile_point_stmt(s, dtypes) for s in stmt.else_body]
        def bind_if(env):
            cond = cond_b(env)
            then_fns = [b(env) for b in then_bs]
            else_fns = [b(env) for b in else_bs]
            def run(i, j, k):
                for f in then_fns if cond(i, j, k) else else_fns:
                    f(i, j, k)
            return run
        return bind_if
    raise TypeError(f"unknown statement node {type(stmt).__name__}")


class _StageExec:
    """Compiled executor for one stage; bound to buffers per invocation."""

    def __init__(self, stage: ir.Stage, dtypes: dict[str, str]):
        self.stage = stage
        body = stage.body
        self.is_assign = isinstance(body, ir.Assign)
        if self.is_assign:
            self.rhs_b = _compile_expr(body.value)
            self.target = body.target.field
            self.narrow = dtypes.get(self.target) == ir.F32
        else:
            self.point_b = _compile_point_stmt(body, dtypes)

    def run_slab(self, env: _Env, domain: Int3, k_levels: range) -> None:
        """Evaluate over region x k_levels with commit after full evaluation."""
        i0, i1, j0, j1 = stage_region(self.stage.compute_extent, domain)
        if i0 >= i1 or j0 >= j1 or len(k_levels) == 0:
            return
        if self.is_assign:
            rhs = self.rhs_b(env)
            vals = [
                rhs(i, j, k)
                for i in range(i0, i1)
                for j in range(j0, j1)
                for k in k_levels
            ]
            buf, oi, oj, ok, si, sj, sk = env.fields[self.target]
            base = oi * si + oj * sj + ok * sk
            narrow = self.narrow
            idx = 0
            for i in range(i0, i1):
                bi = base + i * si
                for j in range(j0, j1):
                    bij = bi + j * sj
                    for k in k_levels:
                        v = vals[idx]
                        buf[bij + k * sk] = _narrow_f32(v) if narrow else v
                        idx += 1
        else:
            point = self.point_b(env)
            for i in range(i0, i1):
                for j in range(j0, j1):
                    for k in k_levels:
                        point(i, j, k)


def build(impl: ir.StencilImplementation, fingerprint: ir.Fingerprint) -> ExecutableStencil:
    dtypes = {f.name: f.dtype for f in impl.api_fields}
    dtypes.update({t.name: t.dtype for t in impl.temporaries})
    stage_execs = [
        [(stage, _StageExec(stage, dtypes)) for stage in ms.stages] for ms in impl.multistages
    ]
    written = {
        w.field
        for ms in impl.multistages
        for stage in ms.stages
        for w in ir.stmt_writes(stage.body)
    }

    def run(domain: Int3, field_args, scalar_args) -> None:
        if any(d == 0 for d in domain):
            return
        env = _Env()
        env.scalars = {name: float(v) for name, v in scalar_args.items()}
        shapes: dict[str, Int3] = {}
        for f in impl.api_fields:
            storage, origin = field_args[f.name]
            logical = np.ascontiguousarray(storage.view, dtype=np.float64)
            buf = logical.ravel().tolist()
            s = storage.shape
            shapes[f.name] = s
            env.fields[f.name] = (buf, *origin, s[1] * s[2], s[2], 1)
        for t in impl.temporaries:
            shape = temp_shape(t, domain)
            buf = [_NAN] * (shape[0] * shape[1] * shape[2])
            env.fields[t.name] = (buf, *temp_origin(t), shape[1] * shape[2], shape[2], 1)

        nk = domain[2]
        for ms, execs in zip(impl.multistages, stage_execs):
            if ms.order == ir.PARALLEL:
                for stage, ex in execs:
                    ex.run_slab(env, domain, stage.interval.levels(nk))
            else:
                exec_by_stage = dict((id(s), x) for s, x in execs)
                for interval, stages in interval_groups(ms):
                    levels = interval.levels(nk)
                    if ms.order == ir.BACKWARD:
                        levels = reversed(levels)
                    for k in levels:
                        for stage in stages:
                            exec_by_stage[id(stage)].run_slab(env, domain, range(k, k + 1))

        for f in impl.api_fields:
            if f.name not in written:
                continue
            storage, _ = field_args[f.name]
            buf = env.fields[f.name][0]
            arr = np.asarray(buf, dtype=np.float64).reshape(shapes[f.name])
            storage.view[...] = arr if f.dtype == ir.F64 else arr.astype(np.float32)

    return ExecutableStencil("debug", fingerprint, run)
