"""Definition-IR transforms: function inlining and compile-time external binding.

Inlining substitutes pure function bodies at call sites: parameter accesses
compose offsets additively with argument offsets, callee locals are renamed
fresh and hoisted as temporary-field assignments before the calling statement.
Binding replaces every remaining free identifier with its compile-time literal.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Union

from ..errors import Code, DslError
from .. import ir


def _add_offsets(a: ir.Offset, b: ir.Offset) -> ir.Offset:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


class _Inliner:
    def __init__(self, functions: dict[str, ir.FunctionDef]):
        self.functions = functions
        self.counter = 0

    def expand_stencil(self, stencil: ir.StencilDefinition) -> ir.StencilDefinition:
        comps = []
        for comp in stencil.computations:
            blocks = []
            for block in comp.intervals:
                stmts: list[ir.Stmt] = []
                for stmt in block.body:
                    stmts.extend(self._expand_stmt(stmt, expansion_stack=()))
                blocks.append(replace(block, body=tuple(stmts)))
            comps.append(replace(comp, intervals=tuple(blocks)))
        return replace(stencil, computations=tuple(comps))

    def _expand_stmt(self, stmt: ir.Stmt, expansion_stack: tuple[str, ...]) -> list[ir.Stmt]:
        hoisted: list[ir.Stmt] = []
        if isinstance(stmt, ir.Assign):
            value = self._expand_expr(stmt.value, hoisted, expansion_stack)
            return hoisted + [replace(stmt, value=value)]
        if isinstance(stmt, ir.If):
            cond = self._expand_expr(stmt.cond, hoisted, expansion_stack)
            then_body = tuple(
                s for sub in stmt.then_body for s in self._expand_stmt(sub, expansion_stack)
            )
            else_body = tuple(
                s for sub in stmt.else_body for s in self._expand_stmt(sub, expansion_stack)
            )
            return hoisted + [replace(stmt, cond=cond, then_body=then_body, else_body=else_body)]
        raise TypeError(f"unknown statement node {type(stmt).__name__}")

    def _expand_expr(
        self, e: ir.Expr, hoisted: list[ir.Stmt], expansion_stack: tuple[str, ...]
    ) -> ir.Expr:
        if isinstance(e, ir.UnaryOp):
            return replace(e, operand=self._expand_expr(e.operand, hoisted, expansion_stack))
        if isinstance(e, ir.BinaryOp):
            return replace(
                e,
                left=self._expand_expr(e.left, hoisted, expansion_stack),
                right=self._expand_expr(e.right, hoisted, expansion_stack),
            )
        if isinstance(e, ir.BuiltinCall):
            return replace(
                e, args=tuple(self._expand_expr(a, hoisted, expansion_stack) for a in e.args)
            )
        if isinstance(e, ir.FuncCall):
            args = tuple(self._expand_expr(a, hoisted, expansion_stack) for a in e.args)
            if e.name in ir.BUILTINS:
                want = ir.BUILTINS[e.name]
                if len(args) != want:
                    raise DslError(
                        Code.ARITY,
                        e.span,
                        f"builtin '{e.name}' takes {want} argument(s), got {len(args)}",
                    )
                return ir.BuiltinCall(e.name, args, span=e.span)
            fn = self.functions.get(e.name)
            if fn is None:
                raise DslError(Code.UNKNOWN_FUNCTION, e.span, f"unknown function '{e.name}'")
            if e.name in expansion_stack:
                cycle = " -> ".join(expansion_stack + (e.name,))
                raise DslError(Code.RECURSION, e.span, f"recursive function call: {cycle}")
            if len(args) != len(fn.params):
                raise DslError(
                    Code.ARITY,
                    e.span,
                    f"function '{e.name}' takes {len(fn.params)} argument(s), got {len(args)}",
                )
            return self._expand_call(fn, args, e, hoisted, expansion_stack + (e.name,))
        return e

    def _expand_call(
        self,
        fn: ir.FunctionDef,
        args: tuple[ir.Expr, ...],
        call: ir.FuncCall,
        hoisted: list[ir.Stmt],
        expansion_stack: tuple[str, ...],
    ) -> ir.Expr:
        self.counter += 1
        param_map = dict(zip(fn.params, args))
        local_map = {
            a.target.field: f"__{fn.name}{self.counter}_{a.target.field}"
            for a in fn.body
            if a.target.field not in fn.params
        }

        def subst(node: ir.Expr) -> ir.Expr:
            if isinstance(node, ir.NameRef):
                if node.name in param_map:
                    return self._apply_offset(param_map[node.name], ir.ZERO_OFFSET, call)
                if node.name in local_map:
                    return ir.FieldAccess(local_map[node.name], ir.ZERO_OFFSET, span=call.span)
                return node  # external; bound later
            if isinstance(node, ir.FieldAccess):
                if node.field in param_map:
                    return self._apply_offset(param_map[node.field], node.offset, call)
                if node.field in local_map:
                    return ir.FieldAccess(local_map[node.field], node.offset, span=call.span)
                return node
            if isinstance(node, ir.UnaryOp):
                return replace(node, operand=subst(node.operand))
            if isinstance(node, ir.BinaryOp):
                return replace(node, left=subst(node.left), right=subst(node.right))
            if isinstance(node, (ir.BuiltinCall, ir.FuncCall)):
                return replace(node, args=tuple(subst(a) for a in node.args))
            return node

        for local_assign in fn.body:
            if local_assign.target.field in fn.params:
                raise DslError(
                    Code.SYNTAX,
                    local_assign.span,
                    f"function '{fn.name}' assigns to its parameter "
                    f"'{local_assign.target.field}'",
                )
            if local_assign.target.offset != ir.ZERO_OFFSET:
                raise DslError(
                    Code.TARGET_OFFSET,
                    local_assign.span,
                    "assignment target must not carry a nonzero offset",
                )
            substituted = subst(local_assign.value)
            expanded = self._expand_expr(substituted, hoisted, expansion_stack)
            hoisted.append(
                ir.Assign(
                    ir.FieldAccess(
                        local_map[local_assign.target.field], ir.ZERO_OFFSET, span=call.span
                    ),
                    expanded,
                    span=call.span,
                )
            )
        ret = subst(fn.return_expr)
        return self._expand_expr(ret, hoisted, expansion_stack)

    @staticmethod
    def _apply_offset(arg: ir.Expr, offset: ir.Offset, call: ir.FuncCall) -> ir.Expr:
        """Compose a callee-body access offset onto the call-site argument."""
        if isinstance(arg, ir.FieldAccess):
            return ir.FieldAccess(arg.field, _add_offsets(arg.offset, offset), span=call.span)
        if isinstance(arg, ir.NameRef):
            if offset == ir.ZERO_OFFSET:
                return arg
            return ir.FieldAccess(arg.name, offset, span=call.span)
        if offset != ir.ZERO_OFFSET:
            raise DslError(
                Code.SYNTAX,
                call.span,
                "cannot apply a nonzero offset to a composite call argument",
            )
        return arg


def inline_functions(
    items: list[Union[ir.StencilDefinition, ir.FunctionDef]],
) -> list[ir.StencilDefinition]:
    """Substitute all function calls in every parsed stencil; calls must be acyclic."""
    functions = {f.name: f for f in items if isinstance(f, ir.FunctionDef)}
    inliner = _Inliner(functions)
    return [
        inliner.expand_stencil(s) for s in items if isinstance(s, ir.StencilDefinition)
    ]


def bind_externals(
    stencil: ir.StencilDefinition, externals: dict[str, Union[int, float]]
) -> ir.StencilDefinition:
    """Resolve every name: api fields and assignment targets become field
    accesses, scalar parameters become scalar reads, and any remaining free
    identifier is replaced by its external literal binding."""
    for name, value in externals.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DslError(
                Code.EXTERNAL_TYPE,
                stencil.span,
                f"external '{name}' must be an int or float, got {type(value).__name__}",
            )

    field_names = set(stencil.field_names())
    scalar_names = set(stencil.scalar_names())
    target_names = {
        w.field
        for comp in stencil.computations
        for block in comp.intervals
        for stmt in block.body
        for w in ir.stmt_writes(stmt)
    }
    known_fields = field_names | (target_names - scalar_names)

    def literal_for(name: str, span) -> ir.Literal:
        value = externals[name]
        if isinstance(value, int):
            return ir.Literal(float(value), "i64", span=span)
        return ir.Literal(value, "f64", span=span)

    def resolve(e: ir.Expr) -> ir.Expr:
        if isinstance(e, ir.NameRef):
            if e.name in known_fields:
                return ir.FieldAccess(e.name, ir.ZERO_OFFSET, span=e.span)
            if e.name in scalar_names:
                return ir.ScalarRef(e.name, span=e.span)
            if e.name in externals:
                return literal_for(e.name, e.span)
            raise DslError(Code.UNBOUND_EXTERNAL, e.span, f"unbound external '{e.name}'")
        if isinstance(e, ir.FieldAccess):
            if e.field in known_fields:
                return e
            if e.field in scalar_names:
                if e.offset == ir.ZERO_OFFSET:
                    return ir.ScalarRef(e.field, span=e.span)
                raise DslError(
                    Code.SYNTAX, e.span, f"scalar '{e.field}' cannot be read with offsets"
                )
            if e.field in externals:
                if e.offset == ir.ZERO_OFFSET:
                    return literal_for(e.field, e.span)
                raise DslError(
                    Code.SYNTAX, e.span, f"external '{e.field}' cannot be read with offsets"
                )
            # a bracketed access is unambiguously a field read: diagnose as an
            # undefined temporary rather than a missing external
            raise DslError(
                Code.USE_BEFORE_DEFINE,
                e.span,
                f"field '{e.field}' is read but never written",
            )
        if isinstance(e, ir.FuncCall):
            raise DslError(
                Code.UNKNOWN_FUNCTION,
                e.span,
                f"call to '{e.name}' survived inlining; bind_externals requires inlined input",
            )
        return e

    comps = []
    for comp in stencil.computations:
        blocks = []
        for block in comp.intervals:
            blocks.append(
                replace(block, body=tuple(ir.map_exprs(s, resolve) for s in block.body))
            )
        comps.append(replace(comp, intervals=tuple(blocks)))
    return replace(stencil, computations=tuple(comps))
