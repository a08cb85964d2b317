"""Recursive-descent parser: token stream -> definition IR.

Suites follow the indentation structure of the lexer; a colon may also be
followed by a single inline item, so compact one-line programs parse.
Comparisons and boolean operators are only accepted inside `if` conditions.
"""

from __future__ import annotations

from typing import Callable, Optional, Union

from ..errors import Code, DslError, Span
from .. import ir
from .lexer import Token, UNSUPPORTED_KEYWORDS, tokenize


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # -- token plumbing -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        i = min(self.pos + ahead, len(self.toks) - 1)
        return self.toks[i]

    def advance(self) -> Token:
        tok = self.toks[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: Optional[str] = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            expected = what or kind
            raise DslError(
                Code.SYNTAX,
                tok.span,
                f"expected {expected}, found {self._describe(tok)}",
            )
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "KEYWORD" or tok.value != word:
            raise DslError(
                Code.SYNTAX, tok.span, f"expected '{word}', found {self._describe(tok)}"
            )
        return self.advance()

    @staticmethod
    def _describe(tok: Token) -> str:
        if tok.kind in ("NAME", "KEYWORD", "INT", "FLOAT"):
            return f"'{tok.value}'"
        if tok.kind in ("NEWLINE", "INDENT", "DEDENT", "EOF"):
            return tok.kind.lower().replace("eof", "end of input")
        return f"'{tok.kind}'"

    def _at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "KEYWORD" and tok.value == word

    # -- program ------------------------------------------------------------

    def parse_program(self) -> list[Union[ir.StencilDefinition, ir.FunctionDef]]:
        out: list[Union[ir.StencilDefinition, ir.FunctionDef]] = []
        while self.peek().kind != "EOF":
            if self._at_keyword("stencil"):
                out.append(self.parse_stencil())
            elif self._at_keyword("function"):
                out.append(self.parse_function())
            else:
                tok = self.peek()
                if tok.kind == "NAME" and tok.value in UNSUPPORTED_KEYWORDS:
                    raise DslError(
                        Code.UNKNOWN_KEYWORD, tok.span, f"unsupported keyword '{tok.value}'"
                    )
                raise DslError(
                    Code.SYNTAX,
                    tok.span,
                    f"expected 'stencil' or 'function', found {self._describe(tok)}",
                )
        return out

    # -- suites -------------------------------------------------------------

    def _suite(self, parse_item: Callable[[], object]) -> list:
        """Parse a block after ':': an indented item list or one inline item."""
        if self.peek().kind == "NEWLINE":
            self.advance()
            self.expect("INDENT", "an indented block")
            items = [parse_item()]
            while self.peek().kind not in ("DEDENT", "EOF"):
                items.append(parse_item())
            self.expect("DEDENT")
            return items
        return [parse_item()]

    # -- top-level definitions ----------------------------------------------

    def parse_stencil(self) -> ir.StencilDefinition:
        kw = self.expect_keyword("stencil")
        name = self.expect("NAME", "stencil name")
        self.expect("(")
        api_fields: list[ir.FieldDecl] = []
        api_scalars: list[ir.ScalarDecl] = []
        while True:
            pname = self.expect("NAME", "parameter name")
            self.expect(":")
            is_field, dtype = self._parse_param_type()
            if is_field:
                api_fields.append(ir.FieldDecl(pname.value, dtype, span=pname.span))
            else:
                api_scalars.append(ir.ScalarDecl(pname.value, dtype, span=pname.span))
            if self.peek().kind == ",":
                self.advance()
                continue
            break
        self.expect(")")
        self.expect(":")
        comps = self._suite(self.parse_computation)
        for c in comps:
            if not isinstance(c, ir.Computation):
                raise DslError(Code.SYNTAX, kw.span, "stencil body must be computations")
        return ir.StencilDefinition(
            name.value, tuple(api_fields), tuple(api_scalars), tuple(comps), span=kw.span
        )

    def _parse_param_type(self) -> tuple[bool, str]:
        tok = self.expect("NAME", "a parameter type (Field[f32|f64], f32, or f64)")
        if tok.value == "Field":
            self.expect("[")
            dt = self.expect("NAME", "field dtype f32 or f64")
            if dt.value not in ir.DTYPES:
                raise DslError(Code.SYNTAX, dt.span, f"unknown dtype '{dt.value}'")
            self.expect("]")
            return True, dt.value
        if tok.value in ir.DTYPES:
            return False, tok.value
        raise DslError(Code.SYNTAX, tok.span, f"unknown parameter type '{tok.value}'")

    def parse_function(self) -> ir.FunctionDef:
        kw = self.expect_keyword("function")
        name = self.expect("NAME", "function name")
        self.expect("(")
        params: list[str] = []
        if self.peek().kind == "NAME":
            params.append(self.advance().value)
            while self.peek().kind == ",":
                self.advance()
                params.append(self.expect("NAME", "parameter name").value)
        self.expect(")")
        self.expect(":")
        body: list[ir.Assign] = []
        ret: list[ir.Expr] = []

        def item():
            if self._at_keyword("return"):
                if ret:
                    raise DslError(
                        Code.SYNTAX, self.peek().span, "function has more than one return"
                    )
                self.advance()
                ret.append(self._parse_expr(in_condition=False))
                self._end_statement()
                return None
            if self._at_keyword("with") or self._at_keyword("if"):
                tok = self.peek()
                raise DslError(
                    Code.SYNTAX,
                    tok.span,
                    "function bodies allow only assignments and a final return",
                )
            if ret:
                raise DslError(
                    Code.SYNTAX, self.peek().span, "statement after return in function body"
                )
            body.append(self._parse_assign())
            return None

        self._suite(item)
        if not ret:
            raise DslError(Code.SYNTAX, kw.span, f"function '{name.value}' has no return")
        return ir.FunctionDef(name.value, tuple(params), tuple(body), ret[0], span=kw.span)

    # -- computations and intervals ------------------------------------------

    def parse_computation(self) -> ir.Computation:
        kw = self.expect_keyword("with")
        head = self.expect("NAME", "'computation'")
        if head.value != "computation":
            raise DslError(
                Code.UNKNOWN_KEYWORD,
                head.span,
                f"unknown 'with' block '{head.value}' (expected 'computation')",
            )
        self.expect("(")
        order = self.expect("NAME", "PARALLEL, FORWARD, or BACKWARD")
        if order.value not in ir.ORDERS:
            raise DslError(
                Code.SYNTAX,
                order.span,
                f"unknown computation order '{order.value}'",
            )
        self.expect(")")
        self.expect(":")

        blocks: list[ir.IntervalBlock] = []
        stmts: list[ir.Stmt] = []

        def item():
            if self._at_keyword("with"):
                if stmts:
                    raise DslError(
                        Code.SYNTAX,
                        self.peek().span,
                        "cannot mix bare statements and interval blocks",
                    )
                blocks.append(self.parse_interval_block())
            else:
                if blocks:
                    raise DslError(
                        Code.SYNTAX,
                        self.peek().span,
                        "cannot mix bare statements and interval blocks",
                    )
                stmts.append(self.parse_statement())
            return None

        self._suite(item)
        if stmts:
            blocks = [ir.IntervalBlock(None, tuple(stmts), span=kw.span)]
        return ir.Computation(order.value, tuple(blocks), span=kw.span)

    def parse_interval_block(self) -> ir.IntervalBlock:
        kw = self.expect_keyword("with")
        head = self.expect("NAME", "'interval'")
        if head.value != "interval":
            raise DslError(
                Code.UNKNOWN_KEYWORD,
                head.span,
                f"unknown 'with' block '{head.value}' (expected 'interval')",
            )
        self.expect("(")
        start = self._parse_bound(is_start=True)
        self.expect(",")
        end = self._parse_bound(is_start=False)
        self.expect(")")
        self.expect(":")
        stmts = self._suite(self.parse_statement)
        return ir.IntervalBlock(ir.Interval(start, end), tuple(stmts), span=kw.span)

    def _parse_bound(self, is_start: bool) -> ir.AxisBound:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.value == "None":
            self.advance()
            return ir.AxisBound.start(0) if is_start else ir.AxisBound.end(0)
        sign = 1
        if tok.kind == "-":
            self.advance()
            sign = -1
        num = self.expect("INT", "an integer or None interval bound")
        value = sign * int(num.value)
        return ir.AxisBound.start(value) if value >= 0 else ir.AxisBound.end(value)

    # -- statements -----------------------------------------------------------

    def parse_statement(self) -> ir.Stmt:
        tok = self.peek()
        if self._at_keyword("if"):
            return self._parse_if()
        if tok.kind == "NAME":
            if tok.value in UNSUPPORTED_KEYWORDS:
                raise DslError(
                    Code.UNKNOWN_KEYWORD, tok.span, f"unsupported keyword '{tok.value}'"
                )
            return self._parse_assign()
        if self._at_keyword("with"):
            raise DslError(
                Code.SYNTAX, tok.span, "'with' blocks cannot appear inside statement bodies"
            )
        raise DslError(
            Code.SYNTAX, tok.span, f"expected a statement, found {self._describe(tok)}"
        )

    def _parse_assign(self) -> ir.Assign:
        name = self.expect("NAME", "assignment target")
        offset = ir.ZERO_OFFSET
        if self.peek().kind == "[":
            offset = self._parse_offset3()
        target = ir.FieldAccess(name.value, offset, span=name.span)
        self.expect("=")
        value = self._parse_expr(in_condition=False)
        self._end_statement()
        return ir.Assign(target, value, span=name.span)

    def _end_statement(self) -> None:
        tok = self.peek()
        if tok.kind == "NEWLINE":
            self.advance()
        elif tok.kind not in ("DEDENT", "EOF"):
            raise DslError(
                Code.SYNTAX, tok.span, f"expected end of line, found {self._describe(tok)}"
            )

    def _parse_if(self) -> ir.If:
        kw = self.expect_keyword("if")
        cond = self._parse_expr(in_condition=True)
        self.expect(":")
        then_body = tuple(self._suite(self.parse_statement))
        else_body: tuple[ir.Stmt, ...] = ()
        if self._at_keyword("else"):
            self.advance()
            self.expect(":")
            else_body = tuple(self._suite(self.parse_statement))
        return ir.If(cond, then_body, else_body, span=kw.span)

    def _parse_offset3(self) -> ir.Offset:
        self.expect("[")
        vals = [self._parse_signed_int()]
        for _ in range(2):
            self.expect(",")
            vals.append(self._parse_signed_int())
        self.expect("]")
        return (vals[0], vals[1], vals[2])

    def _parse_signed_int(self) -> int:
        sign = 1
        if self.peek().kind == "-":
            self.advance()
            sign = -1
        num = self.expect("INT", "an integer offset")
        return sign * int(num.value)

    # -- expressions ------------------------------------------------------------
    # precedence (low to high): or, and, not, comparison, +/-, */, unary -, atom

    def _parse_expr(self, in_condition: bool) -> ir.Expr:
        if in_condition:
            return self._parse_or(in_condition)
        return self._parse_arith(in_condition=False)

    def _parse_or(self, in_condition: bool) -> ir.Expr:
        left = self._parse_and(in_condition)
        while self._at_keyword("or"):
            tok = self.advance()
            right = self._parse_and(in_condition)
            left = ir.BinaryOp("or", left, right, span=tok.span)
        return left

    def _parse_and(self, in_condition: bool) -> ir.Expr:
        left = self._parse_not(in_condition)
        while self._at_keyword("and"):
            tok = self.advance()
            right = self._parse_not(in_condition)
            left = ir.BinaryOp("and", left, right, span=tok.span)
        return left

    def _parse_not(self, in_condition: bool) -> ir.Expr:
        if self._at_keyword("not"):
            tok = self.advance()
            return ir.UnaryOp("not", self._parse_not(in_condition), span=tok.span)
        return self._parse_comparison(in_condition)

    def _parse_comparison(self, in_condition: bool) -> ir.Expr:
        left = self._parse_arith(in_condition)
        tok = self.peek()
        if tok.kind in ir.COMPARISON_OPS:
            self.advance()
            right = self._parse_arith(in_condition)
            nxt = self.peek()
            if nxt.kind in ir.COMPARISON_OPS:
                raise DslError(Code.SYNTAX, nxt.span, "chained comparisons are not supported")
            return ir.BinaryOp(tok.kind, left, right, span=tok.span)
        return left

    def _parse_arith(self, in_condition: bool) -> ir.Expr:
        left = self._parse_term(in_condition)
        while self.peek().kind in ("+", "-"):
            tok = self.advance()
            right = self._parse_term(in_condition)
            left = ir.BinaryOp(tok.kind, left, right, span=tok.span)
        self._reject_misplaced_boolean(in_condition)
        return left

    def _reject_misplaced_boolean(self, in_condition: bool) -> None:
        tok = self.peek()
        if not in_condition and (
            tok.kind in ir.COMPARISON_OPS
            or (tok.kind == "KEYWORD" and tok.value in ("and", "or"))
        ):
            raise DslError(
                Code.SYNTAX,
                tok.span,
                "comparisons and boolean operators are only allowed in if conditions",
            )

    def _parse_term(self, in_condition: bool) -> ir.Expr:
        left = self._parse_unary(in_condition)
        while self.peek().kind in ("*", "/"):
            tok = self.advance()
            right = self._parse_unary(in_condition)
            left = ir.BinaryOp(tok.kind, left, right, span=tok.span)
        return left

    def _parse_unary(self, in_condition: bool) -> ir.Expr:
        tok = self.peek()
        if tok.kind == "-":
            self.advance()
            return ir.UnaryOp("-", self._parse_unary(in_condition), span=tok.span)
        if tok.kind == "+":
            self.advance()
            return self._parse_unary(in_condition)
        return self._parse_atom(in_condition)

    def _parse_atom(self, in_condition: bool) -> ir.Expr:
        tok = self.peek()
        if tok.kind in ("INT", "FLOAT"):
            self.advance()
            return ir.Literal(float(tok.value), "f64", span=tok.span)
        if tok.kind == "(":
            self.advance()
            inner = self._parse_expr(in_condition)
            self.expect(")")
            return inner
        if tok.kind == "NAME":
            if tok.value in UNSUPPORTED_KEYWORDS:
                raise DslError(
                    Code.UNKNOWN_KEYWORD, tok.span, f"unsupported keyword '{tok.value}'"
                )
            self.advance()
            nxt = self.peek()
            if nxt.kind == "(":
                self.advance()
                args: list[ir.Expr] = []
                if self.peek().kind != ")":
                    args.append(self._parse_expr(in_condition=False))
                    while self.peek().kind == ",":
                        self.advance()
                        args.append(self._parse_expr(in_condition=False))
                self.expect(")")
                return ir.FuncCall(tok.value, tuple(args), span=tok.span)
            if nxt.kind == "[":
                offset = self._parse_offset3()
                return ir.FieldAccess(tok.value, offset, span=tok.span)
            return ir.NameRef(tok.value, span=tok.span)
        raise DslError(
            Code.SYNTAX, tok.span, f"expected an expression, found {self._describe(tok)}"
        )


def parse_program(
    text: str, file: Optional[str] = None
) -> list[Union[ir.StencilDefinition, ir.FunctionDef]]:
    """Parse `.gts` source into definition-IR nodes, one per top-level item."""
    return Parser(tokenize(text, file)).parse_program()
