"""Error codes, diagnostics, and exception types shared across the toolchain."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Code(enum.Enum):
    """Machine-readable diagnostic codes, rendered as ``error[CODE]``."""

    # frontend
    SYNTAX = "syntax"
    INDENTATION = "indentation"
    UNKNOWN_KEYWORD = "unknown-keyword"
    RECURSION = "recursion"
    ARITY = "arity"
    UNKNOWN_FUNCTION = "unknown-function"
    UNBOUND_EXTERNAL = "unbound-external"
    EXTERNAL_TYPE = "external-type"
    # semantic validation
    SELF_ASSIGN_PARALLEL = "self-assign-parallel"
    HORIZONTAL_SELF_READ = "horizontal-self-read"
    SEQUENTIAL_OFFSET_READ = "sequential-offset-read"
    VERTICAL_PARALLEL_READ = "vertical-parallel-read"
    TARGET_OFFSET = "target-offset"
    SCALAR_TARGET = "scalar-target"
    OVERLAPPING_INTERVALS = "overlapping-intervals"
    INTERVAL_ORDER_MISMATCH = "interval-order-mismatch"
    EMPTY_INTERVAL = "empty-interval"
    USE_BEFORE_DEFINE = "use-before-define"
    OUT_OF_DOMAIN_READ = "out-of-domain-read"
    # storage
    ALLOCATION = "allocation"
    INVALID_LAYOUT = "invalid-layout"
    FORMAT = "format"
    TRUNCATED_FILE = "truncated-file"
    # runtime
    UNKNOWN_BACKEND = "unknown-backend"
    DOMAIN_TOO_SMALL = "domain-too-small"
    K_BELOW_MINIMUM = "k-below-minimum"
    OUT_OF_BOUNDS = "out-of-bounds"
    LAYOUT_MISMATCH = "layout-mismatch"
    DTYPE_MISMATCH = "dtype-mismatch"
    MISSING_ARGUMENT = "missing-argument"
    UNEXPECTED_ARGUMENT = "unexpected-argument"
    # native toolchain
    TOOLCHAIN_MISSING = "toolchain-missing"
    COMPILE_FAILED = "compile-failed"
    SYMBOL_NOT_FOUND = "symbol-not-found"
    CACHE_CORRUPT = "cache-corrupt"


@dataclass(frozen=True)
class Span:
    """1-based source position; ``file`` is a display name, not a path requirement."""

    line: int
    col: int
    file: Optional[str] = None

    def render(self) -> str:
        name = self.file if self.file else "<source>"
        return f"{name}:{self.line}:{self.col}"


UNKNOWN_SPAN = Span(0, 0)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: Code
    span: Span
    message: str

    def render(self) -> str:
        return f"{self.span.render()}: {self.severity}[{self.code.value}]: {self.message}"


def error(code: Code, span: Span, message: str) -> Diagnostic:
    return Diagnostic("error", code, span, message)


def warning(code: Code, span: Span, message: str) -> Diagnostic:
    return Diagnostic("warning", code, span, message)


class StencilForgeError(Exception):
    """Base for all package exceptions."""


class DslError(StencilForgeError):
    """A single hard error with a source position (lexer/parser/inliner)."""

    def __init__(self, code: Code, span: Span, message: str):
        super().__init__(f"{span.render()}: error[{code.value}]: {message}")
        self.code = code
        self.span = span
        self.message = message

    def as_diagnostic(self) -> Diagnostic:
        return error(self.code, self.span, self.message)


class CompilationError(StencilForgeError):
    """Aggregated error diagnostics from any pipeline stage."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(d.render() for d in self.diagnostics))

    @property
    def codes(self) -> list[Code]:
        return [d.code for d in self.diagnostics]


class StorageError(StencilForgeError):
    def __init__(self, code: Code, message: str):
        super().__init__(f"error[{code.value}]: {message}")
        self.code = code
        self.message = message


class InvocationError(StencilForgeError):
    """Argument/domain validation failure at stencil invocation time."""

    def __init__(self, code: Code, message: str):
        super().__init__(f"error[{code.value}]: {message}")
        self.code = code
        self.message = message


class BackendError(StencilForgeError):
    """Native toolchain or build-cache failure."""

    def __init__(self, code: Code, message: str):
        super().__init__(f"error[{code.value}]: {message}")
        self.code = code
        self.message = message
