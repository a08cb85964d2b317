"""Frontend: lexing, parsing, function inlining, and external binding."""

from .lexer import tokenize
from .parser import parse_program
from .transforms import bind_externals, inline_functions

__all__ = ["tokenize", "parse_program", "inline_functions", "bind_externals"]
