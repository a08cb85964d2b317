"""Indentation-aware lexer for `.gts` source text.

Emits synthetic INDENT/DEDENT tokens from leading whitespace, Python style.
Tabs in leading whitespace are rejected; inside brackets newlines are ignored
so offset triples may wrap lines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import Code, DslError, Span

KEYWORDS = frozenset(
    {"stencil", "function", "with", "if", "else", "return", "and", "or", "not", "None"}
)

# words from the host-language family we recognize to give a better error than
# a generic parse failure
UNSUPPORTED_KEYWORDS = frozenset(
    {"for", "while", "def", "lambda", "class", "import", "from", "global", "pass",
     "break", "continue", "try", "except", "raise", "yield", "del", "in", "is"}
)

TWO_CHAR_OPS = ("==", "!=", "<=", ">=")
ONE_CHAR_TOKENS = "()[]:,=+-*/<>"


@dataclass(frozen=True)
class Token:
    kind: str  # NAME KEYWORD INT FLOAT NEWLINE INDENT DEDENT EOF or the operator text
    value: str
    span: Span


class Lexer:
    def __init__(self, text: str, file: Optional[str] = None):
        self.text = text
        self.file = file
        self.lines = text.splitlines()

    def _span(self, line: int, col: int) -> Span:
        return Span(line, col, self.file)

    def tokens(self) -> list[Token]:
        toks: list[Token] = []
        indents = [0]
        depth = 0  # bracket nesting; newlines inside brackets are not structural

        for lineno, raw in enumerate(self.lines, start=1):
            # strip comments outside of any string (the language has no strings)
            hash_pos = raw.find("#")
            line = raw if hash_pos < 0 else raw[:hash_pos]
            if not line.strip():
                continue  # blank or comment-only line: no NEWLINE token

            col = 0
            if depth == 0:
                while col < len(line) and line[col] in " \t":
                    if line[col] == "\t":
                        raise DslError(
                            Code.INDENTATION,
                            self._span(lineno, col + 1),
                            "tab in leading whitespace; indentation must use spaces",
                        )
                    col += 1
                indent = col
                if indent > indents[-1]:
                    indents.append(indent)
                    toks.append(Token("INDENT", "", self._span(lineno, 1)))
                else:
                    while indent < indents[-1]:
                        indents.pop()
                        toks.append(Token("DEDENT", "", self._span(lineno, 1)))
                    if indent != indents[-1]:
                        raise DslError(
                            Code.INDENTATION,
                            self._span(lineno, col + 1),
                            "unindent does not match any outer indentation level",
                        )

            while col < len(line):
                ch = line[col]
                if ch in " \t":
                    col += 1
                    continue
                start = col
                if ch.isalpha() or ch == "_":
                    while col < len(line) and (line[col].isalnum() or line[col] == "_"):
                        col += 1
                    word = line[start:col]
                    kind = "KEYWORD" if word in KEYWORDS else "NAME"
                    toks.append(Token(kind, word, self._span(lineno, start + 1)))
                    continue
                if ch.isdigit() or (ch == "." and col + 1 < len(line) and line[col + 1].isdigit()):
                    col = self._scan_number(line, col)
                    word = line[start:col]
                    kind = "FLOAT" if any(c in word for c in ".eE") else "INT"
                    toks.append(Token(kind, word, self._span(lineno, start + 1)))
                    continue
                two = line[col : col + 2]
                if two in TWO_CHAR_OPS:
                    toks.append(Token(two, two, self._span(lineno, start + 1)))
                    col += 2
                    continue
                if ch in ONE_CHAR_TOKENS:
                    if ch in "([":
                        depth += 1
                    elif ch in ")]":
                        depth = max(0, depth - 1)
                    toks.append(Token(ch, ch, self._span(lineno, start + 1)))
                    col += 1
                    continue
                raise DslError(
                    Code.SYNTAX,
                    self._span(lineno, col + 1),
                    f"unexpected character {ch!r}",
                )

            if depth == 0:
                toks.append(Token("NEWLINE", "", self._span(lineno, len(line) + 1)))

        last_line = len(self.lines) + 1
        while len(indents) > 1:
            indents.pop()
            toks.append(Token("DEDENT", "", self._span(last_line, 1)))
        toks.append(Token("EOF", "", self._span(last_line, 1)))
        return toks

    def _scan_number(self, line: str, col: int) -> int:
        n = len(line)
        while col < n and line[col].isdigit():
            col += 1
        if col < n and line[col] == ".":
            col += 1
            while col < n and line[col].isdigit():
                col += 1
        if col < n and line[col] in "eE":
            peek = col + 1
            if peek < n and line[peek] in "+-":
                peek += 1
            if peek < n and line[peek].isdigit():
                col = peek
                while col < n and line[col].isdigit():
                    col += 1
        return col


def tokenize(text: str, file: Optional[str] = None) -> list[Token]:
    return Lexer(text, file).tokens()
