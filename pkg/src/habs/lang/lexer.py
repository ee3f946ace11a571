"""Tokenizer for `.habs` sources. `//` comments run to end of line."""

from __future__ import annotations

from dataclasses import dataclass

from .ast import Pos


class HabsSyntaxError(Exception):
    def __init__(self, pos: Pos, msg: str, filename: str = "<input>"):
        self.pos = pos
        self.msg = msg
        self.filename = filename
        super().__init__(f"{filename}:{pos.line}:{pos.col}: {msg}")


@dataclass
class Token:
    kind: str   # 'id', 'num', 'str' or the symbol itself
    text: str
    pos: Pos


KEYWORDS = {
    "class", "interface", "implements", "physical", "await", "duration",
    "diff", "new", "get", "return", "if", "else", "while", "this", "true",
    "false", "null", "unit", "skip",
}

# longest match first
SYMBOLS = [
    "&&", "||", "<=", ">=", "==", "!=", "(", ")", "{", "}", "[", "]",
    ";", ":", ",", "?", ".", "'", "!", "&", "|", "<", ">", "=", "+",
    "-", "*", "/",
]


def lex(src: str, filename: str = "<input>") -> list:
    toks = []
    line, col = 1, 1
    i, n = 0, len(src)

    def advance(k):
        nonlocal i, line, col
        for _ in range(k):
            if src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = src[i]
        if c.isspace():
            advance(1)
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                advance(1)
            continue
        pos = Pos(line, col)
        if c == '"':
            j = src.find('"', i + 1)
            if j < 0:
                raise HabsSyntaxError(pos, "unterminated string literal", filename)
            toks.append(Token("str", src[i + 1:j], pos))
            advance(j + 1 - i)
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            toks.append(Token("num", src[i:j], pos))
            advance(j - i)
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            toks.append(Token(word if word in KEYWORDS else "id", word, pos))
            advance(j - i)
            continue
        for s in SYMBOLS:
            if src.startswith(s, i):
                toks.append(Token(s, s, pos))
                advance(len(s))
                break
        else:
            raise HabsSyntaxError(pos, f"unexpected character {c!r}", filename)
    toks.append(Token("eof", "", Pos(line, col)))
    return toks
