"""Restricted regular-expression dialect for manifest ``pattern`` fields.

A validator must not be DoS-able by its own schema, so patterns are limited
to a subset that compiles to an NFA and is matched by set-of-states
simulation in O(len(text) * states) — no backtracking, ever.

Supported: literals, ``.``, character classes ``[...]`` (ranges, negation),
``*`` ``+`` ``?``, bounded repetition ``{m}`` ``{m,}`` ``{m,n}``, alternation
``|``, grouping ``(...)``, escapes (``\\.`` etc. plus ``\\d`` ``\\w`` ``\\s``
``\\n`` ``\\t`` ``\\r``). Not supported: backreferences, lookaround,
non-greedy operators, inline flags.

Patterns are implicitly anchored at both ends; a leading ``^`` and trailing
``$`` are accepted and ignored, anchors anywhere else are rejected.
``.`` matches any character except newline, as in the common dialects.
"""

from __future__ import annotations

from dataclasses import dataclass

_MAX_STATES = 4096


class PatternError(ValueError):
    """The pattern is outside the restricted dialect (or malformed)."""


@dataclass(frozen=True)
class _CharSet:
    """Sorted, disjoint codepoint ranges; ``negated`` flips membership."""
    ranges: tuple[tuple[int, int], ...]
    negated: bool = False

    def matches(self, ch: str) -> bool:
        cp = ord(ch)
        hit = any(lo <= cp <= hi for lo, hi in self.ranges)
        return hit != self.negated


_DOT = _CharSet(ranges=((ord("\n"), ord("\n")),), negated=True)
_DIGIT = _CharSet(ranges=((ord("0"), ord("9")),))
_WORD = _CharSet(ranges=((ord("0"), ord("9")), (ord("A"), ord("Z")),
                         (ord("_"), ord("_")), (ord("a"), ord("z"))))
_SPACE = _CharSet(ranges=tuple((ord(c), ord(c)) for c in "\t\n\x0b\x0c\r "))

_ESCAPE_CLASSES = {"d": _DIGIT, "w": _WORD, "s": _SPACE}
_ESCAPE_LITERALS = {"n": "\n", "t": "\t", "r": "\r"}


def _literal(ch: str) -> _CharSet:
    return _CharSet(ranges=((ord(ch), ord(ch)),))


# --- AST ----------------------------------------------------------------

@dataclass(frozen=True)
class _Char:
    cs: _CharSet


@dataclass(frozen=True)
class _Concat:
    parts: tuple


@dataclass(frozen=True)
class _Alt:
    options: tuple


@dataclass(frozen=True)
class _Repeat:
    node: object
    lo: int
    hi: int | None  # None = unbounded


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, msg: str) -> PatternError:
        return PatternError(f"{msg} (column {self.pos} of pattern {self.text!r})")

    def peek(self) -> str | None:
        return self.text[self.pos] if self.pos < len(self.text) else None

    def take(self) -> str:
        ch = self.text[self.pos]
        self.pos += 1
        return ch

    def parse(self):
        node = self.alternation()
        if self.pos != len(self.text):
            raise self.fail(f"unexpected {self.text[self.pos]!r}")
        return node

    def alternation(self):
        options = [self.concat()]
        while self.peek() == "|":
            self.take()
            options.append(self.concat())
        return options[0] if len(options) == 1 else _Alt(tuple(options))

    def concat(self):
        parts = []
        while (ch := self.peek()) is not None and ch not in "|)":
            parts.append(self.repeat())
        return _Concat(tuple(parts))

    def repeat(self):
        node = self.atom()
        ch = self.peek()
        if ch == "*":
            self.take()
            return _Repeat(node, 0, None)
        if ch == "+":
            self.take()
            return _Repeat(node, 1, None)
        if ch == "?":
            self.take()
            return _Repeat(node, 0, 1)
        if ch == "{":
            return _Repeat(node, *self.bounds())
        return node

    def bounds(self) -> tuple[int, int | None]:
        self.take()  # "{"
        lo = self.number()
        hi: int | None = lo
        if self.peek() == ",":
            self.take()
            hi = self.number() if self.peek() != "}" else None
        if self.peek() != "}":
            raise self.fail("unterminated repetition bound")
        self.take()
        if hi is not None and hi < lo:
            raise self.fail(f"repetition bound {{{lo},{hi}}} has hi < lo")
        return lo, hi

    def number(self) -> int:
        digits = ""
        while (ch := self.peek()) is not None and ch.isdigit():
            digits += self.take()
        if not digits:
            raise self.fail("expected a number in repetition bound")
        return int(digits)

    def atom(self):
        ch = self.peek()
        if ch is None:
            raise self.fail("dangling operator")
        if ch == "(":
            self.take()
            inner = self.alternation()
            if self.peek() != ")":
                raise self.fail("unbalanced group")
            self.take()
            return inner
        if ch == "[":
            return _Char(self.char_class())
        if ch == ".":
            self.take()
            return _Char(_DOT)
        if ch == "\\":
            return _Char(self.escape())
        if ch in "*+?{":
            raise self.fail(f"operator {ch!r} with nothing to repeat")
        if ch in "^$":
            raise self.fail("anchors are only allowed at the pattern ends")
        if ch in ")|":
            raise self.fail(f"unexpected {ch!r}")
        return _Char(_literal(self.take()))

    def escape(self) -> _CharSet:
        self.take()  # backslash
        ch = self.peek()
        if ch is None:
            raise self.fail("dangling backslash")
        self.take()
        if ch in _ESCAPE_CLASSES:
            return _ESCAPE_CLASSES[ch]
        if ch in _ESCAPE_LITERALS:
            return _literal(_ESCAPE_LITERALS[ch])
        if not ch.isalnum():
            return _literal(ch)
        raise self.fail(f"unsupported escape \\{ch}")

    def char_class(self) -> _CharSet:
        self.take()  # "["
        negated = False
        if self.peek() == "^":
            negated = True
            self.take()
        ranges: list[tuple[int, int]] = []

        def class_char() -> int:
            ch = self.take()
            if ch == "\\":
                nxt = self.peek()
                if nxt is None:
                    raise self.fail("dangling backslash in class")
                self.take()
                if nxt in _ESCAPE_LITERALS:
                    return ord(_ESCAPE_LITERALS[nxt])
                if nxt in _ESCAPE_CLASSES:
                    raise self.fail(f"\\{nxt} is not allowed inside a class; spell the ranges out")
                return ord(nxt)
            return ord(ch)

        while True:
            ch = self.peek()
            if ch is None:
                raise self.fail("unterminated character class")
            if ch == "]" and ranges:
                self.take()
                break
            # a "]" in first position is a literal member, as in common dialects
            lo = class_char()
            if self.peek() == "-" and self.pos + 1 < len(self.text) and self.text[self.pos + 1] != "]":
                self.take()
                hi = class_char()
                if hi < lo:
                    raise self.fail("character range out of order")
                ranges.append((lo, hi))
            else:
                ranges.append((lo, lo))
        return _CharSet(ranges=tuple(sorted(ranges)), negated=negated)


# --- Thompson NFA --------------------------------------------------------

class _Nfa:
    """States are ints. ``edges[s]`` is a list of (CharSet, next); ``eps[s]``
    lists epsilon successors."""

    def __init__(self):
        self.edges: list[list[tuple[_CharSet, int]]] = []
        self.eps: list[list[int]] = []

    def state(self) -> int:
        if len(self.eps) >= _MAX_STATES:
            raise PatternError(f"pattern expands past {_MAX_STATES} NFA states")
        self.edges.append([])
        self.eps.append([])
        return len(self.eps) - 1


def _build(nfa: _Nfa, node, start: int) -> int:
    """Wire ``node`` into the NFA beginning at ``start``; returns its end state."""
    if isinstance(node, _Char):
        end = nfa.state()
        nfa.edges[start].append((node.cs, end))
        return end
    if isinstance(node, _Concat):
        cur = start
        for part in node.parts:
            cur = _build(nfa, part, cur)
        return cur
    if isinstance(node, _Alt):
        end = nfa.state()
        for option in node.options:
            branch = nfa.state()
            nfa.eps[start].append(branch)
            nfa.eps[_build(nfa, option, branch)].append(end)
        return end
    if isinstance(node, _Repeat):
        cur = start
        for _ in range(node.lo):
            cur = _build(nfa, node.node, cur)
        if node.hi is None:
            loop = nfa.state()
            nfa.eps[cur].append(loop)
            back = _build(nfa, node.node, loop)
            nfa.eps[back].append(loop)
            return loop
        end = nfa.state()
        nfa.eps[cur].append(end)
        for _ in range(node.hi - node.lo):
            cur = _build(nfa, node.node, cur)
            nfa.eps[cur].append(end)
        return end
    raise AssertionError(f"unknown AST node {node!r}")


class CompiledPattern:
    """A compiled restricted pattern; matching is linear in the text."""

    def __init__(self, pattern: str):
        self.pattern = pattern
        body = pattern
        if body.startswith("^"):
            body = body[1:]
        if body.endswith("$"):
            backslashes = len(body[:-1]) - len(body[:-1].rstrip("\\"))
            if backslashes % 2 == 0:  # the $ is not itself escaped
                body = body[:-1]
        ast = _Parser(body).parse()
        self._nfa = _Nfa()
        start = self._nfa.state()
        self._start = start
        self._accept = _build(self._nfa, ast, start)

    def _closure(self, states: set[int]) -> set[int]:
        stack = list(states)
        seen = set(states)
        while stack:
            s = stack.pop()
            for nxt in self._nfa.eps[s]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def matches(self, text: str) -> bool:
        """Full match over the whole text (implicit anchors)."""
        current = self._closure({self._start})
        for ch in text:
            nxt: set[int] = set()
            for s in current:
                for cs, target in self._nfa.edges[s]:
                    if cs.matches(ch):
                        nxt.add(target)
            if not nxt:
                return False
            current = self._closure(nxt)
        return self._accept in current


def compile_pattern(pattern: str) -> CompiledPattern:
    if not isinstance(pattern, str) or pattern == "":
        raise PatternError("pattern must be a non-empty string")
    return CompiledPattern(pattern)
