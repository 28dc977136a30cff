"""Formal geometry fact language and LaTeX table well-formedness checks.

Grammar for fact lists, whitespace-insensitive between tokens:

    fact_list := fact (',' fact)* | <empty>
    fact      := IDENT '(' arg (',' arg)* ')'
    arg       := IDENT | NUMBER
    IDENT     := letter (letter | digit | '_')*
    NUMBER    := digits ('.' digits)?

Identifiers are atomic: the AB in Line(AB, 5) is one symbol, not two
points. Canonical serialization joins facts with ", " and arguments with
", ", so parse and serialize are mutually inverse up to whitespace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping

# Known predicate arities; unknown predicates are allowed any arity.
DEFAULT_ARITY: Mapping[str, int] = {
    "Triangle": 3,
    "Angle": 2,
    "Line": 2,
    "Circle": 2,
    "Point": 1,
    "Parallel": 2,
    "Perpendicular": 2,
}


class ParseError(ValueError):
    """Syntax error at a byte offset, with the token set that was expected."""

    def __init__(self, offset: int, expected: frozenset[str], found: str):
        self.offset = offset
        self.expected = expected
        self.found = found
        want = ", ".join(sorted(expected))
        super().__init__(f"at byte {offset}: expected {want}, found {found}")


@dataclass(frozen=True)
class Symbol:
    name: str

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Number:
    value: Decimal

    def render(self) -> str:
        # strip superfluous trailing zeros: 45.0 -> 45, 4.50 -> 4.5
        text = str(self.value)
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        return text


Arg = Symbol | Number


@dataclass(frozen=True)
class GeometryFact:
    predicate: str
    args: tuple[Arg, ...]

    def render(self) -> str:
        return f"{self.predicate}({', '.join(a.render() for a in self.args)})"


FactList = tuple[GeometryFact, ...]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<number>\d+(?:\.\d+)?)"
    r"|(?P<lparen>\()|(?P<rparen>\))|(?P<comma>,))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT | NUMBER | ( | ) | , | EOF
    text: str
    offset: int  # character offset of the token start


def _byte_offset(text: str, char_offset: int) -> int:
    return len(text[:char_offset].encode("utf-8"))


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace manually to locate the bad character
            stripped = pos
            while stripped < len(text) and text[stripped].isspace():
                stripped += 1
            if stripped >= len(text):
                break
            raise ParseError(
                _byte_offset(text, stripped),
                frozenset({"IDENT", "NUMBER", "(", ")", ","}),
                repr(text[stripped]),
            )
        for kind, label in (
            ("ident", "IDENT"),
            ("number", "NUMBER"),
            ("lparen", "("),
            ("rparen", ")"),
            ("comma", ","),
        ):
            got = m.group(kind)
            if got is not None:
                tokens.append(_Token(label, got, m.start(kind)))
                break
        pos = m.end()
    tokens.append(_Token("EOF", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected: frozenset[str]):
        tok = self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise ParseError(_byte_offset(self.text, tok.offset), expected, found)

    def expect(self, kind: str) -> _Token:
        if self.peek().kind != kind:
            self.fail(frozenset({kind}))
        return self.advance()

    def parse_arg(self) -> Arg:
        tok = self.peek()
        if tok.kind == "IDENT":
            return Symbol(self.advance().text)
        if tok.kind == "NUMBER":
            return Number(Decimal(self.advance().text))
        self.fail(frozenset({"IDENT", "NUMBER"}))

    def parse_fact(self) -> GeometryFact:
        if self.peek().kind != "IDENT":
            self.fail(frozenset({"IDENT"}))
        predicate = self.advance().text
        self.expect("(")
        args = [self.parse_arg()]
        while self.peek().kind == ",":
            self.advance()
            args.append(self.parse_arg())
        self.expect(")")
        return GeometryFact(predicate=predicate, args=tuple(args))

    def parse_fact_list(self) -> FactList:
        if self.peek().kind == "EOF":
            return ()
        facts = [self.parse_fact()]
        while self.peek().kind == ",":
            self.advance()
            facts.append(self.parse_fact())
        if self.peek().kind != "EOF":
            self.fail(frozenset({",", "EOF"}))
        return tuple(facts)


def parse_facts(text: str) -> FactList:
    """Parse a comma-separated fact list; empty or whitespace-only gives ()."""
    return _Parser(text).parse_fact_list()


def serialize_facts(facts: Iterable[GeometryFact]) -> str:
    """Canonical rendering: facts joined with ', '."""
    return ", ".join(f.render() for f in facts)


@dataclass(frozen=True)
class ArityViolation:
    fact_index: int
    predicate: str
    expected: int
    actual: int


def validate_arity(
    facts: Iterable[GeometryFact],
    arity: Mapping[str, int] = DEFAULT_ARITY,
) -> list[ArityViolation]:
    """Check known predicates against the arity table; unknown ones pass."""
    violations = []
    for i, fact in enumerate(facts):
        expected = arity.get(fact.predicate)
        if expected is not None and len(fact.args) != expected:
            violations.append(
                ArityViolation(i, fact.predicate, expected, len(fact.args))
            )
    return violations


# --- LaTeX table checking -------------------------------------------------

TABULAR_ENVIRONMENTS = frozenset(
    {"tabular", "tabular*", "tabularx", "array", "longtable"}
)


@dataclass(frozen=True)
class TableFinding:
    offset: int  # character offset into the checked text
    message: str


@dataclass
class TableReport:
    ok: bool
    findings: list[TableFinding]
    columns: int | None
    environments: list[str]


_ENV_RE = re.compile(r"\\(begin|end)\{([A-Za-z*]+)\}")
_RULE_RE = re.compile(r"\\(?:hline|toprule|midrule|bottomrule)\b|\\cline\{[^{}]*\}")


def _brace_findings(text: str) -> list[TableFinding]:
    findings = []
    stack: list[int] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\":
            i += 2  # escaped character, including \{ and \}
            continue
        if c == "{":
            stack.append(i)
        elif c == "}":
            if stack:
                stack.pop()
            else:
                findings.append(TableFinding(i, "unmatched '}'"))
        i += 1
    for off in stack:
        findings.append(TableFinding(off, "unmatched '{'"))
    return findings


def _env_spans(text: str):
    """Match begin/end pairs. Returns (spans, findings).

    Each span is (name, body_start, body_end) for a properly closed
    environment; body excludes the begin/end markers themselves.
    """
    findings = []
    spans = []
    stack: list[tuple[str, int, int]] = []  # (name, begin_offset, body_start)
    for m in _ENV_RE.finditer(text):
        word, name = m.group(1), m.group(2)
        if word == "begin":
            stack.append((name, m.start(), m.end()))
        else:
            if not stack:
                findings.append(
                    TableFinding(m.start(), f"\\end{{{name}}} without matching \\begin")
                )
            elif stack[-1][0] != name:
                open_name = stack[-1][0]
                findings.append(
                    TableFinding(
                        m.start(),
                        f"\\end{{{name}}} closes \\begin{{{open_name}}}",
                    )
                )
                stack.pop()
            else:
                _, _, body_start = stack.pop()
                spans.append((name, body_start, m.start()))
    for name, begin_off, _ in stack:
        findings.append(TableFinding(begin_off, f"unclosed \\begin{{{name}}}"))
    return spans, findings


def _mask_spans(body: str, base: int, spans) -> str:
    """Blank out nested environment bodies so their cells are not counted."""
    chars = list(body)
    for _, s, e in spans:
        if s >= base and e <= base + len(body):
            for i in range(s - base, e - base):
                if not chars[i].isspace():
                    chars[i] = " "
    return "".join(chars)


def _strip_env_args(body: str) -> tuple[str, int]:
    """Drop leading [..] and {..} argument groups after \\begin{...}."""
    i = 0
    groups = 0
    while i < len(body) and groups < 3:
        while i < len(body) and body[i].isspace():
            i += 1
        if i < len(body) and body[i] == "[":
            depth = 0
            while i < len(body):
                if body[i] == "[":
                    depth += 1
                elif body[i] == "]":
                    depth -= 1
                    if depth == 0:
                        i += 1
                        break
                i += 1
            groups += 1
        elif i < len(body) and body[i] == "{":
            depth = 0
            while i < len(body):
                if body[i] == "\\":
                    i += 2
                    continue
                if body[i] == "{":
                    depth += 1
                elif body[i] == "}":
                    depth -= 1
                    if depth == 0:
                        i += 1
                        break
                i += 1
            groups += 1
        else:
            break
    return body[i:], i


def _count_cells(row: str) -> int:
    cells = 1
    i = 0
    while i < len(row):
        if row[i] == "\\":
            i += 2
            continue
        if row[i] == "&":
            cells += 1
        i += 1
    return cells


def _row_findings(name: str, body: str, body_start: int, all_spans):
    findings = []
    masked = _mask_spans(body, body_start, all_spans)
    content, skipped = _strip_env_args(masked)
    offset0 = body_start + skipped
    expected: int | None = None
    pos = 0
    rows = re.split(r"\\\\", content)
    for chunk in rows:
        chunk_off = offset0 + pos
        pos += len(chunk) + 2  # 2 for the row terminator
        cleaned = _RULE_RE.sub("", chunk).strip()
        if not cleaned:
            continue
        cells = _count_cells(cleaned)
        if expected is None:
            expected = cells
        elif cells != expected:
            findings.append(
                TableFinding(
                    chunk_off,
                    f"{name} row has {cells} cells, expected {expected}",
                )
            )
    return findings, expected


def check_latex_table(text: str) -> TableReport:
    """Report-style well-formedness check; never raises on any input.

    Checks brace balance, begin/end nesting, presence of at least one
    tabular-like environment, and consistent cell counts across rows.
    Offsets are character offsets into the input.
    """
    findings = _brace_findings(text)
    spans, env_findings = _env_spans(text)
    findings.extend(env_findings)

    table_spans = [s for s in spans if s[0] in TABULAR_ENVIRONMENTS]
    # keep only outermost table spans; nested ones are cell content
    outer = [
        s for s in table_spans
        if not any(o is not s and o[1] < s[1] and s[2] <= o[2] for o in table_spans)
    ]
    outer.sort(key=lambda s: s[1])

    if not outer:
        findings.append(TableFinding(0, "no tabular-like environment found"))

    columns: int | None = None
    for span in outer:
        name, body_start, body_end = span
        nested = [s for s in spans if s is not span]
        row_findings, expected = _row_findings(
            name, text[body_start:body_end], body_start, nested
        )
        findings.extend(row_findings)
        if columns is None and expected is not None and not row_findings:
            columns = expected

    findings.sort(key=lambda f: f.offset)
    return TableReport(
        ok=not findings,
        findings=findings,
        columns=columns,
        environments=[s[0] for s in spans],
    )
