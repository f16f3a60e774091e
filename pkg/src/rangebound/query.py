"""Parser for the supported SQL subset and the QuerySpec it produces.

Grammar (keywords are case-insensitive)::

    query  := SELECT agg '(' target ')' FROM ident (',' ident)*
              [WHERE cond] [GROUP BY ident] [';']
    agg    := SUM | COUNT | AVG | MIN | MAX
    target := ident | '*' | '1'            -- '*' and '1' only under COUNT
    cond   := atom (AND atom)*
    atom   := ident op literal | FALSE
    op     := '=' | '<' | '<=' | '>' | '>='
    literal:= number | 'string' | TIMESTAMP 'string'

Quoted strings compared with a numeric attribute are read as ISO-8601
timestamps and converted to UTC epoch seconds.  ``FALSE`` is the
unsatisfiable predicate, which lets contradictory queries print and reparse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Mapping

from .predicates import EMPTY, INF, TRUE, Interval, Predicate, conjoin
from .schema import Schema

AGGREGATES = ("SUM", "COUNT", "AVG", "MIN", "MAX")
KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "GROUP", "BY", "OR", "NOT", "TIMESTAMP", "FALSE"}


class ParseError(ValueError):
    def __init__(self, kind: str, message: str, position: int) -> None:
        super().__init__(f"{kind} error at {position}: {message}")
        self.kind = kind
        self.message = message
        self.position = position

    def to_json(self) -> dict:
        return {"error": self.kind, "message": self.message, "position": self.position}


@dataclass(frozen=True)
class QuerySpec:
    aggregate: str
    target: str
    relations: tuple[str, ...]
    predicate: Predicate = TRUE
    group_by: str | None = None

    def to_json(self) -> dict:
        return {
            "aggregate": self.aggregate,
            "target": self.target,
            "relations": list(self.relations),
            "predicate": self.predicate.to_json(),
            "group_by": self.group_by,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> QuerySpec:
        return cls(
            obj["aggregate"].upper(),
            obj.get("target", "*"),
            tuple(obj.get("relations", ())),
            Predicate.from_json(obj.get("predicate")),
            obj.get("group_by"),
        )

    def with_predicate(self, predicate: Predicate) -> QuerySpec:
        return QuerySpec(self.aggregate, self.target, self.relations, predicate, self.group_by)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, number, string, op, punct, end
    text: str
    pos: int
    value: Any = None


_OPS = ("<=", ">=", "!=", "<>", "=", "<", ">")


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        start = i
        if ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] in "_."):
                i += 1
            word = text[start:i]
            up = word.upper()
            if up in KEYWORDS or up in AGGREGATES:
                toks.append(Token("keyword", up, start))
            else:
                toks.append(Token("ident", word, start))
            continue
        if ch.isdigit() or (ch in "-+." and i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")):
            i += 1
            while i < n and (text[i].isdigit() or text[i] == "."):
                i += 1
            if i < n and text[i] in "eE":
                j = i + 1
                if j < n and text[j] in "+-":
                    j += 1
                if j < n and text[j].isdigit():
                    i = j
                    while i < n and text[i].isdigit():
                        i += 1
            lit = text[start:i]
            try:
                val = float(lit)
            except ValueError:
                raise ParseError("syntax", f"malformed number {lit!r}", start) from None
            toks.append(Token("number", lit, start, val))
            continue
        if ch == "'":
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise ParseError("syntax", "unterminated string literal", start)
                if text[i] == "'":
                    if i + 1 < n and text[i + 1] == "'":
                        buf.append("'")
                        i += 2
                        continue
                    i += 1
                    break
                buf.append(text[i])
                i += 1
            toks.append(Token("string", text[start:i], start, "".join(buf)))
            continue
        op = next((o for o in _OPS if text.startswith(o, i)), None)
        if op is not None:
            toks.append(Token("op", op, start))
            i += len(op)
            continue
        if ch in "(),*;":
            toks.append(Token("punct", ch, start))
            i += 1
            continue
        raise ParseError("syntax", f"unexpected character {ch!r}", start)
    toks.append(Token("end", "", n))
    return toks


def parse_timestamp(text: str) -> float:
    """ISO-8601 date or datetime to epoch seconds; naive values are UTC."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


class _Parser:
    def __init__(self, text: str, schema: Schema | None) -> None:
        self.toks = tokenize(text)
        self.k = 0
        self.schema = schema

    @property
    def tok(self) -> Token:
        return self.toks[self.k]

    def advance(self) -> Token:
        t = self.toks[self.k]
        self.k += 1
        return t

    def fail(self, message: str, tok: Token | None = None, kind: str = "syntax") -> ParseError:
        return ParseError(kind, message, (tok or self.tok).pos)

    def describe(self, t: Token) -> str:
        return "end of input" if t.kind == "end" else repr(t.text)

    def expect_keyword(self, word: str) -> Token:
        t = self.tok
        if t.kind != "keyword" or t.text != word:
            raise self.fail(f"expected {word}, found {self.describe(t)}")
        return self.advance()

    def expect_punct(self, ch: str) -> Token:
        t = self.tok
        if t.kind != "punct" or t.text != ch:
            raise self.fail(f"expected {ch!r}, found {self.describe(t)}")
        return self.advance()

    def ident(self, what: str) -> Token:
        t = self.tok
        if t.kind != "ident":
            raise self.fail(f"expected {what}, found {self.describe(t)}")
        return self.advance()

    def check_attr(self, t: Token):
        if self.schema is None:
            return None
        if t.text not in self.schema:
            raise ParseError("semantic", f"unknown attribute {t.text!r}", t.pos)
        return self.schema[t.text]

    def parse(self) -> QuerySpec:
        self.expect_keyword("SELECT")
        agg_tok = self.tok
        if agg_tok.kind == "keyword" and agg_tok.text in AGGREGATES:
            agg = agg_tok.text
            self.advance()
        elif agg_tok.kind == "ident":
            raise self.fail(f"unsupported aggregate {agg_tok.text!r}")
        else:
            raise self.fail(f"expected an aggregate, found {self.describe(agg_tok)}")
        self.expect_punct("(")
        t = self.tok
        if t.kind == "punct" and t.text == "*":
            target = "*"
            self.advance()
        elif t.kind == "number" and t.text == "1":
            target = "*"
            self.advance()
        elif t.kind == "ident":
            target = t.text
            self.advance()
        else:
            raise self.fail(f"expected an attribute, '*' or 1, found {self.describe(t)}")
        if target == "*" and agg != "COUNT":
            raise ParseError("semantic", f"{agg} needs an attribute argument", t.pos)
        if target != "*":
            dom = self.check_attr(t)
            if dom is not None and not dom.is_numeric:
                raise ParseError("semantic", f"{agg} over categorical attribute {target!r}", t.pos)
        self.expect_punct(")")
        self.expect_keyword("FROM")
        relations = [self.ident("a relation name").text]
        while self.tok.kind == "punct" and self.tok.text == ",":
            self.advance()
            relations.append(self.ident("a relation name").text)
        predicate = TRUE
        if self.tok.kind == "keyword" and self.tok.text == "WHERE":
            self.advance()
            predicate = self.condition()
        group_by = None
        if self.tok.kind == "keyword" and self.tok.text == "GROUP":
            self.advance()
            self.expect_keyword("BY")
            g = self.ident("a grouping attribute")
            dom = self.check_attr(g)
            if dom is not None and dom.is_numeric:
                raise ParseError("semantic", f"GROUP BY needs a categorical attribute, {g.text!r} is numeric", g.pos)
            group_by = g.text
        if self.tok.kind == "punct" and self.tok.text == ";":
            self.advance()
        if self.tok.kind != "end":
            t = self.tok
            if t.kind == "keyword" and t.text in ("OR", "NOT"):
                raise self.fail(f"{t.text} is not supported; predicates must be conjunctive")
            raise self.fail(f"unexpected {self.describe(t)}")
        return QuerySpec(agg, target, tuple(relations), predicate, group_by)

    def condition(self) -> Predicate:
        pred = self.atom()
        while True:
            t = self.tok
            if t.kind == "keyword" and t.text == "AND":
                self.advance()
                pred = conjoin(pred, self.atom())
            elif t.kind == "keyword" and t.text in ("OR", "NOT"):
                raise self.fail(f"{t.text} is not supported; predicates must be conjunctive")
            else:
                return pred

    def atom(self) -> Predicate:
        t = self.tok
        if t.kind == "keyword" and t.text == "FALSE":
            self.advance()
            return EMPTY
        if t.kind == "keyword" and t.text in ("OR", "NOT"):
            raise self.fail(f"{t.text} is not supported; predicates must be conjunctive")
        name_tok = self.ident("an attribute")
        dom = self.check_attr(name_tok)
        op_tok = self.tok
        if op_tok.kind != "op":
            raise self.fail(f"expected a comparison operator, found {self.describe(op_tok)}")
        if op_tok.text in ("!=", "<>"):
            raise self.fail(f"operator {op_tok.text!r} is not supported")
        self.advance()
        lit_tok = self.tok
        timestamp = False
        if lit_tok.kind == "keyword" and lit_tok.text == "TIMESTAMP":
            self.advance()
            timestamp = True
            lit_tok = self.tok
            if lit_tok.kind != "string":
                raise self.fail(f"expected a quoted timestamp, found {self.describe(lit_tok)}")
        if lit_tok.kind not in ("number", "string"):
            raise self.fail(f"expected a literal, found {self.describe(lit_tok)}")
        self.advance()
        op = op_tok.text

        numeric_attr = dom.is_numeric if dom is not None else None
        if lit_tok.kind == "string" and (timestamp or numeric_attr or (numeric_attr is None and op != "=")):
            try:
                value: Any = parse_timestamp(lit_tok.value)
            except ValueError:
                raise ParseError("semantic", f"cannot read {lit_tok.value!r} as a timestamp for "
                                 f"{name_tok.text!r}", lit_tok.pos) from None
        elif lit_tok.kind == "string":
            value = lit_tok.value
        else:
            value = lit_tok.value
            if numeric_attr is False:
                raise ParseError("semantic", f"categorical attribute {name_tok.text!r} compared with a number",
                                 lit_tok.pos)

        if isinstance(value, str):
            if op != "=":
                raise ParseError("semantic", f"range comparison on categorical attribute {name_tok.text!r}",
                                 op_tok.pos)
            if dom is not None and value not in dom.value_set:
                return EMPTY
            return Predicate({name_tok.text: frozenset([value])})
        v = float(value)
        interval = {
            "=": Interval(v, v),
            "<": Interval(-INF, v, True, True),
            "<=": Interval(-INF, v, True, False),
            ">": Interval(v, INF, True, True),
            ">=": Interval(v, INF, False, True),
        }[op]
        return Predicate({name_tok.text: interval})


def parse_query(text: str, schema: Schema | None = None) -> QuerySpec:
    """Parse ``text``; with a schema, attribute names and types are checked too."""
    return _Parser(text, schema).parse()


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt_string(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


def format_predicate(pred: Predicate) -> str:
    if pred.empty:
        return "FALSE"
    parts = []
    for name, atom in pred.atoms.items():
        if isinstance(atom, Interval):
            if atom.lo == atom.hi:
                parts.append(f"{name} = {_fmt_number(atom.lo)}")
                continue
            if math.isfinite(atom.lo):
                parts.append(f"{name} {'>' if atom.lo_open else '>='} {_fmt_number(atom.lo)}")
            if math.isfinite(atom.hi):
                parts.append(f"{name} {'<' if atom.hi_open else '<='} {_fmt_number(atom.hi)}")
        else:
            if len(atom) != 1:
                raise ValueError(f"membership in {sorted(atom)} on {name!r} has no conjunctive SQL form")
            parts.append(f"{name} = {_fmt_string(next(iter(atom)))}")
    return " AND ".join(parts)


def format_query(spec: QuerySpec) -> str:
    """SQL text that parses back to ``spec``."""
    target = "*" if spec.target == "*" else spec.target
    out = f"SELECT {spec.aggregate}({target}) FROM {', '.join(spec.relations)}"
    where = format_predicate(spec.predicate)
    if where:
        out += f" WHERE {where}"
    if spec.group_by:
        out += f" GROUP BY {spec.group_by}"
    return out


def explain(text: str, schema: Schema | None = None) -> str:
    """Parsed QuerySpec, or the error, as canonical JSON text."""
    try:
        obj = parse_query(text, schema).to_json()
    except ParseError as e:
        obj = e.to_json()
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
