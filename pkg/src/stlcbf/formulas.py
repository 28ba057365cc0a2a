"""Temporal-logic task formulas: AST, parser, fragment validation, until rewriting.

The language has two strata.  The boolean layer combines predicates with
``&`` and ``|`` and contains no temporal operators.  The temporal layer
applies bounded ``F`` (eventually), ``G`` (always), and ``U`` (until) to
boolean-layer formulas and combines the results with ``&`` and ``|``.
Negation and nested temporal operators are outside the language.

Concrete syntax::

    formula    := or_expr
    or_expr    := and_expr ('|' and_expr)*
    and_expr   := until_expr ('&' until_expr)*
    until_expr := primary ('U' '[' a ',' b ']' primary)?
    primary    := 'G' '[' a ',' b ']' '(' formula ')'
               |  'F' '[' a ',' b ']' '(' formula ')'
               |  '(' formula ')'
               |  'true'
               |  IDENT

Predicates are bare identifiers bound through a registry; there is no
inline arithmetic.  All functions here are pure over immutable ASTs and
safe for concurrent use.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

from .predicates import Predicate

__all__ = [
    "Stratum",
    "Formula",
    "TrueNode",
    "Pred",
    "And",
    "Or",
    "Eventually",
    "Always",
    "Until",
    "FormulaError",
    "FormulaSyntaxError",
    "UnboundPredicateError",
    "IntervalError",
    "FragmentError",
    "FragmentReport",
    "parse_formula",
    "validate_fragment",
    "stratum_of",
    "desugar_until",
    "to_string",
    "iter_nodes",
    "temporal_nodes",
]


class FormulaError(ValueError):
    """Base class for formula construction and validation errors."""


class FormulaSyntaxError(FormulaError):
    """Raised on malformed formula text; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnboundPredicateError(FormulaError):
    """A predicate identifier has no binding in the registry."""


class IntervalError(FormulaError):
    """A temporal interval violates 0 <= a <= b."""


class FragmentError(FormulaError):
    """The formula is outside the supported two-strata language."""


class Stratum(enum.Enum):
    PSI = "psi"   # boolean layer, no temporal operators
    PHI = "phi"   # temporal layer


@dataclass(frozen=True)
class TrueNode:
    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Pred:
    name: str
    binding: Predicate | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Eventually:
    a: float
    b: float
    child: "Formula"

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Always:
    a: float
    b: float
    child: "Formula"

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Until:
    a: float
    b: float
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return to_string(self)


Formula = Union[TrueNode, Pred, And, Or, Eventually, Always, Until]

_KEYWORDS = {"G", "F", "U", "true"}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[0-9]+(?:\.[0-9]*)?(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[()\[\],&|]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad = len(text) - len(stripped)
            raise FormulaSyntaxError(f"unexpected character {text[bad]!r}", bad)
        if match.lastgroup == "num":
            tokens.append(("num", match.group("num"), match.start("num")))
        elif match.lastgroup == "ident":
            name = match.group("ident")
            kind = "kw" if name in _KEYWORDS else "ident"
            tokens.append((kind, name, match.start("ident")))
        else:
            tokens.append(("punct", match.group("punct"), match.start("punct")))
        pos = match.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.idx = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.idx]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def expect(self, kind: str, value: str | None = None) -> tuple[str, str, int]:
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise FormulaSyntaxError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return self.advance()

    def parse(self) -> Formula:
        formula = self.or_expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise FormulaSyntaxError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return formula

    def or_expr(self) -> Formula:
        parts = [self.and_expr()]
        while self.peek()[:2] == ("punct", "|"):
            self.advance()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Formula:
        parts = [self.until_expr()]
        while self.peek()[:2] == ("punct", "&"):
            self.advance()
            parts.append(self.until_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until_expr(self) -> Formula:
        left = self.primary()
        if self.peek()[:2] == ("kw", "U"):
            _, _, pos = self.advance()
            a, b = self.interval(pos)
            right = self.primary()
            return Until(a, b, left, right)
        return left

    def interval(self, op_pos: int) -> tuple[float, float]:
        self.expect("punct", "[")
        a = float(self.expect("num")[1])
        self.expect("punct", ",")
        b = float(self.expect("num")[1])
        self.expect("punct", "]")
        if a > b:
            raise IntervalError(f"interval [{a:g},{b:g}] violates a <= b (operator at position {op_pos})")
        return a, b

    def primary(self) -> Formula:
        tok = self.peek()
        if tok[:2] == ("punct", "("):
            self.advance()
            inner = self.or_expr()
            self.expect("punct", ")")
            return inner
        if tok[0] == "kw" and tok[1] in ("G", "F"):
            self.advance()
            a, b = self.interval(tok[2])
            self.expect("punct", "(")
            child = self.or_expr()
            self.expect("punct", ")")
            return Always(a, b, child) if tok[1] == "G" else Eventually(a, b, child)
        if tok[:2] == ("kw", "true"):
            self.advance()
            return TrueNode()
        if tok[0] == "ident":
            self.advance()
            return Pred(tok[1])
        raise FormulaSyntaxError(f"expected a formula, found {tok[1] or 'end of input'!r}", tok[2])


def _bind(formula: Formula, registry: Mapping[str, Predicate | Sequence[Predicate]]) -> Formula:
    """Attach registry bindings to predicate leaves.

    A registry entry may map one identifier to several predicates (e.g. a
    box constraint expanded into affine pieces); the leaf is then replaced
    by a conjunction, which stays in the boolean layer.
    """
    if isinstance(formula, Pred):
        if formula.name not in registry:
            raise UnboundPredicateError(f"predicate {formula.name!r} is not bound in the registry")
        entry = registry[formula.name]
        if isinstance(entry, Predicate):
            return Pred(formula.name, entry)
        parts = tuple(Pred(p.name, p) for p in entry)
        if len(parts) == 1:
            return parts[0]
        return And(parts)
    if isinstance(formula, And):
        return And(tuple(_bind(c, registry) for c in formula.children))
    if isinstance(formula, Or):
        return Or(tuple(_bind(c, registry) for c in formula.children))
    if isinstance(formula, Eventually):
        return Eventually(formula.a, formula.b, _bind(formula.child, registry))
    if isinstance(formula, Always):
        return Always(formula.a, formula.b, _bind(formula.child, registry))
    if isinstance(formula, Until):
        return Until(formula.a, formula.b, _bind(formula.left, registry), _bind(formula.right, registry))
    return formula


def parse_formula(text: str, registry: Mapping[str, Predicate | Sequence[Predicate]]) -> Formula:
    """Parse formula text and bind every predicate identifier.

    Raises FormulaSyntaxError with a character position on malformed
    input, UnboundPredicateError for unknown identifiers, IntervalError
    when a > b, and FragmentError when the result is outside the
    two-strata language.
    """
    ast = _Parser(text).parse()
    bound = _bind(ast, registry)
    stratum_of(bound)
    return bound


def stratum_of(formula: Formula) -> Stratum:
    """Classify a formula into the boolean or temporal stratum.

    Raises FragmentError on mixes the language does not allow: boolean
    operators over one stratum only, temporal operators over the boolean
    layer only.
    """
    if isinstance(formula, (TrueNode, Pred)):
        return Stratum.PSI
    if isinstance(formula, (And, Or)):
        strata = {stratum_of(c) for c in formula.children}
        if len(strata) != 1:
            raise FragmentError(
                f"boolean combination mixes temporal and non-temporal operands: {to_string(formula)}"
            )
        return strata.pop()
    if isinstance(formula, (Eventually, Always)):
        if stratum_of(formula.child) is not Stratum.PSI:
            raise FragmentError(
                f"temporal operator over a temporal formula is not supported: {to_string(formula)}"
            )
        return Stratum.PHI
    if isinstance(formula, Until):
        for side in (formula.left, formula.right):
            if stratum_of(side) is not Stratum.PSI:
                raise FragmentError(
                    f"until operand must be temporal-free: {to_string(side)}"
                )
        return Stratum.PHI
    raise TypeError(f"not a formula node: {formula!r}")


@dataclass(frozen=True)
class FragmentReport:
    stratum: Stratum
    predicates: frozenset[str]


def validate_fragment(formula: Formula) -> FragmentReport:
    """Confirm the stratification and collect the predicate identifiers."""
    stratum = stratum_of(formula)
    names = frozenset(n.name for n in iter_nodes(formula) if isinstance(n, Pred))
    return FragmentReport(stratum, names)


def iter_nodes(formula: Formula):
    """Yield the formula and all subformulas, depth first, left to right."""
    yield formula
    if isinstance(formula, (And, Or)):
        for c in formula.children:
            yield from iter_nodes(c)
    elif isinstance(formula, (Eventually, Always)):
        yield from iter_nodes(formula.child)
    elif isinstance(formula, Until):
        yield from iter_nodes(formula.left)
        yield from iter_nodes(formula.right)


def temporal_nodes(formula: Formula) -> list[Formula]:
    """Temporal operators in depth-first order (the order used for configuration)."""
    return [n for n in iter_nodes(formula) if isinstance(n, (Eventually, Always, Until))]


TprimePolicy = Callable[[int, float, float], float]


def desugar_until(formula: Formula, tprime_policy: TprimePolicy | None = None) -> Formula:
    """Rewrite every until into an always/eventually conjunction.

    ``left U[a,b] right`` becomes ``G[0,t'](left) & F[a,t'](right)`` for a
    witness time t' in [a,b].  Any fixed t' is sufficient for the original
    until but not necessary, so the choice is conservative; the policy
    receives (occurrence_index, a, b) with occurrences numbered depth
    first, and defaults to t' = b, the weakest eventually-deadline.
    """
    policy = tprime_policy if tprime_policy is not None else (lambda i, a, b: b)
    counter = [0]

    def rewrite(node: Formula) -> Formula:
        if isinstance(node, And):
            return And(tuple(rewrite(c) for c in node.children))
        if isinstance(node, Or):
            return Or(tuple(rewrite(c) for c in node.children))
        if isinstance(node, Eventually):
            return Eventually(node.a, node.b, rewrite(node.child))
        if isinstance(node, Always):
            return Always(node.a, node.b, rewrite(node.child))
        if isinstance(node, Until):
            idx = counter[0]
            counter[0] += 1
            tprime = float(policy(idx, node.a, node.b))
            if not (node.a <= tprime <= node.b):
                raise ValueError(
                    f"until witness time {tprime:g} outside [{node.a:g},{node.b:g}] "
                    f"for occurrence {idx}"
                )
            return And((
                Always(0.0, tprime, rewrite(node.left)),
                Eventually(node.a, tprime, rewrite(node.right)),
            ))
        return node

    return rewrite(formula)


_PRECEDENCE = {Or: 1, And: 2, Until: 3}


def _fmt_num(v: float) -> str:
    return repr(float(v))


def to_string(formula: Formula) -> str:
    """Render a formula in the concrete syntax; parse(to_string(f)) == f."""

    def render(node: Formula, parent_prec: int) -> str:
        if isinstance(node, TrueNode):
            return "true"
        if isinstance(node, Pred):
            return node.name
        if isinstance(node, And):
            text = " & ".join(render(c, _PRECEDENCE[And]) for c in node.children)
            return f"({text})" if parent_prec >= _PRECEDENCE[And] else text
        if isinstance(node, Or):
            text = " | ".join(render(c, _PRECEDENCE[Or]) for c in node.children)
            return f"({text})" if parent_prec >= _PRECEDENCE[Or] else text
        if isinstance(node, Eventually):
            return f"F[{_fmt_num(node.a)},{_fmt_num(node.b)}]({render(node.child, 0)})"
        if isinstance(node, Always):
            return f"G[{_fmt_num(node.a)},{_fmt_num(node.b)}]({render(node.child, 0)})"
        if isinstance(node, Until):
            left = render(node.left, _PRECEDENCE[Until])
            right = render(node.right, _PRECEDENCE[Until])
            if not isinstance(node.left, (TrueNode, Pred)):
                left = f"({left})"
            if not isinstance(node.right, (TrueNode, Pred)):
                right = f"({right})"
            return f"{left} U[{_fmt_num(node.a)},{_fmt_num(node.b)}] {right}"
        raise TypeError(f"not a formula node: {node!r}")

    return render(formula, 0)
