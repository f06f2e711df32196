"""Query language: lexer, parser, AST, printer, validator, rule expansion.

The language is a small Prolog-style surface. A program is a sequence of
clauses terminated by '.': either rules (head with a variable list, body a
conjunction) or query directives (':- goals.'). Goals are predicate calls,
membership tuple goals like ("accidents", A), or negation \\+(...). Terms
are variables ([A-Z][A-Za-z0-9_]*), atoms ([a-z][A-Za-z0-9_]*), double
quoted strings, non-negative integers, tuple terms, and lists of strings.
'%' starts a comment. Query files use the .glq extension.

Spatial predicate thresholds are fixed by the language, in metres: near
means distance not larger than 100, closeby not larger than 10 (inclusive).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from .errors import QuerySyntaxError, QueryValidationError

NEAR_METRES = 100.0
CLOSEBY_METRES = 10.0

QUERY_FILE_SUFFIX = ".glq"


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Int:
    value: int


@dataclass(frozen=True)
class TupleTerm:
    items: tuple


@dataclass(frozen=True)
class StrList:
    values: tuple


Term = Union[Var, Atom, Str, Int, TupleTerm, StrList]


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class TupleGoal:
    """A tuple term in goal position: category membership."""

    items: tuple


@dataclass(frozen=True)
class Negation:
    goals: tuple


Goal = Union[Call, TupleGoal, Negation]


@dataclass(frozen=True)
class Rule:
    name: str
    params: tuple
    body: tuple


@dataclass(frozen=True)
class Query:
    goals: tuple


@dataclass(frozen=True)
class Program:
    clauses: tuple

    @property
    def rules(self) -> tuple:
        return tuple(c for c in self.clauses if isinstance(c, Rule))

    @property
    def queries(self) -> tuple:
        return tuple(c for c in self.clauses if isinstance(c, Query))


# ---------------------------------------------------------------------------
# Lexer

_SYMBOLS = {"(": "LPAREN", ")": "RPAREN", "[": "LBRACK", "]": "RBRACK",
            ",": "COMMA", ".": "DOT"}


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    line: int
    col: int


def _lex(text: str) -> list[_Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == ":" and text[i : i + 2] == ":-":
            tokens.append(_Token("NECK", ":-", line, col))
            i += 2
            col += 2
            continue
        if ch == "\\" and text[i : i + 2] == "\\+":
            tokens.append(_Token("NOT", "\\+", line, col))
            i += 2
            col += 2
            continue
        if ch in _SYMBOLS:
            tokens.append(_Token(_SYMBOLS[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise QuerySyntaxError("unterminated string", line, col)
            tokens.append(_Token("STR", text[i + 1 : j], line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("INT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            kind = "VAR" if ch.isupper() else "ATOM"
            tokens.append(_Token(kind, text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise QuerySyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise QuerySyntaxError(
                f"expected {what}, got {tok.value!r}" if tok.kind != "EOF"
                else f"expected {what}, got end of input",
                tok.line,
                tok.col,
            )
        return self.advance()

    def error(self, message: str):
        tok = self.peek()
        raise QuerySyntaxError(message, tok.line, tok.col)

    # clauses

    def program(self) -> Program:
        clauses = []
        while self.peek().kind != "EOF":
            clauses.append(self.clause())
        return Program(tuple(clauses))

    def clause(self):
        if self.peek().kind == "NECK":
            self.advance()
            goals = self.goal_list()
            self.expect("DOT", "'.'")
            return Query(tuple(goals))
        name = self.expect("ATOM", "a rule head or ':-'").value
        self.expect("LPAREN", "'('")
        params = [self.expect("VAR", "a variable in the rule head").value]
        while self.peek().kind == "COMMA":
            self.advance()
            params.append(self.expect("VAR", "a variable in the rule head").value)
        self.expect("RPAREN", "')'")
        self.expect("NECK", "':-'")
        goals = self.goal_list()
        self.expect("DOT", "'.'")
        return Rule(name, tuple(params), tuple(goals))

    # goals

    def goal_list(self) -> list:
        goals = [self.goal()]
        while self.peek().kind == "COMMA":
            self.advance()
            goals.append(self.goal())
        return goals

    def goal(self):
        tok = self.peek()
        if tok.kind == "NOT":
            self.advance()
            self.expect("LPAREN", "'(' after '\\+'")
            goals = self.goal_list()
            self.expect("RPAREN", "')'")
            return Negation(tuple(goals))
        if tok.kind == "LPAREN":
            items = self.tuple_items()
            return TupleGoal(items)
        if tok.kind == "ATOM":
            name = self.advance().value
            self.expect("LPAREN", f"'(' after predicate name '{name}'")
            args = [self.term()]
            while self.peek().kind == "COMMA":
                self.advance()
                args.append(self.term())
            self.expect("RPAREN", "')'")
            return Call(name, tuple(args))
        self.error("expected a goal")

    def tuple_items(self) -> tuple:
        self.expect("LPAREN", "'('")
        items = [self.term()]
        while self.peek().kind == "COMMA":
            self.advance()
            items.append(self.term())
        self.expect("RPAREN", "')'")
        if len(items) < 2:
            self.error("tuple term needs at least two items")
        return tuple(items)

    # terms

    def term(self):
        tok = self.peek()
        if tok.kind == "VAR":
            self.advance()
            return Var(tok.value)
        if tok.kind == "ATOM":
            self.advance()
            return Atom(tok.value)
        if tok.kind == "STR":
            self.advance()
            return Str(tok.value)
        if tok.kind == "INT":
            self.advance()
            return Int(int(tok.value))
        if tok.kind == "LPAREN":
            return TupleTerm(self.tuple_items())
        if tok.kind == "LBRACK":
            self.advance()
            values = []
            if self.peek().kind != "RBRACK":
                values.append(self.expect("STR", "a string in the list").value)
                while self.peek().kind == "COMMA":
                    self.advance()
                    values.append(self.expect("STR", "a string in the list").value)
            self.expect("RBRACK", "']'")
            return StrList(tuple(values))
        self.error("expected a term")


def parse(text: str) -> Program:
    """Parse query-language text into a Program AST."""
    return _Parser(_lex(text)).program()


# ---------------------------------------------------------------------------
# Printer

def _term_text(term: Term) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Atom):
        return term.name
    if isinstance(term, Int):
        return str(term.value)
    if isinstance(term, Str):
        if '"' in term.value or "\n" in term.value:
            raise QueryValidationError(
                f"string {term.value!r} cannot be printed (embedded quote or newline)"
            )
        return f'"{term.value}"'
    if isinstance(term, TupleTerm):
        return "(" + ", ".join(_term_text(t) for t in term.items) + ")"
    if isinstance(term, StrList):
        return "[" + ", ".join(f'"{v}"' for v in term.values) + "]"
    raise QueryValidationError(f"cannot print term {term!r}")


def _goal_text(goal: Goal) -> str:
    if isinstance(goal, Call):
        return f"{goal.name}(" + ", ".join(_term_text(t) for t in goal.args) + ")"
    if isinstance(goal, TupleGoal):
        return "(" + ", ".join(_term_text(t) for t in goal.items) + ")"
    if isinstance(goal, Negation):
        return "\\+(" + ", ".join(_goal_text(g) for g in goal.goals) + ")"
    raise QueryValidationError(f"cannot print goal {goal!r}")


def to_text(node) -> str:
    """Render a Program, Rule or Query back to canonical query-language text.

    parse(to_text(p)) == p holds for every printable program.
    """
    if isinstance(node, Program):
        return "\n".join(to_text(c) for c in node.clauses)
    if isinstance(node, Query):
        body = ",\n   ".join(_goal_text(g) for g in node.goals)
        return f":- {body}.\n"
    if isinstance(node, Rule):
        head = f"{node.name}(" + ", ".join(node.params) + ")"
        body = ",\n    ".join(_goal_text(g) for g in node.body)
        return f"{head} :-\n    {body}.\n"
    raise QueryValidationError(f"cannot print {node!r}")


# ---------------------------------------------------------------------------
# Predicate tables

ENTITY_PREDICATES = {
    "near": (2,),
    "closeby": (2,),
    "distance": (3,),
    "entity_type": (2,),
}

RELATION_PREDICATES = {
    "near_relational": (3, 4),
    "closeby_relational": (3, 4),
    "entity_type_relational": (3,),
    "filter_by_relationship": (4,),
    "join_relational": (4, 5),
    "project_id_relational": (3,),
    "minus_relational": (3,),
}

# Predicate name -> (input positions, output position, column-list position)
_RELATIONAL_SHAPE = {
    "near_relational": ((0, 1), 2, 3),
    "closeby_relational": ((0, 1), 2, 3),
    "entity_type_relational": ((1,), 2, None),
    "filter_by_relationship": ((0, 1), 3, None),
    "join_relational": ((0, 1), 2, None),
    "project_id_relational": ((0,), 2, None),
    "minus_relational": ((0, 1), 2, None),
}


def _goal_vars(goal: Goal) -> list[str]:
    """All variable names in a goal, in appearance order."""
    out: list[str] = []

    def walk_term(t):
        if isinstance(t, Var):
            out.append(t.name)
        elif isinstance(t, TupleTerm):
            for item in t.items:
                walk_term(item)

    def walk_goal(g):
        if isinstance(g, Call):
            for a in g.args:
                walk_term(a)
        elif isinstance(g, TupleGoal):
            for item in g.items:
                walk_term(item)
        else:
            for sub in g.goals:
                walk_goal(sub)

    walk_goal(goal)
    return out


def query_variables(query: Query) -> list[str]:
    """Distinct top-level variables in first-appearance order.

    Variables occurring only inside negations are existential locals and are
    not part of the answer.
    """
    seen: list[str] = []
    for goal in query.goals:
        if isinstance(goal, Negation):
            continue
        for name in _goal_vars(goal):
            if name not in seen:
                seen.append(name)
    return seen


# ---------------------------------------------------------------------------
# Validation

class _Validator:
    def __init__(self, program: Program, mode: str, catalog=None):
        if mode not in ("entity", "relation"):
            raise ValueError(f"mode must be 'entity' or 'relation', got {mode!r}")
        self.program = program
        self.mode = mode
        self.catalog = catalog
        self.warnings: list[str] = []
        self.rules: dict[str, Rule] = {}

    def fail(self, message: str):
        raise QueryValidationError(message)

    def warn_unknown_relation(self, name: str):
        if self.catalog is not None and not self.catalog.has_relation(name):
            self.warnings.append(
                f"relation '{name}' is not in the catalog (resolved at run time)"
            )

    def warn_unknown_type(self, name: str):
        if self.catalog is not None and not self.catalog.has_type_spec(name):
            self.warnings.append(
                f"type spec '{name}' is not in the catalog (resolved at run time)"
            )

    def run(self) -> list[str]:
        for clause in self.program.clauses:
            if isinstance(clause, Rule):
                if clause.name in self.rules:
                    self.fail(f"multiple definitions of rule '{clause.name}'")
                self.rules[clause.name] = clause
        for rule in self.rules.values():
            self.check_rule(rule)
        for query in self.program.queries:
            self.check_query(query)
        return self.warnings

    # -- rules

    def check_rule(self, rule: Rule):
        if len(set(rule.params)) != len(rule.params):
            self.fail(f"rule '{rule.name}': duplicate head variables {rule.params}")
        body_vars = set()
        for goal in rule.body:
            self.check_goal_shape(goal, where=f"rule '{rule.name}'")
            body_vars.update(_goal_vars(goal))
        missing = [p for p in rule.params if p not in body_vars]
        if missing:
            self.fail(
                f"rule '{rule.name}': head variable '{missing[0]}' does not "
                "occur in the body"
            )

    # -- queries

    def check_query(self, query: Query):
        bound: set[str] = set()
        for i, goal in enumerate(query.goals, start=1):
            where = f"goal {i}"
            self.check_goal_shape(goal, where)
            if self.mode == "entity":
                self.check_entity_bindings(goal, bound, where)
            else:
                self.check_relational_bindings(goal, bound, where)

    # -- shape checks shared by rules and queries

    def check_goal_shape(self, goal: Goal, where: str):
        if isinstance(goal, TupleGoal):
            if self.mode == "relation":
                self.fail(
                    f"{where}: membership goals are entity-evaluation only"
                )
            self.check_entity_term(TupleTerm(goal.items), where)
            return
        if isinstance(goal, Negation):
            if self.mode == "relation":
                self.fail(f"{where}: \\+ is not available in relation mode")
            for sub in goal.goals:
                self.check_goal_shape(sub, where + " (inside \\+)")
            return
        name, arity = goal.name, len(goal.args)
        if self.mode == "entity":
            if name in RELATION_PREDICATES:
                self.fail(
                    f"{where}: '{name}' is a relation-evaluation predicate, "
                    "not available in entity mode"
                )
            if name in ENTITY_PREDICATES:
                if arity not in ENTITY_PREDICATES[name]:
                    self.fail(f"{where}: {name}/{arity} has the wrong arity")
                self.check_entity_call_shape(goal, where)
                return
        else:
            if name in ENTITY_PREDICATES:
                self.fail(
                    f"{where}: '{name}' is an entity-evaluation predicate, "
                    "not available in relation mode"
                )
            if name in RELATION_PREDICATES:
                if arity not in RELATION_PREDICATES[name]:
                    self.fail(f"{where}: {name}/{arity} has the wrong arity")
                self.check_relational_call_shape(goal, where)
                return
        rule = self.rules.get(name)
        if rule is None:
            self.fail(f"{where}: unknown predicate {name}/{arity}")
        if len(rule.params) != arity:
            self.fail(
                f"{where}: rule '{name}' expects {len(rule.params)} arguments, "
                f"got {arity}"
            )

    def check_entity_term(self, term, where: str):
        if not isinstance(term, TupleTerm) or len(term.items) != 2:
            self.fail(
                f"{where}: expected a (\"category\", id) tuple, got "
                f"{_term_text(term) if isinstance(term, (Var, Atom, Str, Int, TupleTerm, StrList)) else term!r}"
            )
        category, id_term = term.items
        if not isinstance(category, Str):
            self.fail(f"{where}: category must be a string literal")
        if not isinstance(id_term, (Var, Int)):
            self.fail(f"{where}: entity id must be a variable or an integer")
        self.warn_unknown_relation(category.value)

    def check_entity_call_shape(self, goal: Call, where: str):
        name = goal.name
        if name in ("near", "closeby"):
            self.check_entity_term(goal.args[0], where)
            self.check_entity_term(goal.args[1], where)
        elif name == "distance":
            self.check_entity_term(goal.args[0], where)
            self.check_entity_term(goal.args[1], where)
            if not isinstance(goal.args[2], Var):
                self.fail(f"{where}: distance/3 needs a distance variable")
        elif name == "entity_type":
            if not isinstance(goal.args[0], Atom):
                self.fail(f"{where}: entity_type/2 needs a type name atom")
            self.warn_unknown_type(goal.args[0].name)
            self.check_entity_term(goal.args[1], where)

    def check_relational_call_shape(self, goal: Call, where: str):
        name = goal.name
        inputs, out_pos, cols_pos = _RELATIONAL_SHAPE[name]
        for pos in inputs:
            arg = goal.args[pos]
            if not isinstance(arg, (Str, Var)):
                self.fail(
                    f"{where}: argument {pos + 1} of {name} must be a relation "
                    "name or variable"
                )
            if isinstance(arg, Str):
                self.warn_unknown_relation(arg.value)
        out = goal.args[out_pos]
        if not isinstance(out, Var):
            self.fail(f"{where}: output of {name} must be a variable")
        if name == "entity_type_relational":
            if not isinstance(goal.args[0], Atom):
                self.fail(f"{where}: {name} needs a type name atom")
            self.warn_unknown_type(goal.args[0].name)
        if name == "filter_by_relationship":
            if not isinstance(goal.args[2], Str):
                self.fail(f"{where}: {name} needs an attribute name string")
        if name == "join_relational":
            if not isinstance(goal.args[3], Str):
                self.fail(f"{where}: {name} needs a join attribute string")
            if len(goal.args) == 5 and not isinstance(goal.args[4], StrList):
                self.fail(f"{where}: {name} output columns must be a string list")
        if name == "project_id_relational":
            if not isinstance(goal.args[1], StrList) or not goal.args[1].values:
                self.fail(f"{where}: {name} needs a non-empty column list")
        if cols_pos is not None and len(goal.args) > cols_pos:
            cols = goal.args[cols_pos]
            if not isinstance(cols, StrList) or len(cols.values) != 2:
                self.fail(
                    f"{where}: {name} column list must hold exactly two names"
                )

    # -- binding analysis (queries only)

    def check_entity_bindings(self, goal: Goal, bound: set, where: str):
        if isinstance(goal, TupleGoal):
            id_term = goal.items[1]
            if isinstance(id_term, Var):
                bound.add(id_term.name)
            return
        if isinstance(goal, Negation):
            self.check_negation(goal, bound, where)
            return
        name = goal.name
        if name in ("near", "closeby"):
            for arg in goal.args:
                id_term = arg.items[1]
                if isinstance(id_term, Var):
                    bound.add(id_term.name)
            return
        if name == "distance":
            for arg in goal.args[:2]:
                id_term = arg.items[1]
                if isinstance(id_term, Var) and id_term.name not in bound:
                    self.fail(
                        f"{where}: distance/3 needs bound entity arguments "
                        f"('{id_term.name}' is unbound)"
                    )
            d = goal.args[2]
            if d.name in bound:
                self.fail(
                    f"{where}: distance/3 needs an unbound distance variable "
                    f"('{d.name}' is already bound)"
                )
            bound.add(d.name)
            return
        if name == "entity_type":
            id_term = goal.args[1].items[1]
            if isinstance(id_term, Var):
                bound.add(id_term.name)
            return
        # rule call: assume it grounds its variable arguments
        for v in _goal_vars(goal):
            bound.add(v)

    def check_negation(self, goal: Negation, bound: set, where: str):
        inner = set()
        for sub in goal.goals:
            inner.update(_goal_vars(sub))
        outer = self.outer_variable_names(goal)
        for v in sorted(inner):
            if v in bound:
                continue
            if v in outer:
                self.fail(
                    f"{where}: variable '{v}' inside \\+ must be bound by the "
                    "outer context (it also occurs outside the negation)"
                )
            # otherwise: local to the negation, existentially quantified

    def outer_variable_names(self, negation: Negation) -> set:
        """Variables occurring in any clause position outside `negation`."""
        names: set[str] = set()

        def walk(goals):
            for g in goals:
                if g is negation:
                    continue
                if isinstance(g, Negation):
                    walk(g.goals)
                else:
                    names.update(_goal_vars(g))

        for clause in self.program.clauses:
            if isinstance(clause, Query):
                walk(clause.goals)
            else:
                names.update(clause.params)
                walk(clause.body)
        return names

    def check_relational_bindings(self, goal: Call, bound: set, where: str):
        name = goal.name
        if name not in _RELATIONAL_SHAPE:
            for v in _goal_vars(goal):  # rule call
                bound.add(v)
            return
        inputs, out_pos, _ = _RELATIONAL_SHAPE[name]
        for pos in inputs:
            arg = goal.args[pos]
            if isinstance(arg, Var) and arg.name not in bound:
                self.fail(f"{where}: unbound input variable '{arg.name}'")
        out = goal.args[out_pos]
        if out.name in bound:
            self.fail(f"{where}: output variable '{out.name}' is already bound")
        bound.add(out.name)


def validate(program: Program, mode: str, catalog=None) -> list[str]:
    """Validate a program for one evaluation mode; returns warnings.

    Raises QueryValidationError for unknown predicates, wrong arities,
    paradigm mismatches, malformed arguments, unbound relational inputs,
    rebound outputs, and negations over outer variables that are not bound.
    Unknown relation or type-spec names only warn: they may appear in the
    catalog by the time the query runs.
    """
    return _Validator(program, mode, catalog).run()


# ---------------------------------------------------------------------------
# Rule expansion

def expand_rules(program: Program) -> Query:
    """Unfold non-recursive rules into a single flat query.

    The program must contain exactly one query directive. Rule calls are
    replaced by the rule body with head variables substituted by the call
    arguments; body-local variables are renamed apart. Recursive rules and
    multiple definitions of one name are rejected.
    """
    rules: dict[str, Rule] = {}
    for clause in program.clauses:
        if isinstance(clause, Rule):
            if clause.name in rules:
                raise QueryValidationError(
                    f"multiple definitions of rule '{clause.name}' are unsupported"
                )
            rules[clause.name] = clause
    queries = program.queries
    if len(queries) != 1:
        raise QueryValidationError(
            f"expected exactly one query directive, found {len(queries)}"
        )

    counter = [0]

    def subst_term(term, mapping):
        if isinstance(term, Var):
            return mapping.get(term.name, term)
        if isinstance(term, TupleTerm):
            return TupleTerm(tuple(subst_term(t, mapping) for t in term.items))
        return term

    def subst_goal(goal, mapping):
        if isinstance(goal, Call):
            return Call(goal.name, tuple(subst_term(a, mapping) for a in goal.args))
        if isinstance(goal, TupleGoal):
            return TupleGoal(tuple(subst_term(t, mapping) for t in goal.items))
        return Negation(tuple(subst_goal(g, mapping) for g in goal.goals))

    def expand(goals, stack):
        out = []
        for goal in goals:
            if isinstance(goal, Negation):
                out.append(Negation(tuple(expand(goal.goals, stack))))
                continue
            if isinstance(goal, Call) and goal.name in rules:
                rule = rules[goal.name]
                if goal.name in stack:
                    raise QueryValidationError(
                        f"rule '{goal.name}' is recursive; recursion is unsupported"
                    )
                if len(goal.args) != len(rule.params):
                    raise QueryValidationError(
                        f"rule '{goal.name}' expects {len(rule.params)} "
                        f"arguments, got {len(goal.args)}"
                    )
                mapping = dict(zip(rule.params, goal.args))
                locals_ = set()
                for g in rule.body:
                    locals_.update(_goal_vars(g))
                locals_ -= set(rule.params)
                counter[0] += 1
                for v in sorted(locals_):
                    mapping[v] = Var(f"{v}__r{counter[0]}")
                body = [subst_goal(g, mapping) for g in rule.body]
                out.extend(expand(body, stack + (goal.name,)))
                continue
            out.append(goal)
        return out

    return Query(tuple(expand(list(queries[0].goals), ())))
