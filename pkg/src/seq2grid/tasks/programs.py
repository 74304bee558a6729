"""Program evaluation task: generate snippets over a closed grammar and
predict their printed output.

Grammar (one statement per line, final line prints):

    line  := VAR "=" expr
           | "for x in range(" INT "):" VAR ("+=" | "-=") expr
           | "print(" expr ")"
    expr  := INT | VAR | atom OP atom | "(" expr ")"
           | "(" expr " if " INT "<" INT " else " expr ")"
    OP    := "+" | "-" | "*"        (one side of * is a small literal)

Variables are single lowercase letters; "x" is reserved for the loop
counter and never appears in expressions.  Difficulty: nesting is the
maximum expression depth, length the maximum digit count over
expression literals.
"""

import re

from ..errors import ParameterError, ParseError
from .base import Example, SplitRanges, generate_split
from .vocab import EOS_TOKEN, char_tokens

PROGRAM_RANGES = SplitRanges(
    train={"nesting": (1, 2), "length": (1, 5)},
    id_test={"nesting": (1, 2), "length": (1, 5)},
    ood_test={"nesting": (1, 2), "length": (6, 7)},
)

VARIABLES = "abcdefghij"
MAX_LOOP = 19


# ---- interpreter -------------------------------------------------------------

_ASSIGN = re.compile(r"([a-w])=(?![=<>])(.*)")
_LOOP = re.compile(r"for x in range\((\d+)\):([a-w])(\+=|-=)(.*)")
_PRINT = re.compile(r"print\((.*)\)")


class _ExprParser:
    """Recursive descent over one expression string."""

    def __init__(self, text, env, line_no):
        self.text = text
        self.pos = 0
        self.env = env
        self.line_no = line_no

    def fail(self, why):
        raise ParseError(f"line {self.line_no}: {why} at column {self.pos} in {self.text!r}")

    def skip_spaces(self):
        while self.pos < len(self.text) and self.text[self.pos] == " ":
            self.pos += 1

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_keyword(self, word):
        self.skip_spaces()
        end = self.pos + len(word)
        boundary = end >= len(self.text) or not self.text[end].isalnum()
        if self.text.startswith(word, self.pos) and boundary:
            self.pos = end
            return True
        return False

    def parse(self):
        value = self.expr()
        self.skip_spaces()
        if self.pos != len(self.text):
            self.fail("trailing characters")
        return value

    def expr(self):
        value = self.term()
        while True:
            self.skip_spaces()
            c = self.peek()
            if c == "+":
                self.pos += 1
                value = value + self.term()
            elif c == "-":
                self.pos += 1
                value = value - self.term()
            else:
                return value

    def term(self):
        value = self.factor()
        while True:
            self.skip_spaces()
            if self.peek() == "*":
                self.pos += 1
                value = value * self.factor()
            else:
                return value

    def factor(self):
        self.skip_spaces()
        c = self.peek()
        if c == "(":
            self.pos += 1
            value = self.expr()
            if self.take_keyword("if"):
                left = self.expr()
                self.skip_spaces()
                if self.peek() != "<":
                    self.fail("expected <")
                self.pos += 1
                right = self.expr()
                if not self.take_keyword("else"):
                    self.fail("expected else")
                other = self.expr()
                value = value if left < right else other
            self.skip_spaces()
            if self.peek() != ")":
                self.fail("expected )")
            self.pos += 1
            return value
        if c == "-" or c.isdigit():
            start = self.pos
            if c == "-":
                self.pos += 1
            if not self.peek().isdigit():
                self.fail("expected digits")
            while self.peek().isdigit():
                self.pos += 1
            return int(self.text[start:self.pos])
        if c.isalpha() and c in self.env:
            self.pos += 1
            return self.env[c]
        if c.isalpha():
            self.fail(f"undefined variable {c!r}")
        self.fail("expected a factor")


def _evaluate(text, env, line_no):
    return _ExprParser(text, env, line_no).parse()


def eval_program(snippet):
    """Interpret a snippet (newline-joined lines, no trailing $) with
    big-integer arithmetic and return the printed value as a string."""
    env = {}
    output = None
    lines = snippet.split("\n")
    for no, line in enumerate(lines, start=1):
        if output is not None:
            raise ParseError(f"line {no}: statements after print")
        m = _LOOP.fullmatch(line)
        if m:
            count, var, op, rhs = m.groups()
            if var not in env:
                raise ParseError(f"line {no}: undefined variable {var!r}")
            for _ in range(int(count)):
                delta = _evaluate(rhs, env, no)
                env[var] = env[var] + delta if op == "+=" else env[var] - delta
            continue
        m = _PRINT.fullmatch(line)
        if m:
            output = str(_evaluate(m.group(1), env, no))
            continue
        m = _ASSIGN.fullmatch(line)
        if m:
            var, rhs = m.groups()
            env[var] = _evaluate(rhs, env, no)
            continue
        raise ParseError(f"line {no}: unrecognized statement {line!r}")
    if output is None:
        raise ParseError("snippet never prints")
    return output


# ---- generator ---------------------------------------------------------------


class _Builder:
    def __init__(self, rng, max_digits, max_depth):
        self.rng = rng
        self.max_digits = max_digits
        self.max_depth = max_depth
        self.seen_digits = 0
        self.seen_depth = 0

    def literal(self):
        digits = self.rng.randint(1, self.max_digits)
        lo = 0 if digits == 1 else 10 ** (digits - 1)
        value = self.rng.randrange(lo, 10 ** digits)
        self.seen_digits = max(self.seen_digits, len(str(value)))
        return str(value)

    def small_literal(self):
        value = self.rng.randint(2, 99)
        self.seen_digits = max(self.seen_digits, len(str(value)))
        return str(value)

    def atom(self, variables):
        if variables and self.rng.random() < 0.3:
            return variables[self.rng.randrange(len(variables))]
        return self.literal()

    def expr(self, depth, variables):
        self.seen_depth = max(self.seen_depth, depth)
        if depth >= self.max_depth or self.rng.random() < 0.35:
            return self.atom(variables)
        kind = self.rng.randrange(4)
        if kind == 0:  # additive
            op = "+" if self.rng.random() < 0.5 else "-"
            return self.subexpr(depth, variables) + op + self.subexpr(depth, variables)
        if kind == 1:  # multiplication keeps one side small
            return self.small_literal() + "*" + self.subexpr(depth, variables)
        # conditional expression, always parenthesized
        self.seen_depth = max(self.seen_depth, depth + 1)
        return "({} if {}<{} else {})".format(
            self.expr(depth + 1, variables),
            self.literal(),
            self.literal(),
            self.expr(depth + 1, variables),
        )

    def subexpr(self, depth, variables):
        inner = self.expr(depth + 1, variables)
        if re.fullmatch(r"[a-j]|\d+", inner) or inner.startswith("("):
            return inner
        return "(" + inner + ")"


def _draw_program(rng, bounds, width=25):
    max_depth = bounds["nesting"][1]
    max_digits = bounds["length"][1]
    while True:
        builder = _Builder(rng, max_digits, max_depth)
        lines = []
        defined = []
        for _ in range(rng.randint(1, 3)):
            if defined and rng.random() < 0.5:
                var = defined[rng.randrange(len(defined))]
                op = "+=" if rng.random() < 0.5 else "-="
                lines.append(
                    f"for x in range({rng.randint(2, MAX_LOOP)}):{var}{op}"
                    + builder.expr(1, defined)
                )
            else:
                var = VARIABLES[len(defined)]
                lines.append(f"{var}=" + builder.expr(1, defined))
                defined.append(var)
        lines.append("print(" + builder.expr(1, defined) + ")")
        snippet = "\n".join(lines)
        try:
            result = eval_program(snippet)
        except ParseError:
            continue
        if len(result) > width:  # target must fit the decoder width
            continue
        if builder.seen_digits == 0:
            continue
        return Example(
            input_tokens=char_tokens(snippet + EOS_TOKEN),
            target=char_tokens(result + EOS_TOKEN),
            difficulty={"nesting": builder.seen_depth, "length": builder.seen_digits},
        )


def generate_programs(split, rng, count, width=25, ranges=PROGRAM_RANGES):
    def draw(r, bounds):
        return _draw_program(r, bounds, width=width)

    return generate_split(draw, split, ranges, rng, count)


def program_oracle(input_text):
    """Independent big-integer oracle for tests: the snippet grammar is
    a Python subset, so CPython executes it directly."""
    body = input_text[:-1] if input_text.endswith(EOS_TOKEN) else input_text
    lines = body.split("\n")
    m = _PRINT.fullmatch(lines[-1])
    if m is None:
        raise ParameterError("snippet does not end with print")
    env = {}
    code = "\n".join(lines[:-1] + ["_out=" + m.group(1)])
    exec(compile(code, "<snippet>", "exec"), {"__builtins__": {"range": range}}, env)
    return str(env["_out"]) + EOS_TOKEN
