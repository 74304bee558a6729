"""Add-or-sub word problems: integer arithmetic under a fixed set of
English phrasings.  Difficulty (entropy) is the total count of digits
in the input; signs do not count.  OOD instances additionally require
every integer to be longer than 16 digits.
"""

import re

from ..errors import ParameterError
from .base import Example, SplitRanges, generate_split
from .vocab import EOS_TOKEN, char_tokens

ADDSUB_RANGES = SplitRanges(
    train={"entropy": (16, 20)},
    id_test={"entropy": (16, 20)},
    ood_test={"entropy": (32, 40)},
)

# (template, operation); B-first templates still compute A op B.
TEMPLATES = (
    ("What is {a} take away {b}?", "sub"),
    ("Add {a} and {b}.", "add"),
    ("What is {a} plus {b}?", "add"),
    ("Subtract {b} from {a}.", "sub"),
    ("Sum of {a} and {b}?", "add"),
    ("{a} minus {b}?", "sub"),
    ("What is {a} - {b}?", "sub"),
    ("What is {a} + {b}?", "add"),
)

TRAIN_MAX_DIGITS = 16  # OOD requires strictly longer integers
OOD_MIN_DIGITS = TRAIN_MAX_DIGITS + 1


def _int_with_digits(rng, digits):
    lo = 0 if digits == 1 else 10 ** (digits - 1)
    value = rng.randrange(lo, 10 ** digits)
    return -value if rng.random() < 0.5 else value


def _draw_addsub(rng, bounds):
    lo_e, hi_e = bounds["entropy"]
    ood = lo_e > TRAIN_MAX_DIGITS  # entropy ranges above 16+16 mark the OOD regime
    min_d = OOD_MIN_DIGITS if ood else 1
    max_d = hi_e if ood else TRAIN_MAX_DIGITS
    while True:
        entropy = rng.randint(lo_e, hi_e)
        d_lo = max(min_d, entropy - max_d)
        d_hi = min(max_d, entropy - min_d)
        if d_lo <= d_hi:
            break
    d_a = rng.randint(d_lo, d_hi)
    a = _int_with_digits(rng, d_a)
    b = _int_with_digits(rng, entropy - d_a)
    template, op = TEMPLATES[rng.randrange(len(TEMPLATES))]
    text = template.format(a=a, b=b) + EOS_TOKEN
    result = a + b if op == "add" else a - b
    return Example(
        input_tokens=char_tokens(text),
        target=char_tokens(str(result) + EOS_TOKEN),
        difficulty={"entropy": entropy},
    )


def generate_addsub(split, rng, count, ranges=ADDSUB_RANGES):
    return generate_split(_draw_addsub, split, ranges, rng, count)


def addsub_oracle(input_text):
    """Recompute the answer from the question string alone."""
    body = input_text[:-1] if input_text.endswith(EOS_TOKEN) else input_text
    ints = [int(t) for t in re.findall(r"-?\d+", body)]
    if len(ints) != 2:
        raise ParameterError(f"expected two integers in {body!r}")
    if body.startswith("Subtract"):
        return str(ints[1] - ints[0]) + EOS_TOKEN
    if "take away" in body or "minus" in body or " - " in body:
        return str(ints[0] - ints[1]) + EOS_TOKEN
    if "plus" in body or " + " in body or body.startswith(("Add", "Sum")):
        return str(ints[0] + ints[1]) + EOS_TOKEN
    raise ParameterError(f"unrecognized phrasing: {body!r}")
