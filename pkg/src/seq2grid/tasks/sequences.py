"""Number sequence prediction and the toy decimal addition task.

Both are character-level: inputs and targets are strings of digits,
signs, operators, and spaces, closed by $.
"""

from ..errors import ParameterError
from .base import Example, SplitRanges, generate_split
from .vocab import EOS_TOKEN, NULL_TOKEN, char_tokens

# ---- number sequence prediction ---------------------------------------------
# a_n = 2*a_{n-1} - a_{n-2} + a_{n-3}; the input lists a_0 .. a_{n-1}
# space-separated, the target is a_n.  Difficulty: (length, terms) =
# (max digits of the initial terms, count of input terms).

SEQUENCE_RANGES = SplitRanges(
    train={"length": (1, 4), "terms": (4, 6)},
    id_test={"length": (4, 4), "terms": (4, 6)},
    ood_test={"length": (6, 6), "terms": (10, 12)},
)


def _recurse(a, b, c):
    # args ordered a_{n-3}, a_{n-2}, a_{n-1}
    return 2 * c - b + a


def _draw_sequence(rng, bounds):
    length = rng.randint(*bounds["length"])
    terms = rng.randint(*bounds["terms"])
    values = []
    for _ in range(3):
        v = rng.randrange(10 ** length)
        if rng.random() < 0.5:
            v = -v
        values.append(v)
    while len(values) < terms:
        values.append(_recurse(*values[-3:]))
    target = _recurse(*values[-3:])
    text = " ".join(str(v) for v in values) + EOS_TOKEN
    return Example(
        input_tokens=char_tokens(text),
        target=char_tokens(str(target) + EOS_TOKEN),
        difficulty={"length": length, "terms": terms},
    )


def generate_sequences(split, rng, count, ranges=SEQUENCE_RANGES):
    return generate_split(_draw_sequence, split, ranges, rng, count)


def sequence_oracle(input_text):
    """Recompute the target from the input string alone: apply one
    recursion step to the last three listed terms."""
    body = input_text[:-1] if input_text.endswith(EOS_TOKEN) else input_text
    terms = [int(t) for t in body.split(" ") if t]
    if len(terms) < 3:
        raise ParameterError("sequence oracle needs at least three terms")
    return str(_recurse(*terms[-3:])) + EOS_TOKEN


# ---- toy decimal addition ----------------------------------------------------
# Sequential layout: "A+B$" -> "A+B summed"$.  Aligned layout: the same
# pair written into a 3 x W token grid, operands flipped so that the
# ones digits share the leftmost column, third row left empty; the $
# token closes the flattened row-major cell list.

TOY_ADDITION_RANGES = SplitRanges(
    train={"digits": (1, 3)},
    id_test={"digits": (1, 3)},
    ood_test={"digits": (4, 5)},
)

SEQUENTIAL, ALIGNED_GRID = "sequential", "aligned_grid"
ALIGNED_HEIGHT = 3


def _operand_pair(rng, bounds):
    k = rng.randint(*bounds["digits"])
    a = rng.randrange(10 ** k)
    b = rng.randrange(10 ** k)
    digits = max(len(str(a)), len(str(b)))
    return a, b, digits


def _draw_toy_sequential(rng, bounds):
    a, b, digits = _operand_pair(rng, bounds)
    text = f"{a}+{b}" + EOS_TOKEN
    return Example(
        input_tokens=char_tokens(text),
        target=char_tokens(str(a + b) + EOS_TOKEN),
        difficulty={"digits": digits},
    )


def aligned_cells(a, b, width):
    """Row-major 3 x width cell tokens for the aligned layout; place
    value i of each operand sits in column i."""
    rows = []
    for operand in (a, b):
        flipped = list(reversed(str(operand)))
        if len(flipped) > width:
            raise ParameterError(f"operand {operand} wider than grid width {width}")
        rows.append(flipped + [NULL_TOKEN] * (width - len(flipped)))
    rows.append([NULL_TOKEN] * width)
    return [cell for row in rows for cell in row]


def _draw_toy_aligned(width):
    def draw(rng, bounds):
        a, b, digits = _operand_pair(rng, bounds)
        return Example(
            input_tokens=aligned_cells(a, b, width),
            target=char_tokens(str(a + b) + EOS_TOKEN),
            difficulty={"digits": digits},
        )

    return draw


def generate_toy_addition(split, rng, count, layout=SEQUENTIAL, width=8,
                          ranges=TOY_ADDITION_RANGES):
    if layout == SEQUENTIAL:
        draw = _draw_toy_sequential
    elif layout == ALIGNED_GRID:
        draw = _draw_toy_aligned(width)
    else:
        raise ParameterError(f"unknown toy addition layout {layout!r}")
    return generate_split(draw, split, ranges, rng, count)


def toy_addition_oracle(input_text):
    """Big-integer sum recomputed from the sequential input string."""
    body = input_text[:-1] if input_text.endswith(EOS_TOKEN) else input_text
    left, right = body.split("+")
    return str(int(left) + int(right)) + EOS_TOKEN


def aligned_oracle(input_text, width):
    """Big-integer sum recomputed from row-major aligned cells."""
    if len(input_text) != ALIGNED_HEIGHT * width:
        raise ParameterError(
            f"aligned input has {len(input_text)} cells, "
            f"expected {ALIGNED_HEIGHT} x {width}"
        )
    operands = []
    for row in range(2):
        cells = input_text[row * width:(row + 1) * width]
        digits = cells.rstrip(NULL_TOKEN)[::-1]
        operands.append(int(digits))
    return str(sum(operands)) + EOS_TOKEN
