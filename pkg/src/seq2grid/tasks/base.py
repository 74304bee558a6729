"""Shared task types: examples and difficulty-range bookkeeping."""

from dataclasses import dataclass, field

from ..errors import ConfigError


@dataclass
class Example:
    """One task instance.

    ``input_tokens`` ends with the $ token.  ``target`` is a token list
    ending in $ for sequence tasks, or a label string for
    classification.  ``difficulty`` records the task-specific parameters
    the splits are defined over.
    """

    input_tokens: list
    target: object
    difficulty: dict = field(default_factory=dict)

    @property
    def input_text(self):
        return "".join(self.input_tokens)


@dataclass(frozen=True)
class SplitRanges:
    """Inclusive difficulty ranges per split, keyed by parameter name."""

    train: dict
    id_test: dict
    ood_test: dict

    def ranges(self, split):
        try:
            return {"train": self.train, "id_test": self.id_test,
                    "ood_test": self.ood_test}[split]
        except KeyError:
            raise ConfigError(f"unknown split {split!r}")

    def contains(self, split, difficulty):
        for key, (lo, hi) in self.ranges(split).items():
            if lo > hi:
                raise ConfigError(f"inverted range for {key}: ({lo}, {hi})")
            value = difficulty.get(key)
            if value is None or not lo <= value <= hi:
                return False
        return True


def sample_for_split(draw, split, ranges, rng, max_tries=100000):
    """Draw with the split's own bounds until hash_split agrees.

    ``draw(rng, bounds)`` returns a candidate Example; rejection keeps
    the emitted sets disjoint without any cross-set bookkeeping.
    """
    from .splits import hash_split

    bounds = ranges.ranges(split)
    for _ in range(max_tries):
        example = draw(rng, bounds)
        if hash_split(example, ranges) == split:
            return example
    raise ConfigError(f"could not sample an example for split {split!r}")


def generate_split(draw, split, ranges, rng, count):
    return [sample_for_split(draw, split, ranges, rng) for _ in range(count)]
