"""Run configuration: task defaults, key-value config files, flag
overrides, and canonical serialization for hashing.

The config file format is one ``key = value`` pair per line; ``#``
starts a comment.  Flags override file values; the fully resolved
config is echoed into the run directory so every run is reproducible
from its artifacts.
"""

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .tasks import base
from .tasks.programs import PROGRAM_RANGES
from .tasks.sequences import SEQUENCE_RANGES, TOY_ADDITION_RANGES
from .tasks.wordmath import ADDSUB_RANGES

# Per-task defaults: head, grid, encoder, difficulty ranges, and the
# positional order of range parameters for the --split-ranges flag.
TASK_TABLE = {
    "sequence": dict(head="cnn", grid=(3, 25), enc_hidden=128, enc_layers=3,
                     ranges=SEQUENCE_RANGES, params=("length", "terms")),
    "toyadd": dict(head="cnn", grid=(3, 8), enc_hidden=128, enc_layers=3,
                   ranges=TOY_ADDITION_RANGES, params=("digits",)),
    "toyadd_grid": dict(head="grid", grid=(3, 8), enc_hidden=0, enc_layers=0,
                        ranges=TOY_ADDITION_RANGES, params=("digits",)),
    "addsub": dict(head="cnn", grid=(3, 25), enc_hidden=128, enc_layers=3,
                   ranges=ADDSUB_RANGES, params=("entropy",)),
    "program": dict(head="cnn", grid=(3, 25), enc_hidden=128, enc_layers=3,
                    ranges=PROGRAM_RANGES, params=("nesting", "length")),
    "babi": dict(head="textcnn", grid=(4, 8), enc_hidden=128, enc_layers=2,
                 ranges=None, params=()),
}

SEQUENCE_TASKS = ("sequence", "toyadd", "toyadd_grid", "addsub", "program")


@dataclass
class RunConfig:
    task: str = "toyadd"
    head: str = ""
    grid_height: int = 0
    grid_width: int = 0
    slot_dim: int = 64
    enc_hidden: int = 0
    enc_layers: int = 0
    steps: int = 30000
    batch: int = 64
    lr: float = 1e-3
    schedule: str = "constant"
    warmup: int = 4000
    clip_norm: float = 1.0
    seed: int = 0
    seeds: int = 1
    eval_every: int = 1000
    checkpoint_every: int = 0
    patience: int = 0
    train_count: int = 50000
    id_count: int = 2000
    ood_count: int = 2000
    split_ranges: str = ""
    out: str = ""
    data: str = ""

    def resolved(self):
        """Fill zero/empty fields from the task table and validate."""
        if self.task not in TASK_TABLE:
            raise ConfigError(f"unknown task {self.task!r}; "
                              f"choose from {sorted(TASK_TABLE)}")
        row = TASK_TABLE[self.task]
        merged = dataclasses.replace(
            self,
            head=self.head or row["head"],
            grid_height=self.grid_height or row["grid"][0],
            grid_width=self.grid_width or row["grid"][1],
            enc_hidden=self.enc_hidden or row["enc_hidden"],
            enc_layers=self.enc_layers or row["enc_layers"],
        )
        merged.validate()
        return merged

    def validate(self):
        if self.grid_height < 1 or self.grid_width < 1 or self.slot_dim < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.task in SEQUENCE_TASKS and self.head not in ("cnn", "grid"):
            raise ConfigError(f"task {self.task} needs the cnn or grid head")
        if self.task == "toyadd_grid" and self.head != "grid":
            raise ConfigError("toyadd_grid uses the encoder-free grid head")
        if self.task == "babi" and self.head != "textcnn":
            raise ConfigError("babi needs the textcnn head")
        if self.batch < 1 or self.steps < 0 or self.seeds < 1:
            raise ConfigError("steps/batch/seeds out of range")
        self.ranges()  # raises on inverted ranges

    def ranges(self):
        """SplitRanges: task defaults, or the --split-ranges override
        (format: train=1:4,4:6 id=4:4,4:6 ood=6:6,10:12 with one lo:hi
        per task parameter, in the task's parameter order)."""
        row = TASK_TABLE[self.task]
        if not self.split_ranges:
            return row["ranges"]
        parts = {}
        for chunk in self.split_ranges.split():
            name, _, spec = chunk.partition("=")
            key = {"train": "train", "id": "id_test", "ood": "ood_test"}.get(name)
            if key is None or not spec:
                raise ConfigError(f"bad --split-ranges chunk {chunk!r}")
            pairs = spec.split(",")
            if len(pairs) != len(row["params"]):
                raise ConfigError(
                    f"{self.task} ranges need {len(row['params'])} lo:hi pairs "
                    f"({', '.join(row['params'])}), got {chunk!r}"
                )
            bounds = {}
            for param, pair in zip(row["params"], pairs):
                lo, _, hi = pair.partition(":")
                try:
                    lo, hi = int(lo), int(hi)
                except ValueError:
                    raise ConfigError(f"bad range pair {pair!r} in {chunk!r}")
                if lo > hi:
                    raise ConfigError(f"inverted range {pair!r} in {chunk!r}")
                bounds[param] = (lo, hi)
            parts[key] = bounds
        base_ranges = row["ranges"]
        return base.SplitRanges(
            train=parts.get("train", base_ranges.train),
            id_test=parts.get("id_test", base_ranges.id_test),
            ood_test=parts.get("ood_test", base_ranges.ood_test),
        )

    def canonical_text(self):
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def identity_text(self):
        """Fields that pin a training trajectory.  Volatile knobs (step
        budget, eval cadence, paths) may change across resumes."""
        return "\n".join(
            f"{name} = {getattr(self, name)}" for name in _IDENTITY_FIELDS
        ) + "\n"


_IDENTITY_FIELDS = (
    "task", "head", "grid_height", "grid_width", "slot_dim",
    "enc_hidden", "enc_layers", "batch", "lr", "schedule", "warmup",
    "clip_norm", "seed",
)


def parse_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            values[key.strip()] = value.strip()
    return values


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def apply_overrides(cfg, values):
    """Returns a new RunConfig with string values coerced onto fields."""
    updates = {}
    for key, value in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind in ("int", int):
                updates[key] = int(value)
            elif kind in ("float", float):
                updates[key] = float(value)
            else:
                updates[key] = str(value)
        except ValueError:
            raise ConfigError(f"config key {key}: cannot parse {value!r}")
    return dataclasses.replace(cfg, **updates)
