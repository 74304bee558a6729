"""Dataset files: one example per line, input TAB target, tokens
space-separated, UTF-8.  Space and newline characters inside tokens are
escaped so the line format stays unambiguous.  A JSON sidecar records
task, ranges, seed, counts, and the vocabulary.
"""

import json
import os

from ..errors import ParseError
from .base import Example

_ESCAPES = ((" ", "<sp>"), ("\n", "<nl>"), ("\t", "<tab>"))


def escape_token(token):
    """A token carrying a literal escape mark cannot be written without
    colliding with the escaped form, so it is rejected outright."""
    for _, mark in _ESCAPES:
        if mark in token:
            raise ParseError(f"token {token!r} collides with escape mark {mark}")
    for char, mark in _ESCAPES:
        token = token.replace(char, mark)
    return token


def unescape_token(token):
    for char, mark in reversed(_ESCAPES):
        token = token.replace(mark, char)
    return token


def _encode_side(target):
    if isinstance(target, (list, tuple)):
        return " ".join(escape_token(t) for t in target)
    return escape_token(str(target))


def write_dataset(path, examples, meta):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(_encode_side(ex.input_tokens))
            fh.write("\t")
            fh.write(_encode_side(ex.target))
            fh.write("\n")
    meta = dict(meta, count=len(examples))
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar_path(path):
    return os.fspath(path) + ".meta.json"


def read_meta(path):
    with open(sidecar_path(path), encoding="utf-8") as fh:
        return json.load(fh)


def read_dataset(path, classification=False):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{line_no}: expected input TAB target")
            input_tokens = [unescape_token(t) for t in parts[0].split(" ")]
            if classification:
                target = unescape_token(parts[1])
            else:
                target = [unescape_token(t) for t in parts[1].split(" ")]
            examples.append(Example(input_tokens=input_tokens, target=target))
    return examples
