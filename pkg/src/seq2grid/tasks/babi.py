"""Word-level bAbI ingestion.

Reads the upstream numbered-line text files.  Each question line (tab
separated: question, answer, supporting fact ids) yields one example
whose input is <cls> + question words + <sep> + all story words seen so
far in the current story.  Statement numbering restarting at 1 clears
the story buffer.  Text is lowercased and punctuation split off.
"""

import os
import re

from ..errors import ParseError
from .base import Example
from .vocab import CLS_TOKEN, SEP_TOKEN

_WORD = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")
_FILE = re.compile(r"qa(\d+)_.*_(train|valid|test)\.txt$")

N_TASKS = 20


def word_tokens(text):
    return _WORD.findall(text.lower())


def parse_babi_file(path, task_id):
    examples = []
    story = []
    last_no = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            head, _, rest = raw.partition(" ")
            try:
                number = int(head)
            except ValueError:
                raise ParseError(f"{path}:{line_no}: line does not start with a number")
            if number <= last_no or number == 1:
                story = []
            last_no = number
            if "\t" in rest:
                parts = rest.split("\t")
                if len(parts) < 2:
                    raise ParseError(f"{path}:{line_no}: malformed question line")
                question, answer = parts[0], parts[1]
                tokens = [CLS_TOKEN] + word_tokens(question) + [SEP_TOKEN] + list(story)
                examples.append(Example(
                    input_tokens=tokens,
                    target=answer.strip().lower(),
                    difficulty={"task": task_id},
                ))
            else:
                story.extend(word_tokens(rest))
    return examples


def load_babi(directory, split):
    """All 20 tasks of one split, concatenated (joint training mode)."""
    found = {}
    for name in sorted(os.listdir(directory)):
        m = _FILE.match(name)
        if m and m.group(2) == split:
            found[int(m.group(1))] = os.path.join(directory, name)
    if len(found) != N_TASKS:
        raise ParseError(
            f"{directory}: expected {N_TASKS} bAbI {split} files, found {len(found)}"
        )
    examples = []
    for task_id in sorted(found):
        examples.extend(parse_babi_file(found[task_id], task_id))
    return examples
