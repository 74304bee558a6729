"""Vocabulary with fixed reserved slots and first-appearance ordering."""

from ..errors import ParameterError, TokenizationError

PAD_TOKEN = "<pad>"
NULL_TOKEN = "∅"  # the empty symbol
EOS_TOKEN = "$"
CLS_TOKEN = "<cls>"
SEP_TOKEN = "<sep>"
RESERVED = (PAD_TOKEN, NULL_TOKEN, EOS_TOKEN, CLS_TOKEN, SEP_TOKEN)

PAD_ID, NULL_ID, EOS_ID, CLS_ID, SEP_ID = range(5)


class Vocabulary:
    """Token <-> id mapping; ids 0..4 are reserved in a fixed order."""

    pad_id = PAD_ID
    null_id = NULL_ID
    eos_id = EOS_ID
    cls_id = CLS_ID
    sep_id = SEP_ID
    eos_token = EOS_TOKEN

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:5]) != RESERVED:
            raise ParameterError("vocabulary must begin with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ParameterError("vocabulary has duplicate tokens")
        self._tokens = tokens
        self._ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self._tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def id(self, token):
        try:
            return self._ids[token]
        except KeyError:
            raise TokenizationError(f"token {token!r} not in vocabulary")

    def token(self, idx):
        return self._tokens[idx]

    def encode(self, tokens):
        return [self.id(t) for t in tokens]

    def decode(self, ids):
        return [self._tokens[i] for i in ids]

    @property
    def tokens(self):
        return list(self._tokens)


def build_vocab(examples):
    """Reserved tokens first, then corpus tokens in first-appearance
    order, scanning each example's input and then its target."""
    ordered = list(RESERVED)
    seen = set(ordered)
    count = 0
    for ex in examples:
        count += 1
        streams = [ex.input_tokens]
        if isinstance(ex.target, (list, tuple)):
            streams.append(ex.target)
        else:
            streams.append([ex.target])
        for stream in streams:
            for tok in stream:
                if tok not in seen:
                    seen.add(tok)
                    ordered.append(tok)
    if count == 0:
        raise ParameterError("build_vocab: empty example list")
    return Vocabulary(ordered)


def char_tokens(text):
    """Character-level tokenization used by all arithmetic tasks."""
    return list(text)
