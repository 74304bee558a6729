"""Deterministic hash-based dataset partitioning.

Difficulty ranges gate first: an instance whose parameters fall only in
the OOD range can never reach train.  Where the train and ID ranges
overlap, a band of the 64-bit FNV-1a hash of the exact input string
decides membership, so the two sets are disjoint by construction.
"""

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

# Fraction of the overlapping train/ID difficulty region routed to train,
# in tenths of the hash band.
TRAIN_BANDS = 9


def fnv1a64(text):
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def splitmix64(x):
    """One splitmix step; derives per-worker seed streams."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def worker_seed(base_seed, worker_index):
    return splitmix64(base_seed + worker_index)


def hash_split(example, buckets):
    """Partition for one example: train, id_test, ood_test, or discard.

    ``buckets`` is a SplitRanges; the canonical hashed string is the
    exact input token string.  The band applies to every train/ID
    instance, not just those with overlapping difficulty labels: the
    same input string can be drawn under different labels, and only a
    string-keyed rule keeps the emitted sets disjoint.
    """
    in_ood = buckets.contains("ood_test", example.difficulty)
    in_train = buckets.contains("train", example.difficulty)
    in_id = buckets.contains("id_test", example.difficulty)
    if in_ood:
        # The range gate precedes hashing; OOD ranges never overlap train.
        return "ood_test" if not (in_train or in_id) else "discard"
    if not (in_train or in_id):
        return "discard"
    band = fnv1a64(example.input_text) % 10
    if band < TRAIN_BANDS:
        return "train" if in_train else "discard"
    return "id_test" if in_id else "discard"
