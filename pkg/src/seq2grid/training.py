"""Optimizer, schedules, batching, the training loop, and evaluation.

The metrics log is line-delimited plain text with no timestamps, so two
identically seeded runs produce byte-identical logs:

    step=120 lr=0.001 loss=1.52316...
    eval step=1000 split=id_test mode=sequence accuracy=0.815000 n=2000
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models
from .errors import NumericError, ParameterError, StateError
from .tasks.vocab import PAD_ID

WARMUP_DEFAULT = 4000


# ---- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params, state, lr=None):
    """Bias-corrected Adam update over every parameter's .grad."""
    lr = state.lr if lr is None else lr
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise StateError(f"adam_step: parameter {name} has no gradient")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def lr_schedule(step, scheme, base_lr, warmup=WARMUP_DEFAULT):
    """constant, or warm up linearly then decay as 1/sqrt(step)."""
    if step < 1:
        raise ParameterError("lr_schedule: step counts from 1")
    if scheme == "constant":
        return base_lr
    if scheme == "warmup_decay":
        return base_lr * min(step / warmup, math.sqrt(warmup / step))
    raise ParameterError(f"unknown schedule {scheme!r}")


def zero_grads(params):
    for p in params.values():
        p.grad = None


def apply_frozen_rows(params, frozen):
    for name, rows in frozen.items():
        g = params[name].grad
        if g is not None:
            for row in rows:
                g[row, :] = 0.0


def clip_global_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def params_checksum(params):
    return float(sum(np.abs(p.data).sum() for p in params.values()))


# ---- batching ----------------------------------------------------------------


def pad_batch(id_lists, pad_id=PAD_ID):
    """Stack variable-length id lists into a (B, T_max) array with
    trailing padding."""
    width = max(len(ids) for ids in id_lists)
    out = np.full((len(id_lists), width), pad_id, dtype=np.intp)
    for i, ids in enumerate(id_lists):
        out[i, : len(ids)] = ids
    return out


def batch_indices(n, batch_size, rng):
    """Endless shuffled mini-batch index stream; reshuffles per epoch."""
    batch_size = min(batch_size, n)
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def make_sequence_loss(params, cfg, input_ids, target_ids, batch_size):
    """Training closure for sequence models.  ``input_ids`` is a list of
    id lists, ``target_ids`` an (N, W) array of flipped-padded targets."""
    target_ids = np.asarray(target_ids, dtype=np.intp)
    stream = {}

    def loss_fn(rng):
        if "it" not in stream:
            stream["it"] = batch_indices(len(input_ids), batch_size, rng)
        idx = next(stream["it"])
        ids = pad_batch([input_ids[i] for i in idx])
        return models.sequence_loss(params, cfg, ids, target_ids[idx])

    return loss_fn


def make_classifier_loss(params, cfg, input_ids, labels, batch_size):
    labels = np.asarray(labels, dtype=np.intp)
    stream = {}

    def loss_fn(rng):
        if "it" not in stream:
            stream["it"] = batch_indices(len(input_ids), batch_size, rng)
        idx = next(stream["it"])
        ids = pad_batch([input_ids[i] for i in idx])
        return models.classifier_loss(params, cfg, ids, labels[idx],
                                      training=True, rng=rng)

    return loss_fn


# ---- evaluation --------------------------------------------------------------


@dataclass
class EvalReport:
    mode: str
    split: str = ""
    accuracy: float = 0.0
    n: int = 0
    per_bucket: dict = field(default_factory=dict)
    per_task: dict = field(default_factory=dict)
    failed_tasks: int = 0

    @property
    def error(self):
        return 1.0 - self.accuracy

    def lines(self):
        out = [f"split={self.split or '-'} mode={self.mode} "
               f"accuracy={self.accuracy:.6f} n={self.n}"]
        for name in sorted(self.per_bucket):
            acc, count = self.per_bucket[name]
            out.append(f"  instruction={name} accuracy={acc:.6f} n={count}")
        for task in sorted(self.per_task):
            err, count = self.per_task[task]
            out.append(f"  task={task} error={err * 100:.2f}% n={count}")
        if self.per_task:
            out.append(f"  failed_tasks={self.failed_tasks} (error > 5%)")
        return out


def program_buckets(input_text):
    """Instruction types present in a snippet; one snippet can count in
    several buckets."""
    buckets = []
    if "if" in input_text:
        buckets.append("if-else")
    if "for" in input_text:
        buckets.append("for")
    if "*" in input_text:
        buckets.append("*")
    return buckets


def evaluate_sequences(params, cfg, encoded, vocab, split="", batch_size=64,
                       bucket_texts=None):
    """Exact-match sequence accuracy; ``encoded`` is a list of
    (input_ids, target_string) pairs."""
    hits = 0
    bucket_hits = {}
    predictions = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        ids = pad_batch([ids for ids, _ in chunk])
        outputs = models.predict_sequences(params, cfg, ids, vocab)
        predictions.extend(outputs)
        for (_, target), got in zip(chunk, outputs):
            hits += got == target
    if bucket_texts is not None:
        for text, (_, target), got in zip(bucket_texts, encoded, predictions):
            for bucket in program_buckets(text):
                ok, count = bucket_hits.get(bucket, (0, 0))
                bucket_hits[bucket] = (ok + (got == target), count + 1)
    report = EvalReport(mode="sequence", split=split, n=len(encoded),
                        accuracy=hits / len(encoded) if encoded else 0.0)
    report.per_bucket = {
        name: (ok / count, count) for name, (ok, count) in bucket_hits.items()
    }
    return report


def evaluate_classifier(params, cfg, encoded, split="", batch_size=64,
                        task_ids=None):
    """Label accuracy plus per-task error rates and the count of tasks
    with error strictly above 5%."""
    hits = 0
    got_all = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        ids = pad_batch([ids for ids, _ in chunk])
        got = models.predict_labels(params, cfg, ids)
        got_all.extend(int(g) for g in got)
        for (_, label), g in zip(chunk, got):
            hits += int(g) == label
    report = EvalReport(mode="classification", split=split, n=len(encoded),
                        accuracy=hits / len(encoded) if encoded else 0.0)
    if task_ids is not None:
        per = {}
        for task, (_, label), g in zip(task_ids, encoded, got_all):
            ok, count = per.get(task, (0, 0))
            per[task] = (ok + (g == label), count + 1)
        report.per_task = {
            task: (1.0 - ok / count, count) for task, (ok, count) in per.items()
        }
        report.failed_tasks = sum(
            1 for err, _ in report.per_task.values() if err > 0.05
        )
    return report


# ---- training loop -----------------------------------------------------------


@dataclass
class TrainSettings:
    steps: int = 30000
    batch_size: int = 64
    lr: float = 1e-3
    schedule: str = "constant"
    warmup: int = WARMUP_DEFAULT
    clip_norm: float = 1.0
    seed: int = 0
    eval_every: int = 1000
    checkpoint_every: int = 0
    patience: int = 0  # 0 disables the patience counter


def train_loop(params, settings, loss_fn, *, frozen=None, eval_fn=None,
               stop_fn=None, log=None, checkpoint_fn=None, adam=None,
               start_step=0):
    """Generic loop: forward, backward, clip, Adam, periodic eval.

    ``loss_fn(batch_rng) -> Tensor`` owns batch assembly; ``eval_fn()``
    returns a list of EvalReport; ``stop_fn(reports) -> bool`` may end
    training early (the acceptance runs stop at their target);
    ``log(line)`` receives every metrics line.  Pass a restored ``adam``
    state and ``start_step`` to resume a run.  Non-finite loss aborts.
    Returns (history of (step, loss), last reports).
    """
    frozen = frozen or {}
    rng = np.random.default_rng(settings.seed)
    if adam is None:
        adam = init_adam(params, settings.lr)
    history = []
    reports = []
    best = -1.0
    since_best = 0
    for step in range(start_step + 1, settings.steps + 1):
        lr_now = lr_schedule(step, settings.schedule, settings.lr,
                             settings.warmup)
        zero_grads(params)
        loss = loss_fn(rng)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(
                f"training diverged: loss={value} at step {step} "
                f"(lr={lr_now:.3g}); lower the learning rate or enable clipping"
            )
        loss.backward()
        apply_frozen_rows(params, frozen)
        if settings.clip_norm:
            clip_global_norm(params, settings.clip_norm)
        adam_step(params, adam, lr_now)
        history.append((step, value))
        if log:
            log(f"step={step} lr={lr_now:.10g} loss={value:.12g}")
        if checkpoint_fn and settings.checkpoint_every and \
                step % settings.checkpoint_every == 0:
            checkpoint_fn(step)
        if eval_fn and settings.eval_every and step % settings.eval_every == 0:
            reports = eval_fn()
            if log:
                for report in reports:
                    log(f"eval step={step} " + " ".join(report.lines()[:1]))
            if stop_fn and stop_fn(reports):
                break
            if settings.patience and reports:
                score = reports[0].accuracy
                if score > best:
                    best, since_best = score, 0
                else:
                    since_best += 1
                    if since_best >= settings.patience:
                        break
    return history, reports
