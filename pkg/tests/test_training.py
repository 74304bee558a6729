"""Optimizer, schedule, batching, evaluation accounting, and train_loop
behavior."""

import math
import random
import re

import numpy as np
import pytest

from seq2grid import autodiff as ad
from seq2grid import decoders, models, training
from seq2grid.errors import NumericError, ParameterError, StateError
from seq2grid.tasks import build_vocab
from seq2grid.tasks.sequences import generate_toy_addition
from seq2grid.tasks.vocab import PAD_ID


def reference_adam(data, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam with explicit bias-corrected moment estimates,
    written independently of the package implementation."""
    m = [np.zeros_like(d) for d in data]
    v = [np.zeros_like(d) for d in data]
    out = [d.copy() for d in data]
    for t, step_grads in enumerate(grads, start=1):
        for i, g in enumerate(step_grads):
            m[i] = beta1 * m[i] + (1 - beta1) * g
            v[i] = beta2 * v[i] + (1 - beta2) * g ** 2
            m_hat = m[i] / (1 - beta1 ** t)
            v_hat = v[i] / (1 - beta2 ** t)
            out[i] = out[i] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def test_adam_matches_reference(rng):
    shapes = [(3, 4), (5,), (2, 2, 2)]
    data = [rng.normal(size=s) for s in shapes]
    grads = [[rng.normal(size=s) for s in shapes] for _ in range(7)]

    params = {f"p{i}": ad.Tensor(d.copy()) for i, d in enumerate(data)}
    state = training.init_adam(params, lr=1e-2)
    for step_grads in grads:
        for i, g in enumerate(step_grads):
            params[f"p{i}"].grad = g.copy()
        training.adam_step(params, state)

    expected = reference_adam(data, grads, lr=1e-2)
    for i, want in enumerate(expected):
        np.testing.assert_allclose(params[f"p{i}"].data, want,
                                   rtol=0, atol=1e-12)
    assert state.step_count == 7


def test_adam_rejects_missing_gradient():
    params = {"w": ad.Tensor(np.ones(3))}
    state = training.init_adam(params, lr=1e-3)
    with pytest.raises(StateError):
        training.adam_step(params, state)


def test_adam_lr_override(rng):
    data = rng.normal(size=(4,))
    g = rng.normal(size=(4,))
    params = {"w": ad.Tensor(data.copy())}
    state = training.init_adam(params, lr=1e-3)
    params["w"].grad = g.copy()
    training.adam_step(params, state, lr=5e-2)
    (want,) = reference_adam([data], [[g]], lr=5e-2)
    np.testing.assert_allclose(params["w"].data, want, rtol=0, atol=1e-12)


def test_lr_schedule_constant():
    for step in (1, 10, 10 ** 6):
        assert training.lr_schedule(step, "constant", 3e-4) == 3e-4


def test_lr_schedule_warmup_peak_and_decay():
    base, warmup = 1e-3, 400
    # at step == warmup both the ramp and the decay factor equal 1
    assert training.lr_schedule(warmup, "warmup_decay", base, warmup) == base
    # at step == 4*warmup the decay factor is sqrt(1/4)
    assert math.isclose(
        training.lr_schedule(4 * warmup, "warmup_decay", base, warmup),
        base / 2, rel_tol=1e-12)
    # linear ramp below the warmup point
    assert math.isclose(
        training.lr_schedule(100, "warmup_decay", base, warmup),
        base * 100 / warmup, rel_tol=1e-12)
    ramp = [training.lr_schedule(s, "warmup_decay", base, warmup)
            for s in range(1, warmup + 1)]
    assert all(a < b for a, b in zip(ramp, ramp[1:]))


def test_lr_schedule_rejects_bad_input():
    with pytest.raises(ParameterError):
        training.lr_schedule(0, "constant", 1e-3)
    with pytest.raises(ParameterError):
        training.lr_schedule(10, "cosine", 1e-3)


def test_clip_global_norm_scales_to_bound(rng):
    params = {name: ad.Tensor(rng.normal(size=(4, 4)))
              for name in ("a", "b", "c")}
    for p in params.values():
        p.grad = rng.normal(size=(4, 4)) * 10.0
    before = math.sqrt(sum(float((p.grad ** 2).sum())
                           for p in params.values()))
    returned = training.clip_global_norm(params, 1.0)
    after = math.sqrt(sum(float((p.grad ** 2).sum())
                          for p in params.values()))
    assert math.isclose(returned, before, rel_tol=1e-12)
    assert math.isclose(after, 1.0, rel_tol=1e-9)


def test_clip_global_norm_leaves_small_gradients(rng):
    params = {"w": ad.Tensor(np.zeros(3))}
    params["w"].grad = np.full(3, 1e-3)
    kept = params["w"].grad.copy()
    training.clip_global_norm(params, 1.0)
    np.testing.assert_array_equal(params["w"].grad, kept)


def test_clip_global_norm_zero_disables(rng):
    params = {"w": ad.Tensor(np.zeros(3))}
    params["w"].grad = np.full(3, 100.0)
    kept = params["w"].grad.copy()
    training.clip_global_norm(params, 0.0)
    np.testing.assert_array_equal(params["w"].grad, kept)


def test_apply_frozen_rows():
    params = {"emb": ad.Tensor(np.zeros((4, 3)))}
    params["emb"].grad = np.ones((4, 3))
    training.apply_frozen_rows(params, {"emb": (1, 3)})
    assert params["emb"].grad[1].sum() == 0.0
    assert params["emb"].grad[3].sum() == 0.0
    assert params["emb"].grad[0].sum() == 3.0


def test_pad_batch():
    out = training.pad_batch([[7, 8], [5], [9, 9, 9]])
    assert out.shape == (3, 3)
    assert out.dtype == np.intp
    np.testing.assert_array_equal(
        out, [[7, 8, PAD_ID], [5, PAD_ID, PAD_ID], [9, 9, 9]])


def test_batch_indices_covers_every_index():
    rng = np.random.default_rng(3)
    stream = training.batch_indices(12, 4, rng)
    epoch = np.concatenate([next(stream) for _ in range(3)])
    assert sorted(epoch) == list(range(12))
    epoch2 = np.concatenate([next(stream) for _ in range(3)])
    assert sorted(epoch2) == list(range(12))
    assert not np.array_equal(epoch, epoch2)  # reshuffled


def test_batch_indices_clamps_to_population():
    stream = training.batch_indices(3, 64, np.random.default_rng(0))
    assert len(next(stream)) == 3


def test_batch_indices_deterministic():
    a = training.batch_indices(20, 5, np.random.default_rng(9))
    b = training.batch_indices(20, 5, np.random.default_rng(9))
    for _ in range(8):
        np.testing.assert_array_equal(next(a), next(b))


# ---- tiny model fixtures -------------------------------------------------


def tiny_sequence_setup(seed=0, count=16):
    examples = generate_toy_addition(
        "train", random.Random(seed), count)
    vocab = build_vocab(examples)
    cfg = models.ModelConfig(
        head=models.SEQUENCE_HEAD, vocab_size=len(vocab),
        grid_height=2, grid_width=5, slot_dim=8, enc_hidden=8,
        enc_layers=1, cnn_stacks=1, cnn_bottleneck=4, cnn_expanded=8)
    params = models.init_params(np.random.default_rng(seed), cfg)
    inputs = [vocab.encode(e.input_tokens) for e in examples]
    targets = np.stack([decoders.prepare_target(e.target, cfg.grid_width, vocab)
                        for e in examples])
    return vocab, cfg, params, inputs, targets


def test_sequence_loss_padding_invariant():
    vocab, cfg, params, inputs, targets = tiny_sequence_setup()
    ids = np.asarray([inputs[0]], dtype=np.intp)
    padded = np.full((1, ids.shape[1] + 6), PAD_ID, dtype=np.intp)
    padded[0, :ids.shape[1]] = ids[0]
    a = models.sequence_loss(params, cfg, ids, targets[:1]).item()
    b = models.sequence_loss(params, cfg, padded, targets[:1]).item()
    assert abs(a - b) <= 1e-12


def test_sequence_loss_is_mean_over_instances():
    vocab, cfg, params, inputs, targets = tiny_sequence_setup()
    ids = training.pad_batch(inputs[:2])
    joint = models.sequence_loss(params, cfg, ids, targets[:2]).item()
    singles = [
        models.sequence_loss(params, cfg, ids[i:i + 1], targets[i:i + 1]).item()
        for i in range(2)
    ]
    assert abs(joint - sum(singles) / 2) <= 1e-12


def test_evaluation_leaves_parameters_untouched():
    vocab, cfg, params, inputs, targets = tiny_sequence_setup()
    encoded = [(ids, "12$") for ids in inputs[:6]]
    before = training.params_checksum(params)
    training.zero_grads(params)
    training.evaluate_sequences(params, cfg, encoded, vocab)
    assert training.params_checksum(params) == before
    assert all(p.grad is None for p in params.values())


def test_train_loop_overfits_tiny_set():
    vocab, cfg, params, inputs, targets = tiny_sequence_setup(count=8)
    loss_fn = training.make_sequence_loss(params, cfg, inputs, targets, 8)
    settings = training.TrainSettings(steps=300, batch_size=8, lr=3e-3,
                                      seed=0, eval_every=0)
    history, _ = training.train_loop(
        params, settings, loss_fn, frozen=models.frozen_embedding_rows(cfg))
    first = history[0][1]
    last = min(value for _, value in history[-20:])
    assert last < 0.2 * first


def test_train_loop_keeps_null_embedding_zero():
    vocab, cfg, params, inputs, targets = tiny_sequence_setup(count=8)
    loss_fn = training.make_sequence_loss(params, cfg, inputs, targets, 4)
    settings = training.TrainSettings(steps=30, batch_size=4, lr=1e-2,
                                      seed=0, eval_every=0)
    training.train_loop(params, settings, loss_fn,
                        frozen=models.frozen_embedding_rows(cfg))
    null_row = params[models.EMBED_KEY].data[vocab.null_id]
    np.testing.assert_array_equal(null_row, np.zeros_like(null_row))


def test_train_loop_raises_on_divergence():
    params = {"w": ad.Tensor(np.ones(2), requires_grad=True)}
    calls = {"n": 0}

    def loss_fn(rng):
        calls["n"] += 1
        if calls["n"] >= 3:
            return ad.Tensor(np.float64("nan"))
        return (params["w"] * params["w"]).sum()

    settings = training.TrainSettings(steps=10, eval_every=0)
    with pytest.raises(NumericError, match="diverged"):
        training.train_loop(params, settings, loss_fn)
    assert calls["n"] == 3


def test_train_loop_stop_fn_exits_early():
    params = {"w": ad.Tensor(np.ones(2), requires_grad=True)}
    loss_fn = lambda rng: (params["w"] * params["w"]).sum()
    settings = training.TrainSettings(steps=100, eval_every=5)
    eval_fn = lambda: [training.EvalReport(mode="sequence", accuracy=0.9)]
    history, reports = training.train_loop(
        params, settings, loss_fn, eval_fn=eval_fn,
        stop_fn=lambda reports: reports[0].accuracy > 0.5)
    assert history[-1][0] == 5
    assert reports[0].accuracy == 0.9


def test_train_loop_patience_stops_without_improvement():
    params = {"w": ad.Tensor(np.ones(2), requires_grad=True)}
    loss_fn = lambda rng: (params["w"] * params["w"]).sum()
    scores = iter([0.9, 0.5, 0.4, 0.3, 0.2])
    eval_fn = lambda: [training.EvalReport(mode="sequence",
                                           accuracy=next(scores))]
    settings = training.TrainSettings(steps=100, eval_every=5, patience=2)
    history, _ = training.train_loop(params, settings, loss_fn,
                                     eval_fn=eval_fn)
    assert history[-1][0] == 15  # best at eval 1, two flat evals after


def test_train_loop_checkpoint_cadence():
    params = {"w": ad.Tensor(np.ones(2), requires_grad=True)}
    loss_fn = lambda rng: (params["w"] * params["w"]).sum()
    steps_seen = []
    settings = training.TrainSettings(steps=10, eval_every=0,
                                      checkpoint_every=4)
    training.train_loop(params, settings, loss_fn,
                        checkpoint_fn=steps_seen.append)
    assert steps_seen == [4, 8]


def test_train_loop_resume_continues_step_numbers():
    params = {"w": ad.Tensor(np.ones(2), requires_grad=True)}
    loss_fn = lambda rng: (params["w"] * params["w"]).sum()
    adam = training.init_adam(params, lr=1e-3)
    adam.step_count = 5
    settings = training.TrainSettings(steps=9, eval_every=0)
    history, _ = training.train_loop(params, settings, loss_fn,
                                     adam=adam, start_step=5)
    assert [step for step, _ in history] == [6, 7, 8, 9]
    assert adam.step_count == 9


LOG_STEP = re.compile(r"^step=\d+ lr=[0-9.e+-]+ loss=-?[0-9.e+-]+$")
LOG_EVAL = re.compile(
    r"^eval step=\d+ split=\S+ mode=\w+ accuracy=[0-9.]+ n=\d+$")


def run_logged(seed):
    vocab, cfg, params, inputs, targets = tiny_sequence_setup(count=8)
    loss_fn = training.make_sequence_loss(params, cfg, inputs, targets, 4)
    encoded = [(ids, "3$") for ids in inputs[:4]]
    eval_fn = lambda: [training.evaluate_sequences(params, cfg, encoded,
                                                   vocab, split="id_test")]
    lines = []
    settings = training.TrainSettings(steps=10, batch_size=4, lr=1e-3,
                                      seed=seed, eval_every=5)
    training.train_loop(params, settings, loss_fn, eval_fn=eval_fn,
                        log=lines.append)
    return lines


def test_train_loop_log_format():
    lines = run_logged(seed=0)
    step_lines = [l for l in lines if not l.startswith("eval")]
    eval_lines = [l for l in lines if l.startswith("eval")]
    assert len(step_lines) == 10 and len(eval_lines) == 2
    assert all(LOG_STEP.match(l) for l in step_lines)
    assert all(LOG_EVAL.match(l) for l in eval_lines)


def test_train_loop_logs_are_deterministic():
    assert run_logged(seed=7) == run_logged(seed=7)


def test_train_loop_logs_differ_across_seeds():
    assert run_logged(seed=0) != run_logged(seed=1)


# ---- evaluation accounting ------------------------------------------------


def test_evaluate_sequences_accounting(monkeypatch):
    vocab, cfg, params, inputs, _ = tiny_sequence_setup()
    encoded = [(inputs[i], f"t{i}") for i in range(6)]

    def fake_predict(params, cfg, ids, vocab):
        # first instance of every chunk answers correctly
        return [f"t{0}" if i == 0 else "wrong" for i in range(len(ids))]

    monkeypatch.setattr(models, "predict_sequences", fake_predict)
    report = training.evaluate_sequences(params, cfg, encoded, vocab,
                                         split="id_test", batch_size=6)
    assert report.mode == "sequence"
    assert report.split == "id_test"
    assert report.n == 6
    assert math.isclose(report.accuracy, 1 / 6)
    assert math.isclose(report.error, 5 / 6)


def test_evaluate_sequences_program_buckets(monkeypatch):
    vocab, cfg, params, inputs, _ = tiny_sequence_setup()
    texts = ["if a>0: b=1", "for i in c: d=d*2", "e=f+g"]
    encoded = [(inputs[0], "x$"), (inputs[1], "y$"), (inputs[2], "z$")]

    def fake_predict(params, cfg, ids, vocab):
        return ["x$", "wrong", "z$"]

    monkeypatch.setattr(models, "predict_sequences", fake_predict)
    report = training.evaluate_sequences(params, cfg, encoded, vocab,
                                         batch_size=8, bucket_texts=texts)
    assert report.per_bucket["if-else"] == (1.0, 1)
    assert report.per_bucket["for"] == (0.0, 1)
    assert report.per_bucket["*"] == (0.0, 1)


def test_program_buckets():
    assert training.program_buckets("if a>0: b=1") == ["if-else"]
    assert training.program_buckets("for i in r: x=x*3") == ["for", "*"]
    assert training.program_buckets("a=b+c") == []


def test_evaluate_classifier_failed_tasks(monkeypatch):
    vocab, cfg, params, inputs, _ = tiny_sequence_setup()
    encoded = [(inputs[0], 0)] * 10 + [(inputs[1], 1)] * 10
    task_ids = ["qa1"] * 10 + ["qa2"] * 10

    def fake_predict(params, cfg, ids):
        # qa1 batch answered perfectly, qa2 batch 60% correct
        return np.array([0] * 10 + [1] * 6 + [0] * 4)

    monkeypatch.setattr(models, "predict_labels", fake_predict)
    report = training.evaluate_classifier(params, cfg, encoded,
                                          split="ood_test", batch_size=20,
                                          task_ids=task_ids)
    assert report.mode == "classification"
    assert math.isclose(report.accuracy, 16 / 20)
    assert report.per_task["qa1"] == (0.0, 10)
    assert math.isclose(report.per_task["qa2"][0], 0.4)
    assert report.failed_tasks == 1
    assert any("failed_tasks=1" in line for line in report.lines())


def test_eval_report_lines_order():
    report = training.EvalReport(mode="sequence", split="ood_test",
                                 accuracy=0.5, n=4,
                                 per_bucket={"for": (0.25, 4)})
    lines = report.lines()
    assert lines[0] == "split=ood_test mode=sequence accuracy=0.500000 n=4"
    assert lines[1] == "  instruction=for accuracy=0.250000 n=4"
