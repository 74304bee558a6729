"""Command-line entry point.

Subcommands: generate (dataset files), train (checkpoint + metric
logs), eval (accuracy report), gradcheck (finite-difference table),
visualize (grid rendering for one input).  Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import dataclasses
import os
import random
import shutil
import statistics
import sys

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import decoders, gradcheck, models, training, visualize
from .errors import (CapacityError, ConfigError, DimensionError, NumericError,
                     ParameterError, ParseError, StateError,
                     TokenizationError)
from .grid import encode_sequence_to_grid
from .tasks import Vocabulary, build_vocab, char_tokens, worker_seed
from .tasks import dataio
from .tasks.babi import load_babi, word_tokens
from .tasks.programs import generate_programs, program_oracle
from .tasks.sequences import (ALIGNED_GRID, SEQUENTIAL, aligned_cells,
                              aligned_oracle, generate_sequences,
                              generate_toy_addition, sequence_oracle,
                              toy_addition_oracle)
from .tasks.wordmath import addsub_oracle, generate_addsub

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SPLIT_FILES = (("train", "train.txt"), ("id_test", "id_test.txt"),
               ("ood_test", "ood_test.txt"))
BABI_SOURCE_SPLITS = {"train": "train", "id_test": "valid", "ood_test": "test"}


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit status 2 by default; the
    documented contract reserves 2 for data errors, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- config plumbing ----------------------------------------------------------

_FLAG_KEYS = {
    "task": "task", "split_ranges": "split_ranges", "hidden": "enc_hidden",
    "layers": "enc_layers", "steps": "steps", "batch": "batch", "lr": "lr",
    "schedule": "schedule", "seed": "seed", "seeds": "seeds", "out": "out",
    "data": "data", "train_count": "train_count", "id_count": "id_count",
    "ood_count": "ood_count", "warmup": "warmup", "clip_norm": "clip_norm",
    "eval_every": "eval_every", "checkpoint_every": "checkpoint_every",
    "patience": "patience",
}


def _add_config_flags(sub):
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--task", choices=sorted(cfgmod.TASK_TABLE))
    sub.add_argument("--split-ranges", dest="split_ranges",
                     help="e.g. 'train=1:3,4:5 ood=4:4,6:7'")
    sub.add_argument("--grid", help="HxW, e.g. 3x25")
    sub.add_argument("--hidden", type=int, help="encoder hidden size")
    sub.add_argument("--layers", type=int, help="encoder layers")
    sub.add_argument("--steps", type=int)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--schedule", choices=("constant", "warmup_decay"))
    sub.add_argument("--warmup", type=int)
    sub.add_argument("--clip-norm", dest="clip_norm", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--seeds", type=int, help="number of seeds to run")
    sub.add_argument("--eval-every", dest="eval_every", type=int)
    sub.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    sub.add_argument("--patience", type=int)
    sub.add_argument("--train-count", dest="train_count", type=int)
    sub.add_argument("--id-count", dest="id_count", type=int)
    sub.add_argument("--ood-count", dest="ood_count", type=int)
    sub.add_argument("--out")
    sub.add_argument("--data", help="dataset directory (or source dir)")


def _config_from_args(args):
    cfg = cfgmod.RunConfig()
    if getattr(args, "config", None):
        cfg = cfgmod.apply_overrides(cfg, cfgmod.parse_config_file(args.config))
    overrides = {}
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    cfg = cfgmod.apply_overrides(cfg, overrides)
    if getattr(args, "grid", None):
        height, sep, width = args.grid.lower().partition("x")
        try:
            cfg = cfgmod.apply_overrides(
                cfg, {"grid_height": height, "grid_width": width})
        except ConfigError:
            raise ConfigError(f"--grid wants HxW, got {args.grid!r}")
        if not sep:
            raise ConfigError(f"--grid wants HxW, got {args.grid!r}")
    return cfg.resolved()


# ---- generate ------------------------------------------------------------------


def _draw_examples(cfg, split, count, seed_index):
    rng = random.Random(worker_seed(cfg.seed, seed_index))
    ranges = cfg.ranges()
    if cfg.task == "sequence":
        return generate_sequences(split, rng, count, ranges=ranges)
    if cfg.task == "toyadd":
        return generate_toy_addition(split, rng, count, layout=SEQUENTIAL,
                                     ranges=ranges)
    if cfg.task == "toyadd_grid":
        return generate_toy_addition(split, rng, count, layout=ALIGNED_GRID,
                                     width=cfg.grid_width, ranges=ranges)
    if cfg.task == "addsub":
        return generate_addsub(split, rng, count, ranges=ranges)
    if cfg.task == "program":
        return generate_programs(split, rng, count, width=cfg.grid_width,
                                 ranges=ranges)
    raise ConfigError(f"task {cfg.task} has no generator")


def cmd_generate(args):
    cfg = _config_from_args(args)
    if not cfg.out:
        raise ConfigError("generate needs --out")
    os.makedirs(cfg.out, exist_ok=True)
    paths = {split: os.path.join(cfg.out, name) for split, name in SPLIT_FILES}
    if not args.force:
        for path in paths.values():
            if os.path.exists(path):
                raise StateError(f"{path} exists; pass --force to overwrite")

    counts = {"train": cfg.train_count, "id_test": cfg.id_count,
              "ood_test": cfg.ood_count}
    per_split = {}
    if cfg.task == "babi":
        if not cfg.data:
            raise ConfigError("generate --task babi needs --data "
                              "(directory with the 20 qa*.txt files per split)")
        for split, source in BABI_SOURCE_SPLITS.items():
            per_split[split] = load_babi(cfg.data, source)
    else:
        for index, (split, _) in enumerate(SPLIT_FILES):
            per_split[split] = _draw_examples(cfg, split, counts[split], index)

    ordered = [ex for split, _ in SPLIT_FILES for ex in per_split[split]]
    vocab = build_vocab(ordered)
    labels = sorted({ex.target for ex in ordered}) \
        if cfg.task == "babi" else None
    ranges = cfg.ranges()
    for split, _ in SPLIT_FILES:
        meta = {
            "task": cfg.task,
            "split": split,
            "seed": cfg.seed,
            "vocab": vocab.tokens,
            "grid_height": cfg.grid_height,
            "grid_width": cfg.grid_width,
        }
        if ranges is not None:
            meta["ranges"] = getattr(ranges, split)
        if labels is not None:
            meta["labels"] = labels
            meta["task_ids"] = [ex.difficulty["task"]
                                for ex in per_split[split]]
        dataio.write_dataset(paths[split], per_split[split], meta)
        print(f"wrote {paths[split]} ({len(per_split[split])} examples)")
    return EXIT_OK


# ---- dataset loading for train/eval -------------------------------------------


class _LoadedSplit:
    """One dataset file encoded against a vocabulary."""

    def __init__(self, path, vocab, classification, labels=None,
                 task_ids=None):
        self.path = path
        examples = dataio.read_dataset(path, classification=classification)
        self.input_texts = ["".join(ex.input_tokens) for ex in examples]
        self.input_ids = [vocab.encode(ex.input_tokens) for ex in examples]
        if classification:
            index = {label: i for i, label in enumerate(labels)}
            self.targets = [index[ex.target] for ex in examples]
        else:
            self.targets = ["".join(ex.target) for ex in examples]
        self.target_tokens = [ex.target for ex in examples]
        self.task_ids = task_ids

    def __len__(self):
        return len(self.input_ids)

    @property
    def encoded(self):
        return list(zip(self.input_ids, self.targets))


def _load_split(path, vocab, classification):
    meta = dataio.read_meta(path) if os.path.exists(dataio.sidecar_path(path)) \
        else {}
    return _LoadedSplit(path, vocab, classification,
                        labels=meta.get("labels"),
                        task_ids=meta.get("task_ids"))


def _dataset_paths(data_dir):
    return {split: os.path.join(data_dir, name)
            for split, name in SPLIT_FILES}


def _train_meta(data_dir):
    meta = dataio.read_meta(os.path.join(data_dir, "train.txt"))
    if "vocab" not in meta:
        raise ParseError(f"{data_dir}: train sidecar is missing the vocabulary")
    return meta


def _model_config(cfg, vocab_size, n_labels):
    return models.ModelConfig(
        vocab_size=vocab_size,
        head=cfg.head,
        slot_dim=cfg.slot_dim,
        enc_hidden=cfg.enc_hidden,
        enc_layers=cfg.enc_layers,
        grid_height=cfg.grid_height,
        grid_width=cfg.grid_width,
        n_labels=n_labels,
    )


def _checkpoint_extra(cfg, vocab, labels):
    extra = {"config": cfg.canonical_text(), "vocab": vocab.tokens,
             "task": cfg.task}
    if labels is not None:
        extra["labels"] = labels
    return extra


# ---- train ---------------------------------------------------------------------


def _eval_reports(params, mcfg, vocab, splits, classification, task=""):
    reports = []
    for name, split in splits:
        if split is None or len(split) == 0:
            continue
        if classification:
            reports.append(training.evaluate_classifier(
                params, mcfg, split.encoded, split=name,
                task_ids=split.task_ids))
        else:
            bucket_texts = split.input_texts if task == "program" else None
            reports.append(training.evaluate_sequences(
                params, mcfg, split.encoded, vocab, split=name,
                bucket_texts=bucket_texts))
    return reports


def _restore_adam(params, moments, lr, step_count):
    adam = training.init_adam(params, lr)
    for name in adam.m:
        if name in moments["m"]:
            adam.m[name][...] = moments["m"][name]
            adam.v[name][...] = moments["v"][name]
    adam.step_count = step_count
    return adam


def cmd_train(args):
    cfg = _config_from_args(args)
    if not cfg.data:
        raise ConfigError("train needs --data (directory from generate)")
    if not cfg.out:
        raise ConfigError("train needs --out")
    os.makedirs(cfg.out, exist_ok=True)

    meta = _train_meta(cfg.data)
    if meta.get("task") and meta["task"] != cfg.task:
        raise ConfigError(f"dataset task {meta['task']!r} does not match "
                          f"--task {cfg.task!r}")
    vocab = Vocabulary(meta["vocab"])
    labels = meta.get("labels")
    classification = cfg.head == models.CLASSIFIER_HEAD
    if classification and not labels:
        raise ParseError("classifier training needs labels in the sidecar")
    paths = _dataset_paths(cfg.data)
    train = _load_split(paths["train"], vocab, classification)
    id_test = _load_split(paths["id_test"], vocab, classification)
    ood_test = _load_split(paths["ood_test"], vocab, classification) \
        if os.path.exists(paths["ood_test"]) else None

    mcfg = _model_config(cfg, len(vocab), len(labels) if labels else 0)
    with open(os.path.join(cfg.out, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(cfg.canonical_text())
    extra = _checkpoint_extra(cfg, vocab, labels)

    if classification:
        targets = train.targets
    else:
        targets = np.stack([
            decoders.prepare_target(tokens, cfg.grid_width, vocab)
            for tokens in train.target_tokens
        ])

    results = []
    for k in range(cfg.seeds):
        seed = cfg.seed + k
        tag = f"_seed{seed}" if cfg.seeds > 1 else ""
        cfg_hash = ckpt.config_hash(
            dataclasses.replace(cfg, seed=seed).identity_text())
        params = models.init_params(np.random.default_rng(seed), mcfg)
        settings = training.TrainSettings(
            steps=cfg.steps, batch_size=cfg.batch, lr=cfg.lr,
            schedule=cfg.schedule, warmup=cfg.warmup,
            clip_norm=cfg.clip_norm, seed=seed, eval_every=cfg.eval_every,
            checkpoint_every=cfg.checkpoint_every, patience=cfg.patience,
        )
        if classification:
            loss_fn = training.make_classifier_loss(
                params, mcfg, train.input_ids, train.targets, cfg.batch)
        else:
            loss_fn = training.make_sequence_loss(
                params, mcfg, train.input_ids, targets, cfg.batch)

        ckpt_path = os.path.join(cfg.out, f"checkpoint{tag}.bin")
        adam = None
        start_step = 0
        if args.resume and os.path.exists(ckpt_path):
            header, arrays, moments = ckpt.load_checkpoint(ckpt_path)
            if header["config_hash"] != cfg_hash:
                raise ConfigError(
                    f"{ckpt_path}: config hash {header['config_hash']} does "
                    f"not match the current run ({cfg_hash})")
            ckpt.restore_params(params, arrays)
            adam = _restore_adam(params, moments, cfg.lr,
                                 header["optimizer_steps"])
            start_step = header["step"]
            print(f"resumed {ckpt_path} at step {start_step}")
        elif adam is None:
            adam = training.init_adam(params, cfg.lr)

        log_path = os.path.join(cfg.out, f"metrics{tag}.log")
        log_mode = "a" if start_step else "w"
        with open(log_path, log_mode, encoding="utf-8") as log_fh:
            def log(line):
                log_fh.write(line + "\n")

            def eval_fn():
                return _eval_reports(params, mcfg, vocab,
                                     [("id_test", id_test)], classification,
                                     task=cfg.task)

            def checkpoint_fn(step):
                ckpt.save_checkpoint(ckpt_path, params, cfg_hash, step,
                                     optimizer=adam, extra=extra)

            history, _ = training.train_loop(
                params, settings, loss_fn, frozen=models.frozen_embedding_rows(mcfg),
                eval_fn=eval_fn if len(id_test) else None, log=log,
                checkpoint_fn=checkpoint_fn, adam=adam, start_step=start_step,
            )
        final_step = history[-1][0] if history else start_step
        ckpt.save_checkpoint(ckpt_path, params, cfg_hash, final_step,
                             optimizer=adam, extra=extra)

        reports = _eval_reports(
            params, mcfg, vocab,
            [("id_test", id_test), ("ood_test", ood_test)], classification,
            task=cfg.task)
        report_path = os.path.join(cfg.out, f"report{tag}.txt")
        with open(report_path, "w", encoding="utf-8") as fh:
            for report in reports:
                for line in report.lines():
                    fh.write(line + "\n")
                    print(line)
        scores = {r.split: r.accuracy for r in reports}
        headline = scores.get("ood_test", scores.get("id_test", 0.0))
        results.append((seed, ckpt_path, headline, scores))
        print(f"seed={seed} steps={final_step} "
              + " ".join(f"{k}={v:.4f}" for k, v in sorted(scores.items())))

    if cfg.seeds > 1:
        best = max(results, key=lambda r: r[2])
        values = [r[2] for r in results]
        mean = statistics.fmean(values)
        spread = statistics.stdev(values) if len(values) > 1 else 0.0
        summary_path = os.path.join(cfg.out, "summary.txt")
        with open(summary_path, "w", encoding="utf-8") as fh:
            for seed, _, headline, scores in results:
                fh.write(f"seed={seed} "
                         + " ".join(f"{k}={v:.6f}"
                                    for k, v in sorted(scores.items()))
                         + "\n")
            fh.write(f"best={best[2]:.6f} (seed {best[0]})\n")
            fh.write(f"mean={mean:.6f} std={spread:.6f}\n")
        shutil.copyfile(best[1], os.path.join(cfg.out, "checkpoint.bin"))
        print(f"best={best[2]:.6f} (seed {best[0]}) "
              f"mean={mean:.6f} std={spread:.6f}")
    return EXIT_OK


# ---- eval ----------------------------------------------------------------------

_ORACLES = {
    "sequence": sequence_oracle,
    "toyadd": toy_addition_oracle,
    "addsub": addsub_oracle,
    "program": program_oracle,
}


def _oracle_report(task, split, name, width):
    """Accuracy of the task's independent solver on a dataset; the
    perfect-prediction stub used to exercise report plumbing."""
    if task == "toyadd_grid":
        predict = lambda text: aligned_oracle(text, width)
    elif task in _ORACLES:
        predict = _ORACLES[task]
    else:
        predict = None  # classification stub: echo the stored answer
    correct = [
        (predict(text) if predict else target) == target
        for text, target in zip(split.input_texts, split.targets)
    ]
    report = training.EvalReport(
        mode="classification" if predict is None else "sequence",
        split=name, n=len(split),
        accuracy=sum(correct) / len(split) if len(split) else 0.0)
    if split.task_ids is not None:
        per = {}
        for task_id, hit in zip(split.task_ids, correct):
            ok, count = per.get(task_id, (0, 0))
            per[task_id] = (ok + hit, count + 1)
        report.per_task = {t: (1.0 - ok / count, count)
                           for t, (ok, count) in per.items()}
        report.failed_tasks = sum(1 for err, _ in report.per_task.values()
                                  if err > 0.05)
    return report


def _load_model_checkpoint(path):
    header, arrays, _ = ckpt.load_checkpoint(path)
    if "config" not in header or "vocab" not in header:
        raise StateError(f"{path}: checkpoint lacks embedded config/vocab")
    cfg = cfgmod.apply_overrides(
        cfgmod.RunConfig(),
        {k: v for k, v in
         (line.split(" = ", 1) for line in header["config"].splitlines())},
    ).resolved()
    vocab = Vocabulary(header["vocab"])
    labels = header.get("labels")
    if header.get("stub") == "oracle":
        return header, cfg, vocab, labels, None, None
    mcfg = _model_config(cfg, len(vocab), len(labels) if labels else 0)
    params = models.init_params(np.random.default_rng(0), mcfg)
    ckpt.restore_params(params, arrays)
    return header, cfg, vocab, labels, mcfg, params


def save_oracle_checkpoint(path, cfg, vocab, labels=None):
    """A parameter-free checkpoint whose eval predictions come from the
    task oracle; lets the report pipeline be tested without training."""
    extra = dict(_checkpoint_extra(cfg, vocab, labels), stub="oracle")
    ckpt.save_checkpoint(path, {}, ckpt.config_hash(cfg.identity_text()),
                         0, extra=extra)


def cmd_eval(args):
    header, cfg, vocab, labels, mcfg, params = \
        _load_model_checkpoint(args.checkpoint)
    classification = cfg.head == models.CLASSIFIER_HEAD
    name = os.path.splitext(os.path.basename(args.data))[0]
    split = _load_split(args.data, vocab, classification)
    if len(split) == 0:
        raise ParseError(f"{args.data}: no examples")

    if header.get("stub") == "oracle":
        report = _oracle_report(cfg.task, split, name, cfg.grid_width)
    elif classification:
        report = training.evaluate_classifier(
            params, mcfg, split.encoded, split=name, task_ids=split.task_ids)
    else:
        bucket_texts = split.input_texts if cfg.task == "program" else None
        report = training.evaluate_sequences(
            params, mcfg, split.encoded, vocab, split=name,
            bucket_texts=bucket_texts)

    out_path = args.out or args.data + ".report.txt"
    with open(out_path, "w", encoding="utf-8") as fh:
        for line in report.lines():
            fh.write(line + "\n")
            print(line)
    return EXIT_OK


# ---- gradcheck -----------------------------------------------------------------


def cmd_gradcheck(args):
    rows = gradcheck.run_primitive_suite(instances=args.instances,
                                         seed=args.seed)
    rows += gradcheck.run_composite_suite(instances=args.instances,
                                          seed=args.seed)
    width = max(len(name) for name, _, _ in rows)
    failed = 0
    for name, err, ok in rows:
        failed += not ok
        print(f"{name:<{width}}  max_rel_err={err:.3e}  "
              f"{'pass' if ok else 'FAIL'}")
    print(f"{len(rows) - failed}/{len(rows)} checks passed "
          f"(tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


# ---- visualize -----------------------------------------------------------------


def cmd_visualize(args):
    header, cfg, vocab, labels, mcfg, params = \
        _load_model_checkpoint(args.checkpoint)
    if params is None:
        raise StateError("visualize needs a trained checkpoint, not a stub")
    table = params[models.EMBED_KEY]

    if cfg.head == models.GRID_HEAD:
        left, sep, right = args.input.partition("+")
        if not sep:
            raise ParseError("grid-head visualization wants an 'A+B' input")
        cells = aligned_cells(int(left), int(right), cfg.grid_width)
        ids = np.asarray(vocab.encode(cells), dtype=np.intp)
        ids = ids.reshape(cfg.grid_height, cfg.grid_width)
        slots = table.data[ids]
    else:
        tokens = word_tokens(args.input) if cfg.task == "babi" \
            else char_tokens(args.input)
        ids = vocab.encode(tokens)
        grid_obj = encode_sequence_to_grid(
            ids, table, params, cfg.grid_height, cfg.grid_width,
            cfg.enc_layers)
        slots = grid_obj.slots.data

    text, nearest, norms = visualize.render_grid(slots, table.data, vocab)
    print(text)
    cfg_hash = header.get("config_hash", "")
    visualize.write_ppm_heatmap(args.out + ".ppm", norms)
    ckpt.save_grid_dump(args.out + ".grid", slots, nearest, cfg_hash)
    print(f"wrote {args.out}.ppm and {args.out}.grid")
    return EXIT_OK


# ---- entry point ---------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="seq2grid",
                     description="sequence-to-grid preprocessing models")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write dataset files")
    _add_config_flags(gen)
    gen.add_argument("--force", action="store_true",
                     help="overwrite existing dataset files")
    gen.set_defaults(func=cmd_generate)

    tr = subs.add_parser("train", help="train a model")
    _add_config_flags(tr)
    tr.add_argument("--resume", action="store_true",
                    help="continue from the run's checkpoint")
    tr.set_defaults(func=cmd_train)

    ev = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="dataset file")
    ev.add_argument("--out", help="report path (default: <data>.report.txt)")
    ev.set_defaults(func=cmd_eval)

    gc = subs.add_parser("gradcheck", help="finite-difference table")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--instances", type=int, default=100)
    gc.set_defaults(func=cmd_gradcheck)

    vis = subs.add_parser("visualize", help="render the grid for one input")
    vis.add_argument("--checkpoint", required=True)
    vis.add_argument("--input", required=True, help="raw input string")
    vis.add_argument("--out", default="grid",
                     help="output prefix for .ppm / .grid files")
    vis.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, TokenizationError, CapacityError, StateError,
            DimensionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
