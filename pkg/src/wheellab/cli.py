"""Command-line entry point tying the modules into one workflow:
generation, labeling stats, splitting, balancing, training, fine-tuning,
evaluation, error triage, and the fine-tune experiment matrix.

Defaults are desk scale (64x64 frames, 2 s sequences, batch 32, 5
repetitions); --paper-scale restores the full-size protocol.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import datasets as ds
from . import labeling as lb
from . import nn
from . import pipeline as pl
from . import scenegen as sg
from . import triage as tg
from .errors import WheelLabError

DATA_ROOT_ENV = "WHEELLAB_DATA_ROOT"


def _root(args):
    return getattr(args, "root", None) or os.environ.get(DATA_ROOT_ENV) or "."


def _desk_train_cfg(args) -> pl.TrainConfig:
    paper = getattr(args, "paper_scale", False)
    opt = nn.OptimizerConfig(
        lr=args.lr if args.lr is not None else (1e-4 if paper else 1e-3),
        batch_size=args.batch_size if args.batch_size is not None else (128 if paper else 32),
    )
    return pl.TrainConfig(
        optimizer=opt,
        max_batches=args.batches if args.batches is not None else (3000 if paper else 400),
        finetune_batches=args.finetune_batches
        if getattr(args, "finetune_batches", None) is not None
        else (2500 if paper else 300),
        eval_every=50,
        seed=args.seed,
    )


def _arch_for(image_size: int) -> nn.NetConfig:
    return nn.NetConfig(input_size=image_size)


# --- subcommand bodies -------------------------------------------------------

def cmd_generate(args):
    with open(args.config, "r", encoding="utf-8") as f:
        cfg = sg.config_from_text(f.read())
    if args.paper_scale:
        from dataclasses import replace

        cfg = replace(cfg, sequence_seconds=10.0, image_size=256)
    manifest = pl.generate_dataset(cfg, args.out)
    print(f"generated {len(manifest)} frames into {args.out} (config {manifest.generation_config_hash})")
    return 0


def cmd_label(args):
    m = ds.read_manifest(args.manifest)
    dist = lb.label_distribution([r.labels for r in m.records])
    print(f"manifest {args.manifest} config {m.generation_config_hash}")
    for c in lb.LABEL_CLASSES:
        print(f"{c}\t{dist['counts'][c]}\t{dist['fractions'][c]:.4f}")
    return 0


def cmd_split(args):
    m = ds.read_manifest(args.manifest)
    spec = ds.SplitSpec(args.train, args.val, args.test, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for part in ds.split_by_identity(m, spec):
        path = os.path.join(args.out, f"{part.split_tag}.tsv")
        ds.write_manifest(part, path)
        print(f"{part.split_tag}\t{len(part)} frames\t{len(part.driver_ids())} drivers\t{path}")
    return 0


def cmd_balance(args):
    m = ds.read_manifest(args.manifest)
    target = {}
    for piece in args.target.split(","):
        key, _, val = piece.partition("=")
        target[key.strip()] = float(val)
    out = ds.balance_undersample(m, target, seed=args.seed)
    ds.write_manifest(out, args.out)
    dist = lb.label_distribution([r.labels for r in out.records])
    print(f"kept {len(out)}/{len(m)} frames -> {args.out}")
    for c in lb.LABEL_CLASSES:
        print(f"{c}\t{dist['fractions'][c]:.4f}")
    return 0


def cmd_train(args):
    train_m = ds.read_manifest(args.train_manifest)
    val_m = ds.read_manifest(args.val_manifest)
    cfg = _desk_train_cfg(args)
    params = nn.init_params(_arch_for(args.image_size), seed=args.seed)
    best, history = pl.train(params, train_m, val_m, cfg, _root(args))
    nn.save_checkpoint(best, args.out)
    if args.report:
        report = pl.evaluate(best, val_m, _root(args))
        pl.write_report(report, history, args.report)
    print(f"trained {cfg.max_batches} batches, checkpoint -> {args.out} (config {train_m.generation_config_hash})")
    return 0


def cmd_finetune(args):
    params = nn.load_checkpoint(args.checkpoint)
    synth = ds.read_manifest(args.synth)
    real = ds.read_manifest(args.real)
    cfg = _desk_train_cfg(args)
    out_params = pl.finetune_mixed(params, synth, real, cfg, _root(args))
    nn.save_checkpoint(out_params, args.out)
    print(f"fine-tuned {cfg.finetune_batches} even-mix batches, checkpoint -> {args.out}")
    return 0


def cmd_evaluate(args):
    params = nn.load_checkpoint(args.checkpoint)
    m = ds.read_manifest(args.manifest)
    report = pl.evaluate(params, m, _root(args))
    if args.out:
        pl.write_report(report, [], args.out)
    for line in report.to_lines():
        print(line)
    return 0


def cmd_export_errors(args):
    params = nn.load_checkpoint(args.checkpoint)
    m = ds.read_manifest(args.manifest)
    errors = pl.export_errors(params, m, args.out, _root(args))
    print(f"{len(errors)} errors -> {args.out} (config {m.generation_config_hash})")
    return 0


def cmd_triage(args):
    session = tg.TriageSession.open(args.errors, args.store, args.config, _root(args))
    static = args.static if args.static and os.path.isdir(args.static) else None
    print(f"serving {len(session.errors)} errors on {args.bind}")
    tg.serve(session, args.bind, config_out_dir=args.out, static_dir=static)
    return 0


def cmd_iterate(args):
    """Post-review tail of the data-centric loop: plan -> regenerate ->
    fine-tune -> evaluate before/after."""
    session = tg.TriageSession.open(args.errors, args.store, args.config, _root(args))
    plan = tg.build_iteration_plan(session)
    new_cfg = tg.apply_plan(plan, session.base_config)
    new_dir = os.path.join(args.out, f"iter_{sg.config_hash(new_cfg)}")
    new_manifest = pl.generate_dataset(new_cfg, new_dir)
    print(f"plan {plan.counts} -> +{plan.added_sequences} sequences, config {sg.config_hash(new_cfg)}")
    print(f"regenerated {len(new_manifest)} frames into {new_dir}")

    params = nn.load_checkpoint(args.checkpoint)
    real = ds.read_manifest(args.real)
    test = ds.read_manifest(args.test_manifest)
    cfg = _desk_train_cfg(args)
    before = pl.evaluate(params, test, _root(args))
    tuned = pl.finetune_mixed(params, new_manifest, real, cfg, new_dir, real_root=_root(args))
    after = pl.evaluate(tuned, test, _root(args))
    nn.save_checkpoint(tuned, os.path.join(args.out, "iterated.ckpt"))
    print(f"off_off recall before {before.per_class_recall['off_off']!r} after {after.per_class_recall['off_off']!r}")
    return 0


# --- experiment matrix -------------------------------------------------------

@dataclass(frozen=True)
class ExperimentMatrixConfig:
    real_subset_sizes: tuple = (100, 200, 300, 400)
    repetitions: int = 5
    baseline_only_real: bool = True
    seeds: tuple = ()

    def __post_init__(self):
        if any(s <= 0 or s % 20 for s in self.real_subset_sizes):
            raise ValueError("sizes must be positive multiples of 20 (5 drivers x 4 sequences)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def seed_list(self):
        return list(self.seeds) if self.seeds else list(range(self.repetitions))


def run_experiment_matrix(
    mcfg: ExperimentMatrixConfig,
    synth_train: ds.Manifest,
    synth_val: ds.Manifest,
    real_pool: ds.Manifest,
    test_manifest: ds.Manifest,
    synth_root,
    real_root,
    out_dir,
    train_cfg: pl.TrainConfig,
    input_size: int = 64,
):
    """Per repetition: pretrain on synthetic, then for each subset size run
    (a) real-only training and (b) synthetic + even-mix fine-tuning, all
    evaluated on the fixed pseudo-real test split.

    Returns (runs, summary): per-run rows and per-cell mean/std."""
    os.makedirs(out_dir, exist_ok=True)
    arch = _arch_for(input_size)
    runs = []
    for rep, seed in enumerate(mcfg.seed_list()):
        rep_cfg = pl.TrainConfig(
            optimizer=train_cfg.optimizer,
            max_batches=train_cfg.max_batches,
            finetune_batches=train_cfg.finetune_batches,
            eval_every=train_cfg.eval_every,
            seed=seed,
        )
        params = nn.init_params(arch, seed=seed)
        pretrained, _ = pl.train(params, synth_train, synth_val, rep_cfg, synth_root)
        synth_report = pl.evaluate(pretrained, test_manifest, real_root)
        runs.append(_run_row(rep, "synth_only", 0, synth_report))
        for size in mcfg.real_subset_sizes:
            subset = ds.sample_small_real_subset(real_pool, frames_per_sequence=size // 20, seed=seed)
            tuned = pl.finetune_mixed(pretrained, synth_train, subset, rep_cfg, synth_root, real_root=real_root)
            runs.append(_run_row(rep, "synth_finetune", size, pl.evaluate(tuned, test_manifest, real_root)))
            if mcfg.baseline_only_real:
                scratch = nn.init_params(arch, seed=seed + 1000)
                real_only, _ = pl.train(scratch, subset, subset, rep_cfg, real_root)
                runs.append(_run_row(rep, "real_only", size, pl.evaluate(real_only, test_manifest, real_root)))
    summary = summarize_matrix(runs)
    _write_matrix_files(runs, summary, out_dir)
    return runs, summary


def _run_row(rep, condition, size, report: pl.EvalReport):
    return {
        "rep": rep,
        "condition": condition,
        "size": size,
        "auc_left": report.auc_left,
        "auc_right": report.auc_right,
    }


def summarize_matrix(runs):
    cells = {}
    for row in runs:
        cells.setdefault((row["condition"], row["size"]), []).append(row)
    summary = []
    for (condition, size), rows in sorted(cells.items()):
        entry = {"condition": condition, "size": size, "n": len(rows)}
        for hand in ("auc_left", "auc_right"):
            vals = np.array([r[hand] for r in rows], dtype=float)
            entry[f"{hand}_mean"] = float(vals.mean())
            entry[f"{hand}_std"] = float(vals.std(ddof=0))
        summary.append(entry)
    return summary


def _write_matrix_files(runs, summary, out_dir):
    with open(os.path.join(out_dir, "matrix_runs.tsv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("rep\tcondition\tsize\tauc_left\tauc_right\n")
        for r in runs:
            f.write(f"{r['rep']}\t{r['condition']}\t{r['size']}\t{r['auc_left']!r}\t{r['auc_right']!r}\n")
    with open(os.path.join(out_dir, "matrix_summary.tsv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("condition\tsize\tn\tauc_left_mean\tauc_left_std\tauc_right_mean\tauc_right_std\n")
        for s in summary:
            f.write(
                f"{s['condition']}\t{s['size']}\t{s['n']}\t{s['auc_left_mean']!r}"
                f"\t{s['auc_left_std']!r}\t{s['auc_right_mean']!r}\t{s['auc_right_std']!r}\n"
            )


def cmd_matrix(args):
    synth_train = ds.read_manifest(args.synth_train)
    synth_val = ds.read_manifest(args.synth_val)
    real_pool = ds.read_manifest(args.real_pool)
    test_m = ds.read_manifest(args.test_manifest)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    mcfg = ExperimentMatrixConfig(
        real_subset_sizes=sizes,
        repetitions=11 if args.paper_scale and args.reps is None else (args.reps or 5),
    )
    cfg = _desk_train_cfg(args)
    _, summary = run_experiment_matrix(
        mcfg, synth_train, synth_val, real_pool, test_m, args.synth_root, args.real_root, args.out, cfg,
        input_size=args.image_size,
    )
    for s in summary:
        print(
            f"{s['condition']}\t{s['size']}\tL {s['auc_left_mean']:.4f}±{s['auc_left_std']:.4f}"
            f"\tR {s['auc_right_mean']:.4f}±{s['auc_right_std']:.4f}"
        )
    return 0


# --- argument plumbing -------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--batches", type=int, default=None)
    p.add_argument("--finetune-batches", dest="finetune_batches", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", dest="image_size", type=int, default=64)
    p.add_argument("--root", default=None, help=f"data root (default ${DATA_ROOT_ENV} or .)")
    p.add_argument("--paper-scale", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="wheellab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a dataset from a generation config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("label", help="print the label distribution of a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("split", help="identity-disjoint train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=float, default=0.8)
    p.add_argument("--val", type=float, default=0.1)
    p.add_argument("--test", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("balance", help="undersample toward target class fractions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", required=True, help="e.g. on_on=0.5,on_off=0.314,off_on=0.178,off_off=0.008")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_balance)

    p = sub.add_parser("train", help="train from scratch")
    p.add_argument("--train-manifest", dest="train_manifest", required=True)
    p.add_argument("--val-manifest", dest="val_manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="even-mix fine-tuning of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("evaluate", help="per-hand AUC/PR report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--root", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("export-errors", help="write the misclassification manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--root", default=None)
    p.set_defaults(fn=cmd_export_errors)

    p = sub.add_parser("triage", help="serve the review UI / API")
    p.add_argument("--errors", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--config", required=True, help="base generation config")
    p.add_argument("--out", default=".", help="where applied configs are written")
    p.add_argument("--bind", default="127.0.0.1:8077")
    p.add_argument("--static", default=None, help="directory with the built web UI")
    p.add_argument("--root", default=None)
    p.set_defaults(fn=cmd_triage)

    p = sub.add_parser("iterate", help="apply a reviewed plan: regenerate, fine-tune, evaluate")
    p.add_argument("--errors", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--real", required=True)
    p.add_argument("--test-manifest", dest="test_manifest", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_iterate)

    p = sub.add_parser("matrix", help="real-only vs synth+finetune AUC table")
    p.add_argument("--synth-train", dest="synth_train", required=True)
    p.add_argument("--synth-val", dest="synth_val", required=True)
    p.add_argument("--real-pool", dest="real_pool", required=True)
    p.add_argument("--test-manifest", dest="test_manifest", required=True)
    p.add_argument("--synth-root", dest="synth_root", required=True)
    p.add_argument("--real-root", dest="real_root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="100,200,300,400")
    p.add_argument("--reps", type=int, default=None)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_matrix)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WheelLabError as e:
        print(f"ERROR {e.code}: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"ERROR Io: {e.filename or e}", file=sys.stderr)
        return 4
    except ValueError as e:
        print(f"ERROR ValueError: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
