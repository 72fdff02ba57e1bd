"""Training loops, the even-mix fine-tuning protocol, per-hand AUC/PR
evaluation, and error export for triage. Also hosts the end-to-end
dataset generation step that renders sequences into frames + manifest.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import datasets as ds
from . import labeling as lb
from . import nn
from . import render as rd
from . import scenegen as sg
from .errors import EmptyManifest, OneClassOnly, ParseError

ERROR_CATEGORIES = ("unassigned", "occlusion", "both_off", "opposite_side", "blur", "other")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: nn.OptimizerConfig = nn.OptimizerConfig()
    max_batches: int = 400
    finetune_batches: int = 2500
    eval_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if min(self.max_batches, self.finetune_batches, self.eval_every) < 1:
            raise ValueError("all batch counts must be >= 1")


@dataclass
class EvalReport:
    auc_left: float
    auc_right: float
    precision_left: float
    recall_left: float
    precision_right: float
    recall_right: float
    per_class_recall: dict
    n_frames: int

    def to_lines(self):
        lines = [
            f"n_frames = {self.n_frames}",
            f"auc_left = {self.auc_left!r}",
            f"auc_right = {self.auc_right!r}",
            f"precision_left = {self.precision_left!r}",
            f"recall_left = {self.recall_left!r}",
            f"precision_right = {self.precision_right!r}",
            f"recall_right = {self.recall_right!r}",
        ]
        for c in lb.LABEL_CLASSES:
            lines.append(f"recall.{c} = {self.per_class_recall.get(c)!r}")
        return lines


@dataclass
class ErrorRecord:
    """One misclassified frame, carried with its manifest record so the
    triage service can find the image again."""

    record: ds.FrameRecord
    score_left: float
    score_right: float
    predicted: lb.LabelPair
    category: str = "unassigned"

    @property
    def frame_id(self):
        return self.record.frame_id

    @property
    def labels(self):
        return self.record.labels


# --- dataset generation ------------------------------------------------------

def generate_dataset(cfg: sg.GenerationConfig, out_dir) -> ds.Manifest:
    """Render every sequence of cfg into out_dir and write the manifest.

    Layout: out_dir/frames/<frame_id>.ppm, out_dir/manifest.tsv,
    out_dir/config.cfg. Fully reproducible from (cfg, seed).
    """
    out_dir = os.fspath(out_dir)
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    profile = rd.PROFILES[cfg.domain]
    records = []
    for idx in range(cfg.num_sequences):
        sc = sg.sample_scenario(cfg, idx)
        crop = rd.compute_wheel_crop(sc.camera, sc.vehicle.wheel)
        history = []
        for pose in sg.animate_sequence(sc, cfg):
            img = rd.render_frame(sc, pose, profile)
            if cfg.motion_blur_frames > 0:
                history.append(img.pixels.astype(np.float64))
                history = history[-(cfg.motion_blur_frames + 1):]
                img = rd.Image(img.width, img.height, np.mean(history, axis=0).round().astype(np.uint8))
            frame_id = f"{sc.sequence_id}_f{pose.frame_index:04d}"
            rel_path = os.path.join("frames", frame_id + ".ppm")
            rd.write_ppm(img, os.path.join(out_dir, rel_path))
            labels = lb.frame_labels(pose, sc.vehicle.wheel)
            records.append(
                ds.FrameRecord(
                    frame_id=frame_id,
                    image_path=rel_path,
                    crop_rect=crop,
                    sequence_id=sc.sequence_id,
                    driver_id=sc.driver.driver_id,
                    domain=cfg.domain,
                    labels=labels,
                    behavior=sc.behavior,
                    lighting=sc.lighting,
                    occluded=lb.occlusion_flag(pose, sc.camera),
                )
            )
    manifest = ds.Manifest(records, split_tag="unsplit", generation_config_hash=sg.config_hash(cfg))
    ds.write_manifest(manifest, os.path.join(out_dir, "manifest.tsv"))
    with open(os.path.join(out_dir, "config.cfg"), "w", encoding="utf-8") as f:
        f.write(sg.config_to_text(cfg))
    return manifest


_FRAME_CACHE: dict = {}


def _load_one(root, record, input_size):
    key = (os.path.abspath(os.path.join(root, record.image_path)), record.crop_rect, input_size)
    if key not in _FRAME_CACHE:
        img = rd.read_ppm(key[0])
        crop = rd.crop_and_resize(img, record.crop_rect, input_size)
        _FRAME_CACHE[key] = np.transpose(crop.pixels, (2, 0, 1)).copy()  # (3, S, S) uint8
    return _FRAME_CACHE[key]


def load_frames(manifest: ds.Manifest, root, input_size: int):
    """Materialize crops as (N, 3, S, S) uint8 plus per-hand label vectors."""
    if not manifest.records:
        raise EmptyManifest("no frames to load")
    x = np.stack([_load_one(root, r, input_size) for r in manifest.records])
    y_left = np.array([r.labels.left_on_wheel for r in manifest.records], dtype=np.float64)
    y_right = np.array([r.labels.right_on_wheel for r in manifest.records], dtype=np.float64)
    return x, y_left, y_right


def _to_float(batch):
    # Standardize per image and channel. Global gain/offset (exposure, color
    # cast, sensor noise floor) varies across capture domains and is a cheap
    # shortcut for a small net to latch onto; removing it keeps the model on
    # spatial structure, which is what transfers.
    x = batch.astype(np.float64) / 255.0
    mean = x.mean(axis=(2, 3), keepdims=True)
    std = x.std(axis=(2, 3), keepdims=True)
    return (x - mean) / (std + 1e-6)


# --- metrics -----------------------------------------------------------------

def roc_auc(scores, labels) -> float:
    """Rank-statistic AUC: P(random positive outscores random negative),
    ties counted half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"need both classes, got {n_pos} pos / {n_neg} neg")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[y].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def precision_recall(scores, labels, threshold: float = 0.5):
    """(precision, recall) at `score >= threshold`. Precision is NaN when
    nothing is predicted positive."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if not y.any():
        raise OneClassOnly("recall undefined without positives")
    pred = s >= threshold
    tp = int((pred & y).sum())
    precision = tp / int(pred.sum()) if pred.any() else math.nan
    recall = tp / int(y.sum())
    return precision, recall


def _forward_scores(params: nn.ModelParams, x_uint8, chunk: int = 256):
    outs_l, outs_r = [], []
    for start in range(0, x_uint8.shape[0], chunk):
        pl, pr, _ = nn.forward(params, _to_float(x_uint8[start : start + chunk]))
        outs_l.append(pl)
        outs_r.append(pr)
    return np.concatenate(outs_l), np.concatenate(outs_r)


def evaluate(params: nn.ModelParams, manifest: ds.Manifest, root) -> EvalReport:
    if not manifest.records:
        raise EmptyManifest("cannot evaluate an empty manifest")
    x, yl, yr = load_frames(manifest, root, params.arch.input_size)
    sl, sr = _forward_scores(params, x)
    return report_from_scores(sl, sr, yl, yr)


def report_from_scores(sl, sr, yl, yr) -> EvalReport:
    def safe_auc(s, y):
        try:
            return roc_auc(s, y)
        except OneClassOnly:
            return math.nan

    def safe_pr(s, y):
        try:
            return precision_recall(s, y)
        except OneClassOnly:
            return (math.nan, math.nan)

    pl, rl = safe_pr(sl, yl)
    pr_, rr = safe_pr(sr, yr)
    true_cls = [lb.LabelPair(bool(a), bool(b)).joint_class for a, b in zip(yl, yr)]
    pred_cls = [lb.LabelPair(a >= 0.5, b >= 0.5).joint_class for a, b in zip(sl, sr)]
    per_class = {}
    for c in lb.LABEL_CLASSES:
        n_c = sum(1 for t in true_cls if t == c)
        if n_c == 0:
            per_class[c] = math.nan
        else:
            per_class[c] = sum(1 for t, p in zip(true_cls, pred_cls) if t == c and p == c) / n_c
    return EvalReport(
        auc_left=safe_auc(sl, yl),
        auc_right=safe_auc(sr, yr),
        precision_left=pl,
        recall_left=rl,
        precision_right=pr_,
        recall_right=rr,
        per_class_recall=per_class,
        n_frames=len(yl),
    )


# --- training ----------------------------------------------------------------

def _val_score(params, x_val, yl_val, yr_val):
    sl, sr = _forward_scores(params, x_val)
    aucs = []
    for s, y in ((sl, yl_val), (sr, yr_val)):
        try:
            aucs.append(roc_auc(s, y))
        except OneClassOnly:
            pass
    return float(np.mean(aucs)) if aucs else math.nan


def train(params: nn.ModelParams, train_manifest: ds.Manifest, val_manifest: ds.Manifest, cfg: TrainConfig, root):
    """SGD over shuffled epochs; keeps the checkpoint with best mean val AUC.

    Returns (best_params, history) where history is a list of per-batch
    dicts (loss, and val_auc on eval batches).
    """
    if not train_manifest.records or not val_manifest.records:
        raise EmptyManifest("train and val manifests must be nonempty")
    x, yl, yr = load_frames(train_manifest, root, params.arch.input_size)
    x_val, yl_val, yr_val = load_frames(val_manifest, root, params.arch.input_size)
    rng = np.random.default_rng(cfg.seed)
    state = nn.AdamState.zeros_like(params)
    best, best_auc = params.copy(), -math.inf
    history = []
    b = cfg.optimizer.batch_size
    t = 0
    while t < cfg.max_batches:
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], b):
            if t >= cfg.max_batches:
                break
            idx = order[start : start + b]
            batch = _to_float(x[idx])
            p_l, p_r, cache = nn.forward(params, batch)
            loss = nn.bce_loss(p_l, yl[idx]) + nn.bce_loss(p_r, yr[idx])
            grads = nn.backward(params, cache, yl[idx], yr[idx])
            params, state = nn.adam_step(params, grads, state, cfg.optimizer)
            t += 1
            entry = {"batch": t, "loss": loss}
            if t % cfg.eval_every == 0 or t == cfg.max_batches:
                val_auc = _val_score(params, x_val, yl_val, yr_val)
                entry["val_auc"] = val_auc
                if not math.isnan(val_auc) and val_auc > best_auc:
                    best_auc = val_auc
                    best = params.copy()
            history.append(entry)
    if best_auc == -math.inf:
        best = params
    return best, history


def finetune_mixed(params: nn.ModelParams, synth_manifest: ds.Manifest, real_manifest: ds.Manifest, cfg: TrainConfig, root, batch_log=None, real_root=None):
    """Continue training with every batch an even mix: ceil(B/2) synthetic
    and floor(B/2) real records, real drawn with replacement when the pool
    is smaller than a batch's share."""
    if not synth_manifest.records or not real_manifest.records:
        raise EmptyManifest("both manifests must be nonempty")
    xs, yls, yrs = load_frames(synth_manifest, root, params.arch.input_size)
    xr, ylr, yrr = load_frames(real_manifest, real_root if real_root is not None else root, params.arch.input_size)
    b = cfg.optimizer.batch_size
    n_synth = (b + 1) // 2
    n_real = b // 2
    rng = np.random.default_rng([cfg.seed, 0xF1])
    state = nn.AdamState.zeros_like(params)
    for _ in range(cfg.finetune_batches):
        si = rng.choice(xs.shape[0], size=n_synth, replace=xs.shape[0] < n_synth)
        ri = rng.choice(xr.shape[0], size=n_real, replace=xr.shape[0] < n_real)
        batch = _to_float(np.concatenate([xs[si], xr[ri]]))
        yl = np.concatenate([yls[si], ylr[ri]])
        yr = np.concatenate([yrs[si], yrr[ri]])
        perm = rng.permutation(b)
        _, _, cache = nn.forward(params, batch[perm])
        grads = nn.backward(params, cache, yl[perm], yr[perm])
        params, state = nn.adam_step(params, grads, state, cfg.optimizer)
        if batch_log is not None:
            # provenance: indices < n_synth came from the synthetic pool
            batch_log.append((int(np.sum(perm < n_synth)), int(np.sum(perm >= n_synth))))
    return params


# --- error export ------------------------------------------------------------

def export_errors(params: nn.ModelParams, manifest: ds.Manifest, out_path, root):
    """Write every misclassified frame as an error manifest row, most
    confidently wrong first."""
    if not manifest.records:
        raise EmptyManifest("cannot export errors from an empty manifest")
    x, yl, yr = load_frames(manifest, root, params.arch.input_size)
    sl, sr = _forward_scores(params, x)
    errors = []
    for rec, a, b_ in zip(manifest.records, sl, sr):
        predicted = lb.LabelPair(bool(a >= 0.5), bool(b_ >= 0.5))
        if predicted == rec.labels:
            continue
        errors.append(ErrorRecord(rec, float(a), float(b_), predicted))

    def confidence(e):
        c = 0.0
        if e.predicted.left_on_wheel != e.record.labels.left_on_wheel:
            c = max(c, abs(e.score_left - 0.5))
        if e.predicted.right_on_wheel != e.record.labels.right_on_wheel:
            c = max(c, abs(e.score_right - 0.5))
        return c

    errors.sort(key=lambda e: (-confidence(e), e.frame_id))
    write_error_manifest(errors, out_path)
    return errors


ERROR_COLUMNS = ds.COLUMNS + ("score_left", "score_right", "pred_left", "pred_right", "category")


def write_error_manifest(errors, path):
    lines = ["# error-manifest v1", "\t".join(ERROR_COLUMNS)]
    for e in errors:
        base = ds._record_to_line(e.record)
        lines.append(
            base
            + f"\t{e.score_left!r}\t{e.score_right!r}"
            + f"\t{int(e.predicted.left_on_wheel)}\t{int(e.predicted.right_on_wheel)}\t{e.category}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_error_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise ParseError(f"{path}: line 1: missing error-manifest metadata line")
    if lines[1].split("\t") != list(ERROR_COLUMNS):
        raise ParseError(f"{path}: line 2: bad column header")
    n_base = len(ds.COLUMNS)
    errors = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(ERROR_COLUMNS):
            raise ParseError(f"{path}: line {lineno}: expected {len(ERROR_COLUMNS)} fields, got {len(fields)}")
        try:
            rec = ds._record_from_fields(fields[:n_base])
            cat = fields[n_base + 4]
            if cat not in ERROR_CATEGORIES:
                raise ValueError(f"unknown category {cat!r}")
            errors.append(
                ErrorRecord(
                    rec,
                    float(fields[n_base]),
                    float(fields[n_base + 1]),
                    lb.LabelPair(bool(int(fields[n_base + 2])), bool(int(fields[n_base + 3]))),
                    cat,
                )
            )
        except (ValueError, IndexError) as e:
            raise ParseError(f"{path}: line {lineno}: {e}") from e
    return errors


def write_report(report: EvalReport, history, path_prefix):
    """Text key/value dump plus a JSON summary next to it."""
    with open(f"{path_prefix}.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(report.to_lines()) + "\n")
        for h in history or []:
            pairs = " ".join(f"{k}={v!r}" for k, v in h.items())
            f.write(f"history {pairs}\n")
    payload = {
        "report": {
            "auc_left": report.auc_left,
            "auc_right": report.auc_right,
            "precision_left": report.precision_left,
            "recall_left": report.recall_left,
            "precision_right": report.precision_right,
            "recall_right": report.recall_right,
            "per_class_recall": report.per_class_recall,
            "n_frames": report.n_frames,
        },
        "history": history or [],
    }
    with open(f"{path_prefix}.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1, allow_nan=True)
