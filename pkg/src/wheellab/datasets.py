"""Frame manifests and the dataset protocols built on them:
identity-disjoint splits, deletion-only class balancing, and the
small-real-subset sampling used by the fine-tuning experiments.

Manifest file format: UTF-8, LF endings. First line is a `#` metadata
line (split tag + generation config hash), second line the tab-separated
column header, then one record per line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyManifest,
    InsufficientData,
    ParseError,
    TooFewIdentities,
    UnachievableTarget,
)
from .labeling import LABEL_CLASSES, LabelPair
from .render import CropRect

COLUMNS = (
    "frame_id", "image_path", "crop_x", "crop_y", "crop_w", "crop_h",
    "sequence_id", "driver_id", "domain", "left_on_wheel", "right_on_wheel",
    "behavior", "lighting", "occluded",
)


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    image_path: str
    crop_rect: CropRect
    sequence_id: str
    driver_id: str
    domain: str
    labels: LabelPair
    behavior: str
    lighting: str
    occluded: bool


@dataclass
class Manifest:
    records: list
    split_tag: str = "unsplit"
    generation_config_hash: str = ""

    def __post_init__(self):
        ids = [r.frame_id for r in self.records]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate frame_ids in manifest")

    def __len__(self):
        return len(self.records)

    def driver_ids(self):
        return sorted({r.driver_id for r in self.records})

    def by_class(self):
        buckets = {c: [] for c in LABEL_CLASSES}
        for r in self.records:
            buckets[r.labels.joint_class].append(r)
        return buckets


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split ratios must all be positive")


def split_by_identity(m: Manifest, spec: SplitSpec):
    """Partition drivers (never frames) into train/val/test.

    Drivers are shuffled by the spec seed and greedily assigned to the
    split with the largest remaining frame-count deficit.
    """
    drivers = m.driver_ids()
    if len(drivers) < 3:
        raise TooFewIdentities(f"need >= 3 drivers, got {len(drivers)}")
    counts = {d: 0 for d in drivers}
    for r in m.records:
        counts[r.driver_id] += 1
    rng = np.random.default_rng(spec.seed)
    order = [drivers[i] for i in rng.permutation(len(drivers))]
    total = len(m.records)
    targets = {"train": spec.train * total, "val": spec.val * total, "test": spec.test * total}
    filled = {k: 0.0 for k in targets}
    assignment = {}
    for d in order:
        tag = max(targets, key=lambda k: targets[k] - filled[k])
        assignment[d] = tag
        filled[tag] += counts[d]
    # every split must hold at least one driver
    for tag in targets:
        if tag not in assignment.values():
            donor_tag = max(targets, key=lambda k: sum(1 for t in assignment.values() if t == k))
            donor = min((d for d, t in assignment.items() if t == donor_tag), key=lambda d: counts[d])
            assignment[donor] = tag
    out = {}
    for tag in ("train", "val", "test"):
        recs = [r for r in m.records if assignment[r.driver_id] == tag]
        out[tag] = Manifest(recs, split_tag=tag, generation_config_hash=m.generation_config_hash)
    return out["train"], out["val"], out["test"]


def balance_undersample(m: Manifest, target: dict, seed: int = 0) -> Manifest:
    """Deletion-only rebalancing toward target class fractions (±0.5 pp)."""
    if not m.records:
        raise EmptyManifest("cannot balance an empty manifest")
    tot_target = sum(target.get(c, 0.0) for c in LABEL_CLASSES)
    if abs(tot_target - 1.0) > 1e-9:
        raise ValueError("target fractions must sum to 1")
    buckets = m.by_class()
    n = len(m.records)
    if all(abs(len(buckets[c]) / n - target.get(c, 0.0)) <= 0.005 for c in LABEL_CLASSES):
        return Manifest(list(m.records), m.split_tag, m.generation_config_hash)
    positive = [c for c in LABEL_CLASSES if target.get(c, 0.0) > 0]
    for c in positive:
        if not buckets[c]:
            raise UnachievableTarget(f"class {c} has no records but target fraction {target[c]}")
    total = min(int(len(buckets[c]) / target[c]) for c in positive)
    if total < 1:
        raise UnachievableTarget("no achievable total size")
    keep_counts = {c: int(np.floor(target[c] * total)) for c in positive}
    # hand out the rounding remainder by largest fractional part
    remainder = total - sum(keep_counts.values())
    fracs = sorted(positive, key=lambda c: (target[c] * total) % 1.0, reverse=True)
    for c in fracs:
        if remainder <= 0:
            break
        if keep_counts[c] < len(buckets[c]):
            keep_counts[c] += 1
            remainder -= 1
    rng = np.random.default_rng(seed)
    keep_ids = set()
    for c in positive:
        bucket = buckets[c]
        chosen = rng.choice(len(bucket), size=keep_counts[c], replace=False)
        keep_ids.update(bucket[i].frame_id for i in chosen)
    records = [r for r in m.records if r.frame_id in keep_ids]
    return Manifest(records, m.split_tag, m.generation_config_hash)


def sample_small_real_subset(m: Manifest, drivers: int = 5, frames_per_sequence: int = 5, seed: int = 0) -> Manifest:
    """Sample frames_per_sequence frames from 4 sequences of each of
    `drivers` drivers — the small-target-domain subset protocol."""
    by_driver = {}
    for r in m.records:
        by_driver.setdefault(r.driver_id, {}).setdefault(r.sequence_id, []).append(r)
    eligible = sorted(
        d for d, seqs in by_driver.items()
        if sum(1 for recs in seqs.values() if len(recs) >= 20) >= 4
    )
    if len(eligible) < drivers:
        raise InsufficientData(
            f"need {drivers} drivers with >= 4 sequences of >= 20 frames, found {len(eligible)}"
        )
    rng = np.random.default_rng(seed)
    picked_drivers = [eligible[i] for i in rng.choice(len(eligible), size=drivers, replace=False)]
    records = []
    for d in sorted(picked_drivers):
        seqs = sorted(s for s, recs in by_driver[d].items() if len(recs) >= 20)
        picked_seqs = [seqs[i] for i in rng.choice(len(seqs), size=4, replace=False)]
        for s in sorted(picked_seqs):
            recs = by_driver[d][s]
            if frames_per_sequence > len(recs):
                raise InsufficientData(f"sequence {s} has only {len(recs)} frames")
            idx = sorted(rng.choice(len(recs), size=frames_per_sequence, replace=False))
            records.extend(recs[i] for i in idx)
    return Manifest(records, split_tag=m.split_tag, generation_config_hash=m.generation_config_hash)


# --- manifest I/O ------------------------------------------------------------

def _record_to_line(r: FrameRecord) -> str:
    return "\t".join(
        str(v)
        for v in (
            r.frame_id, r.image_path, r.crop_rect.x, r.crop_rect.y, r.crop_rect.w,
            r.crop_rect.h, r.sequence_id, r.driver_id, r.domain,
            int(r.labels.left_on_wheel), int(r.labels.right_on_wheel),
            r.behavior, r.lighting, int(r.occluded),
        )
    )


def _record_from_fields(fields) -> FrameRecord:
    return FrameRecord(
        frame_id=fields[0],
        image_path=fields[1],
        crop_rect=CropRect(int(fields[2]), int(fields[3]), int(fields[4]), int(fields[5])),
        sequence_id=fields[6],
        driver_id=fields[7],
        domain=fields[8],
        labels=LabelPair(bool(int(fields[9])), bool(int(fields[10]))),
        behavior=fields[11],
        lighting=fields[12],
        occluded=bool(int(fields[13])),
    )


def write_manifest(m: Manifest, path):
    lines = [f"# split={m.split_tag}\tconfig_hash={m.generation_config_hash}"]
    lines.append("\t".join(COLUMNS))
    lines.extend(_record_to_line(r) for r in m.records)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_manifest(path) -> Manifest:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise ParseError(f"{path}: line 1: missing manifest metadata line")
    meta = dict(part.split("=", 1) for part in lines[0][1:].strip().split("\t") if "=" in part)
    if lines[1].split("\t") != list(COLUMNS):
        raise ParseError(f"{path}: line 2: bad column header")
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(COLUMNS):
            raise ParseError(f"{path}: line {lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")
        try:
            records.append(_record_from_fields(fields))
        except (ValueError, IndexError) as e:
            raise ParseError(f"{path}: line {lineno}: {e}") from e
    return Manifest(records, split_tag=meta.get("split", "unsplit"), generation_config_hash=meta.get("config_hash", ""))
