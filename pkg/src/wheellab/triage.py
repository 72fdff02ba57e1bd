"""Error triage: serve misclassified frames to a human reviewer, persist
category judgments, and turn the tallies into the next generation config.

The category store is a line-delimited JSON append log, fsynced before a
write is acknowledged. Re-reading applies last-write-wins per frame.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field, replace

from fastapi import FastAPI, HTTPException, Request, Response

from . import pipeline as pl
from . import render as rd
from . import scenegen as sg
from .errors import InvalidDelta, NoCategorizedErrors, ParseError

ASSIGNABLE_CATEGORIES = ("occlusion", "both_off", "opposite_side", "blur", "other")

# how strongly a category's error share nudges its remedy
WEIGHT_STEP = 0.15
MOTION_BLUR_STEP = 3
DEFAULT_SEQUENCE_BUDGET = 3  # dominant category ~ 450 frames at 150 frames/seq


@dataclass
class TriageSession:
    errors: list  # pipeline.ErrorRecord, manifest order
    store_path: str
    base_config: sg.GenerationConfig
    data_root: str
    categories: dict = field(default_factory=dict)  # frame_id -> entry
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def open(cls, error_manifest_path, store_path, base_config_path, data_root):
        errors = pl.read_error_manifest(error_manifest_path)
        with open(base_config_path, "r", encoding="utf-8") as f:
            base = sg.config_from_text(f.read())
        session = cls(errors, os.fspath(store_path), base, os.fspath(data_root))
        session._replay_store()
        return session

    def _replay_store(self):
        known = {e.frame_id for e in self.errors}
        if not os.path.exists(self.store_path):
            return
        with open(self.store_path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(f"{self.store_path}: line {lineno}: {e}") from e
                if entry.get("frame_id") not in known:
                    raise ParseError(
                        f"{self.store_path}: line {lineno}: unknown frame_id {entry.get('frame_id')!r}"
                    )
                if entry.get("category") not in ASSIGNABLE_CATEGORIES:
                    raise ParseError(
                        f"{self.store_path}: line {lineno}: bad category {entry.get('category')!r}"
                    )
                self.categories[entry["frame_id"]] = entry  # last write wins

    def error_by_id(self, frame_id):
        for e in self.errors:
            if e.frame_id == frame_id:
                return e
        return None

    def category_of(self, frame_id) -> str:
        entry = self.categories.get(frame_id)
        return entry["category"] if entry else "unassigned"

    def assign(self, frame_id: str, category: str, note: str = ""):
        """Durably append one judgment; serialized across threads."""
        if category not in ASSIGNABLE_CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        if self.error_by_id(frame_id) is None:
            raise KeyError(frame_id)
        entry = {"frame_id": frame_id, "category": category, "note": note, "timestamp": time.time()}
        payload = json.dumps(entry) + "\n"
        with self._lock:
            with open(self.store_path, "a", encoding="utf-8") as f:
                f.write(payload)
                f.flush()
                os.fsync(f.fileno())
            self.categories[frame_id] = entry
        return entry

    def tallies(self) -> dict:
        counts = {c: 0 for c in ASSIGNABLE_CATEGORIES}
        for entry in self.categories.values():
            counts[entry["category"]] += 1
        return counts


@dataclass(frozen=True)
class IterationPlan:
    counts: dict
    behavior_weight_deltas: dict  # behavior name -> additive delta
    added_sequences: int
    enable_cross_reach: bool
    motion_blur_frames_delta: int

    def is_empty(self) -> bool:
        return (
            self.added_sequences == 0
            and not self.enable_cross_reach
            and self.motion_blur_frames_delta == 0
            and all(v == 0 for v in self.behavior_weight_deltas.values())
        )


def build_iteration_plan(session: TriageSession, sequence_budget: int = DEFAULT_SEQUENCE_BUDGET) -> IterationPlan:
    """Deterministic mapping from category tallies to config remedies.

    Each category's share of the categorized errors scales its remedy;
    a category with zero errors contributes no delta.
    """
    counts = session.tallies()
    total = sum(counts.values())
    if total == 0:
        raise NoCategorizedErrors("categorize at least one error first")
    share = {c: counts[c] / total for c in counts}
    weight_deltas = {}
    if counts["both_off"]:
        weight_deltas["both_hands_off"] = WEIGHT_STEP * share["both_off"]
    if counts["occlusion"]:
        # texting is the crossover behavior: the phone hand crosses the wheel
        weight_deltas["texting"] = WEIGHT_STEP * share["occlusion"]
    added = math.ceil(share["both_off"] * sequence_budget) if counts["both_off"] else 0
    blur_delta = math.ceil(MOTION_BLUR_STEP * share["blur"]) if counts["blur"] else 0
    return IterationPlan(
        counts=counts,
        behavior_weight_deltas=weight_deltas,
        added_sequences=added,
        enable_cross_reach=counts["opposite_side"] > 0,
        motion_blur_frames_delta=blur_delta,
    )


def apply_plan(plan: IterationPlan, base: sg.GenerationConfig) -> sg.GenerationConfig:
    """New config with renormalized weights; the base is never mutated."""
    if plan.added_sequences < 0 or plan.motion_blur_frames_delta < 0:
        raise InvalidDelta("negative deltas are not allowed")
    for name, delta in plan.behavior_weight_deltas.items():
        if name not in sg.BEHAVIORS:
            raise InvalidDelta(f"unknown behavior {name!r}")
        if delta < 0:
            raise InvalidDelta(f"negative weight delta for {name}")
    weights = dict(base.behavior_weights)
    for name, delta in plan.behavior_weight_deltas.items():
        weights[name] = weights.get(name, 0.0) + delta
    total = sum(weights.values())
    weights = {k: v / total for k, v in weights.items()}
    return replace(
        base,
        behavior_weights=weights,
        num_sequences=base.num_sequences + plan.added_sequences,
        cross_reach=base.cross_reach or plan.enable_cross_reach,
        motion_blur_frames=base.motion_blur_frames + plan.motion_blur_frames_delta,
    )


# --- HTTP service ------------------------------------------------------------

def _error_json(session: TriageSession, e) -> dict:
    return {
        "frame_id": e.frame_id,
        "score_left": e.score_left,
        "score_right": e.score_right,
        "label_left": e.labels.left_on_wheel,
        "label_right": e.labels.right_on_wheel,
        "pred_left": e.predicted.left_on_wheel,
        "pred_right": e.predicted.right_on_wheel,
        "behavior": e.record.behavior,
        "lighting": e.record.lighting,
        "occluded": e.record.occluded,
        "category": session.category_of(e.frame_id),
    }


def _plan_json(plan: IterationPlan) -> dict:
    return {
        "counts": plan.counts,
        "behavior_weight_deltas": plan.behavior_weight_deltas,
        "added_sequences": plan.added_sequences,
        "enable_cross_reach": plan.enable_cross_reach,
        "motion_blur_frames_delta": plan.motion_blur_frames_delta,
    }


def create_app(session: TriageSession, config_out_dir=None, static_dir=None):
    """FastAPI app over a triage session.

    Endpoints: GET /errors, GET /frames/{id}, POST /errors/{id}/category,
    GET /plan, POST /plan/apply. Mounts the reviewer UI at / when a
    static_dir is given.
    """
    app = FastAPI(title="wheel error triage")
    out_dir = os.fspath(config_out_dir) if config_out_dir else os.path.dirname(session.store_path)

    @app.get("/errors")
    def list_errors(page: int = 1, per_page: int = 20):
        if page < 1 or per_page < 1:
            raise HTTPException(status_code=400, detail="page and per_page must be >= 1")
        start = (page - 1) * per_page
        chunk = session.errors[start : start + per_page]
        return {
            "errors": [_error_json(session, e) for e in chunk],
            "page": page,
            "per_page": per_page,
            "total": len(session.errors),
        }

    @app.get("/frames/{frame_id}")
    def get_frame(frame_id: str):
        e = session.error_by_id(frame_id)
        if e is None:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id}")
        img = rd.read_ppm(os.path.join(session.data_root, e.record.image_path))
        return Response(content=rd.encode_png(img), media_type="image/png")

    @app.post("/errors/{frame_id}/category")
    async def set_category(frame_id: str, request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body must be JSON")
        if not isinstance(body, dict) or "category" not in body:
            raise HTTPException(status_code=400, detail="body must carry a category")
        try:
            entry = session.assign(frame_id, body["category"], body.get("note", ""))
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id}")
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        return {"ok": True, "frame_id": frame_id, "category": entry["category"]}

    @app.get("/plan")
    def get_plan():
        try:
            plan = build_iteration_plan(session)
        except NoCategorizedErrors as err:
            raise HTTPException(status_code=409, detail=str(err))
        return _plan_json(plan)

    @app.post("/plan/apply")
    def post_apply():
        try:
            plan = build_iteration_plan(session)
        except NoCategorizedErrors as err:
            raise HTTPException(status_code=409, detail=str(err))
        new_cfg = apply_plan(plan, session.base_config)
        session.base_config = new_cfg  # further applies stack on this one
        cfg_hash = sg.config_hash(new_cfg)
        path = os.path.join(out_dir, f"config_{cfg_hash}.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(sg.config_to_text(new_cfg))
        return {"path": path, "hash": cfg_hash, "plan": _plan_json(plan)}

    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=os.fspath(static_dir), html=True), name="ui")

    return app


def serve(session: TriageSession, bind_address: str = "127.0.0.1:8077", config_out_dir=None, static_dir=None):
    """Run the service until interrupted."""
    import uvicorn

    host, _, port = bind_address.partition(":")
    app = create_app(session, config_out_dir=config_out_dir, static_dir=static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8077), log_level="warning")
