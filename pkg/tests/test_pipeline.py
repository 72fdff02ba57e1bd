import math

import numpy as np
import pytest

from wheellab import datasets as ds
from wheellab import labeling as lb
from wheellab import nn
from wheellab import pipeline as pl
from wheellab import scenegen as sg
from wheellab.errors import EmptyManifest, OneClassOnly

ARCH = nn.NetConfig(input_size=32, in_channels=3, conv_channels=(4, 8, 16), head_hidden=(8, 4))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyset")
    cfg = sg.GenerationConfig(num_sequences=12, sequence_seconds=2.0, image_size=32, seed=77)
    manifest = pl.generate_dataset(cfg, root)
    return root, manifest


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert pl.roc_auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]) == 1.0

    def test_all_ties(self):
        assert pl.roc_auc([0.5] * 6, [True, False, True, False, True, False]) == 0.5

    def test_worked_example(self):
        assert pl.roc_auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True]) == 0.75

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            scores = rng.choice([0.1, 0.25, 0.5, 0.77, 0.9], size=n)
            labels = rng.integers(0, 2, n).astype(bool)
            if labels.all() or not labels.any():
                continue
            assert pl.roc_auc(scores, labels) == brute_force_auc(scores, labels)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(0, 1, 80)
        labels = rng.integers(0, 2, 80).astype(bool)
        base = pl.roc_auc(scores, labels)
        assert pl.roc_auc(scores**3, labels) == base
        assert pl.roc_auc(1.0 / (1.0 + np.exp(-5 * scores)), labels) == base

    def test_complement_identity(self):
        rng = np.random.default_rng(2)
        scores = rng.choice([0.2, 0.5, 0.8], size=50)
        labels = rng.integers(0, 2, 50).astype(bool)
        assert pl.roc_auc(scores, labels) + pl.roc_auc(scores, ~labels) == 1.0

    def test_one_class_only(self):
        with pytest.raises(OneClassOnly):
            pl.roc_auc([0.1, 0.9], [True, True])


class TestPrecisionRecall:
    def test_perfect(self):
        assert pl.precision_recall([0.9, 0.1, 0.8], [True, False, True]) == (1.0, 1.0)

    def test_all_predicted_positive(self):
        p, r = pl.precision_recall([0.9] * 10, [True] * 3 + [False] * 7)
        assert p == pytest.approx(0.3)
        assert r == 1.0

    def test_none_predicted_positive(self):
        p, r = pl.precision_recall([0.1, 0.2], [True, False])
        assert math.isnan(p) and r == 0.0

    def test_matches_confusion_recount(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(0, 1, 200)
        labels = rng.integers(0, 2, 200).astype(bool)
        p, r = pl.precision_recall(scores, labels, threshold=0.4)
        pred = scores >= 0.4
        tp = np.sum(pred & labels)
        assert p == pytest.approx(tp / pred.sum())
        assert r == pytest.approx(tp / labels.sum())

    def test_no_positives(self):
        with pytest.raises(OneClassOnly):
            pl.precision_recall([0.9], [False])


class TestGenerateDataset:
    def test_layout_and_labels(self, tiny_dataset):
        root, m = tiny_dataset
        assert len(m) == 12 * 30
        assert (root / "manifest.tsv").exists()
        assert (root / "config.cfg").exists()
        r = m.records[0]
        assert (root / r.image_path).exists()
        back = ds.read_manifest(root / "manifest.tsv")
        assert back.records == m.records
        assert back.generation_config_hash == m.generation_config_hash

    def test_regeneration_bit_identical(self, tiny_dataset, tmp_path):
        root, m = tiny_dataset
        cfg = sg.config_from_text((root / "config.cfg").read_text())
        again = pl.generate_dataset(cfg, tmp_path / "again")
        assert again.records[0].image_path == m.records[0].image_path
        sample = m.records[::37]
        for r in sample:
            a = (root / r.image_path).read_bytes()
            b = (tmp_path / "again" / r.image_path).read_bytes()
            assert a == b


def quick_cfg(max_batches=60, seed=0, batch_size=16, lr=2e-3, finetune_batches=40):
    return pl.TrainConfig(
        optimizer=nn.OptimizerConfig(lr=lr, weight_decay=0.01, batch_size=batch_size),
        max_batches=max_batches,
        finetune_batches=finetune_batches,
        eval_every=20,
        seed=seed,
    )


class TestTrain:
    def test_loss_decreases(self, tiny_dataset):
        root, m = tiny_dataset
        tr, va, _ = ds.split_by_identity(m, ds.SplitSpec(0.6, 0.2, 0.2, seed=0))
        params = nn.init_params(ARCH, seed=1)
        _, history = pl.train(params, tr, va, quick_cfg(max_batches=80), root)
        first = np.mean([h["loss"] for h in history[:10]])
        last = np.mean([h["loss"] for h in history[-10:]])
        assert last < first

    def test_memorizes_single_frame(self, tiny_dataset):
        root, m = tiny_dataset
        rec = m.records[0]
        single = ds.Manifest([rec])
        params = nn.init_params(ARCH, seed=2)
        cfg = pl.TrainConfig(
            optimizer=nn.OptimizerConfig(lr=3e-3, weight_decay=0.0, batch_size=1),
            max_batches=500,
            eval_every=500,
            seed=0,
        )
        best, history = pl.train(params, single, single, cfg, root)
        assert history[-1]["loss"] < 0.05

    def test_deterministic_history(self, tiny_dataset):
        root, m = tiny_dataset
        tr, va, _ = ds.split_by_identity(m, ds.SplitSpec(0.6, 0.2, 0.2, seed=0))
        params = nn.init_params(ARCH, seed=1)
        _, h1 = pl.train(params.copy(), tr, va, quick_cfg(max_batches=40), root)
        _, h2 = pl.train(params.copy(), tr, va, quick_cfg(max_batches=40), root)
        assert h1 == h2

    def test_empty_manifest(self, tiny_dataset):
        root, m = tiny_dataset
        with pytest.raises(EmptyManifest):
            pl.train(nn.init_params(ARCH), ds.Manifest([]), m, quick_cfg(), root)


class TestFinetuneMixed:
    def test_batch_composition_even(self, tiny_dataset):
        root, m = tiny_dataset
        half = len(m) // 2
        synth = ds.Manifest(m.records[:half])
        real = ds.Manifest(m.records[half:])
        log = []
        pl.finetune_mixed(nn.init_params(ARCH), synth, real, quick_cfg(finetune_batches=25), root, batch_log=log)
        assert len(log) == 25
        assert all(entry == (8, 8) for entry in log)

    def test_odd_batch_rounds_up_synthetic(self, tiny_dataset):
        root, m = tiny_dataset
        synth = ds.Manifest(m.records[:40])
        real = ds.Manifest(m.records[40:80])
        log = []
        cfg = pl.TrainConfig(
            optimizer=nn.OptimizerConfig(lr=1e-3, batch_size=7),
            max_batches=1,
            finetune_batches=10,
            eval_every=1,
        )
        pl.finetune_mixed(nn.init_params(ARCH), synth, real, cfg, root, batch_log=log)
        assert all(entry == (4, 3) for entry in log)

    def test_tiny_real_pool_resamples(self, tiny_dataset):
        root, m = tiny_dataset
        synth = ds.Manifest(m.records[:60])
        real = ds.Manifest(m.records[60:63])  # 3 real frames, 8 slots per batch
        log = []
        pl.finetune_mixed(nn.init_params(ARCH), synth, real, quick_cfg(finetune_batches=5), root, batch_log=log)
        assert all(entry == (8, 8) for entry in log)

    def test_empty_pool(self, tiny_dataset):
        root, m = tiny_dataset
        with pytest.raises(EmptyManifest):
            pl.finetune_mixed(nn.init_params(ARCH), m, ds.Manifest([]), quick_cfg(), root)


class TestEvaluate:
    def test_constant_half_model(self, tiny_dataset):
        root, m = tiny_dataset
        params = nn.init_params(ARCH, seed=0)
        for k in params.values:
            params.values[k] = np.zeros_like(params.values[k])
        report = pl.evaluate(params, m, root)
        assert report.auc_left == 0.5 and report.auc_right == 0.5
        assert report.n_frames == len(m)

    def test_labels_as_scores_is_perfect(self, tiny_dataset):
        _, m = tiny_dataset
        yl = np.array([r.labels.left_on_wheel for r in m.records], dtype=float)
        yr = np.array([r.labels.right_on_wheel for r in m.records], dtype=float)
        report = pl.report_from_scores(yl, yr, yl, yr)
        assert report.auc_left == 1.0 and report.auc_right == 1.0
        for c, v in report.per_class_recall.items():
            assert math.isnan(v) or v == 1.0

    def test_order_independent(self, tiny_dataset):
        root, m = tiny_dataset
        params = nn.init_params(ARCH, seed=3)
        a = pl.evaluate(params, m, root)
        rng = np.random.default_rng(0)
        shuffled = ds.Manifest([m.records[i] for i in rng.permutation(len(m))])
        b = pl.evaluate(params, shuffled, root)
        assert a == b

    def test_per_class_recall_recount(self, tiny_dataset):
        _, m = tiny_dataset
        rng = np.random.default_rng(4)
        sl = rng.uniform(0, 1, len(m))
        sr = rng.uniform(0, 1, len(m))
        yl = np.array([r.labels.left_on_wheel for r in m.records], dtype=float)
        yr = np.array([r.labels.right_on_wheel for r in m.records], dtype=float)
        report = pl.report_from_scores(sl, sr, yl, yr)
        for c in lb.LABEL_CLASSES:
            hits = tot = 0
            for i, r in enumerate(m.records):
                if r.labels.joint_class != c:
                    continue
                tot += 1
                pred = lb.LabelPair(sl[i] >= 0.5, sr[i] >= 0.5)
                hits += int(pred.joint_class == c)
            if tot == 0:
                assert math.isnan(report.per_class_recall[c])
            else:
                assert report.per_class_recall[c] == pytest.approx(hits / tot)


class TestExportErrors:
    def zero_model(self):
        params = nn.init_params(ARCH, seed=0)
        for k in params.values:
            params.values[k] = np.zeros_like(params.values[k])
        return params  # predicts exactly 0.5 -> (on, on) everywhere

    def test_count_matches_recount(self, tiny_dataset, tmp_path):
        root, m = tiny_dataset
        errors = pl.export_errors(self.zero_model(), m, tmp_path / "err.tsv", root)
        expected = sum(1 for r in m.records if r.labels.joint_class != "on_on")
        assert len(errors) == expected
        assert all(e.category == "unassigned" for e in errors)

    def test_round_trip(self, tiny_dataset, tmp_path):
        root, m = tiny_dataset
        path = tmp_path / "err.tsv"
        errors = pl.export_errors(self.zero_model(), m, path, root)
        back = pl.read_error_manifest(path)
        assert len(back) == len(errors)
        for a, b in zip(errors, back):
            assert a.frame_id == b.frame_id
            assert a.predicted == b.predicted
            assert a.score_left == b.score_left

    def test_sorted_by_confidence(self, tiny_dataset, tmp_path):
        root, m = tiny_dataset
        params = nn.init_params(ARCH, seed=9)
        errors = pl.export_errors(params, m, tmp_path / "err.tsv", root)
        if len(errors) < 2:
            pytest.skip("model made too few errors to check ordering")

        def conf(e):
            c = 0.0
            if e.predicted.left_on_wheel != e.labels.left_on_wheel:
                c = max(c, abs(e.score_left - 0.5))
            if e.predicted.right_on_wheel != e.labels.right_on_wheel:
                c = max(c, abs(e.score_right - 0.5))
            return c

        confs = [conf(e) for e in errors]
        assert confs == sorted(confs, reverse=True)


class TestReportFiles:
    def test_write_report(self, tmp_path):
        report = pl.EvalReport(0.9, 0.8, 0.7, 0.6, 0.5, 0.4, {c: 0.5 for c in lb.LABEL_CLASSES}, 10)
        pl.write_report(report, [{"batch": 1, "loss": 2.0}], tmp_path / "rep")
        text = (tmp_path / "rep.txt").read_text()
        assert "auc_left = 0.9" in text
        import json

        payload = json.loads((tmp_path / "rep.json").read_text())
        assert payload["report"]["n_frames"] == 10
        assert payload["history"][0]["loss"] == 2.0
