import json

import pytest

from maxsat_gnn.generator import GenSpec, generate_dataset
from maxsat_gnn.model import ModelConfig, checkpoint_bytes, load_checkpoint
from maxsat_gnn.solver import LabelRecord, label_dataset
from maxsat_gnn.train import (
    EvalMetrics, InstanceMetrics, LabeledInstance, TrainConfig, baseline_eval, cross_eval, evaluate,
    format_grid, format_sweep, grid_tsv, layer_sweep, load_dataset, pack_batches, score, train,
)


def toy_config(root, out=None, **kw):
    model = ModelConfig(kw.pop("kind", "nsfg"), kw.pop("d", 16), kw.pop("T", 5), 0)
    return TrainConfig(str(root), model, lr=kw.pop("lr", 1e-3), epochs=kw.pop("epochs", 5),
                       out_dir=str(out) if out else None, **kw)


class TestMetrics:
    def test_arithmetic(self):
        m = InstanceMetrics("a", 600, 598, 18, 20)
        assert m.gap == 2
        assert abs(m.ratio - 0.99666) < 1e-4
        assert m.accuracy == 0.9

    def test_witness_scores_perfectly(self, example):
        inst = LabeledInstance("f", example, LabelRecord("f", 3, (False, True, False)))
        m = score(inst, (False, True, False))
        assert (m.gap, m.ratio, m.accuracy) == (0, 1.0, 1.0)

    def test_identities_and_means(self, example):
        inst = LabeledInstance("f", example, LabelRecord("f", 3, (False, True, False)))
        recs = [score(inst, a) for a in [(True, True, True), (False, True, False)]]
        for r in recs:
            assert r.gap == r.optimum - r.satisfied
            assert abs(r.ratio * r.optimum - r.satisfied) < 1e-12
        ev = EvalMetrics(recs)
        assert ev.gap == 0.5
        assert abs(ev.ratio - (2 / 3 + 1) / 2) < 1e-12
        assert abs(ev.accuracy - (1 / 3 + 1) / 2) < 1e-12

    def test_cell_format(self):
        recs = [InstanceMetrics("a", 500, 499, 919, 1000), InstanceMetrics("b", 500, 499, 919, 1000)]
        ev = EvalMetrics(recs)
        assert ev.cell() == "1.00 (99.8%) / 91.9%"


class TestBatches:
    def test_pack(self):
        assert pack_batches([3, 3, 3, 5], range(4), 6) == [[0, 1], [2], [3]]
        assert pack_batches([10, 1], [1, 0], 4) == [[1], [0]]


class TestBaselines:
    def test_dla_half_each_instance(self, toy_dataset):
        ev = baseline_eval(toy_dataset, "dla", split="all")
        assert all(r.ratio >= 0.5 for r in ev.records)
        assert len(ev.records) == 16

    def test_random_reproducible(self, toy_dataset):
        a = baseline_eval(toy_dataset, "random", split="all", seed=3)
        b = baseline_eval(toy_dataset, "random", split="all", seed=3)
        assert a.records == b.records

    def test_all_true_on_positive_instances(self, tmp_path):
        ds_dir = tmp_path / "ds"
        manifest = generate_dataset(GenSpec(1, 2, 2, 0), 1, ds_dir)
        # replace the generated instance by an all-positive one
        (ds_dir / manifest.entries[0].path).write_text("p cnf 2 2\n1 2 0\n2 0\n")
        label_dataset(ds_dir)
        assert baseline_eval(ds_dir, "all-true", split="all").ratio == 1.0

    def test_unknown(self, toy_dataset):
        with pytest.raises(ValueError):
            baseline_eval(toy_dataset, "oracle")


class TestDataset:
    def test_unlabeled(self, tmp_path):
        generate_dataset(GenSpec(2, 5, 10, 0), 4, tmp_path)
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)

    def test_splits(self, toy_dataset):
        ds = load_dataset(toy_dataset)
        assert [len(ds.split(s)) for s in ("train", "val", "test", "all")] == [14, 1, 1, 16]


class TestTrain:
    def test_zero_epochs(self, toy_dataset):
        with pytest.raises(ValueError):
            toy_config(toy_dataset, epochs=0)

    def test_bad_lr(self, toy_dataset):
        with pytest.raises(ValueError):
            toy_config(toy_dataset, lr=0.0)

    def test_loss_decreases(self, toy_dataset):
        result = train(toy_config(toy_dataset, epochs=5))
        losses = [r["train_loss"] for r in result.log]
        assert all(b < a for a, b in zip(losses, losses[1:])), losses
        assert 1 <= result.best_epoch <= 5

    def test_outputs_and_determinism(self, toy_dataset, tmp_path):
        cfg_a = toy_config(toy_dataset, tmp_path / "a", kind="esfg", epochs=3)
        cfg_b = toy_config(toy_dataset, tmp_path / "b", kind="esfg", epochs=3)
        ra, rb = train(cfg_a), train(cfg_b)
        log_a = (tmp_path / "a" / "train_log.jsonl").read_text().splitlines()
        log_b = (tmp_path / "b" / "train_log.jsonl").read_text().splitlines()
        header = json.loads(log_a[0])
        assert header["record"] == "config" and header["model"]["kind"] == "esfg"
        assert len(log_a) == 4
        assert log_a[1:] == log_b[1:]
        for name in ("best.ckpt", "final.ckpt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert checkpoint_bytes(load_checkpoint(tmp_path / "a" / "best.ckpt")) == checkpoint_bytes(ra.checkpoint)
        ev = evaluate(ra.checkpoint, toy_dataset, split="all")
        assert len(ev.records) == 16 and 0 < ev.ratio <= 1

    def test_layer_sweep_and_cross(self, toy_dataset, tmp_path):
        rows = layer_sweep(toy_config(toy_dataset, tmp_path, d=8, epochs=1), [1, 2])
        assert [T for T, _ in rows] == [1, 2]
        assert (tmp_path / "T1" / "best.ckpt").exists()
        assert format_sweep(rows).count("\n") == 3
        ckpts = [(f"T{T}", load_checkpoint(tmp_path / f"T{T}" / "best.ckpt")) for T in (1, 2)]
        ds = load_dataset(toy_dataset)
        grid = cross_eval(ckpts, [ds, ds, ds])
        assert len(grid) == 2 and all(len(row) == 3 for row in grid)
        table = format_grid(["T1", "T2"], ["a", "b", "c"], grid)
        assert table.count("%") == 2 * 3 * 2
        assert grid_tsv(["T1", "T2"], ["a", "b", "c"], grid).count("\n") == 7
