import numpy as np
import pytest

from maxsat_gnn import engine as E
from maxsat_gnn.cnf import CnfFormula
from maxsat_gnn.generator import GenSpec, derive_seed, generate_instance
from maxsat_gnn.graphs import batch_graphs, build_esfg, build_graph, build_nsfg
from maxsat_gnn.model import (
    Checkpoint, CheckpointError, ModelConfig, checkpoint_bytes, forward_msesfg, forward_msnsfg,
    init_model, initial_embeddings, load_checkpoint, param_shapes, parse_checkpoint, predict_assignment,
    predict_logits, save_checkpoint,
)

KINDS = ["nsfg", "esfg"]


def model(kind, d=8, T=2, dtype=np.float64):
    cfg = ModelConfig(kind, d, T, param_seed=3)
    params = init_model(cfg, dtype)
    # nonzero biases so no symmetry hides behind zeros
    rng = np.random.default_rng(0)
    for name in params.names():
        if name.endswith(".b"):
            params.params[name] += rng.uniform(-0.3, 0.3, params[name].shape).astype(dtype)
    return cfg, params


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"T": 0}, {"d": 0}, {"kind": "gcn"}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)

    def test_parameter_sets(self):
        nsfg = param_shapes(ModelConfig("nsfg", 8, 2))
        esfg = param_shapes(ModelConfig("esfg", 8, 2))
        assert nsfg["upd_lit.Wx"] == (16, 32)
        assert esfg["upd_lit.Wx"] == (8, 32)
        assert nsfg["pred.2.W"] == esfg["pred.2.W"] == (8, 1)
        assert sum(k.startswith("msg_") for k in esfg) == 2 * sum(k.startswith("msg_") for k in nsfg)


class TestForward:
    @pytest.mark.parametrize("kind", KINDS)
    def test_shape(self, example, kind):
        cfg, params = model(kind)
        assert predict_logits(build_graph(example, kind), params, cfg, 0).shape == (3,)

    def test_named_entry_points(self, example):
        cfg, params = model("nsfg")
        assert forward_msnsfg(build_nsfg(example), params, cfg, 1).shape == (3,)
        with pytest.raises(ValueError):
            forward_msesfg(build_esfg(example), params, cfg, 1)

    def test_wrong_graph_kind(self, example):
        cfg, params = model("esfg")
        with pytest.raises(ValueError):
            predict_logits(build_nsfg(example), params, cfg, 0)

    def test_one_round(self, example):
        cfg, params = model("esfg", T=1)
        assert np.all(np.isfinite(predict_logits(build_esfg(example), params, cfg, 0)))

    def test_init_embeddings(self, example):
        L, C = initial_embeddings(build_nsfg(example), "nsfg", 4, 5)
        assert L.shape == (6, 4) and C.shape == (3, 4)
        assert L.dtype == np.float32 and 0 <= L.min() and L.max() < 1
        L2, _ = initial_embeddings(build_nsfg(example), "nsfg", 4, 5)
        np.testing.assert_array_equal(L, L2)

    @pytest.mark.parametrize("kind", KINDS)
    def test_two_copies(self, example, kind):
        cfg, params = model(kind)
        g = build_graph(example, kind)
        out = predict_logits(batch_graphs([g, g]), params, cfg, [7, 7])
        assert out.shape == (6,)
        np.testing.assert_allclose(out[:3], out[3:], atol=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    def test_batch_equivalence(self, kind):
        cfg, params = model(kind, d=16, T=3, dtype=np.float32)
        forms = [generate_instance(GenSpec(1 + i % 3, 5 + i, 3 * (5 + i), i)) for i in range(8)]
        graphs = [build_graph(f, kind) for f in forms]
        seeds = [derive_seed(99, i) for i in range(8)]
        whole = predict_logits(batch_graphs(graphs), params, cfg, seeds)
        parts = np.concatenate([predict_logits(g, params, cfg, s) for g, s in zip(graphs, seeds)])
        assert np.max(np.abs(whole - parts)) <= 1e-5

    def test_all_positive_negative_side_silent(self):
        f = CnfFormula(3, ((1, 2), (2, 3), (1,)))
        g = build_esfg(f)
        tape = E.Tape()
        msgs = tape.constant(np.random.default_rng(0).normal(size=(3, 4)))
        np.testing.assert_array_equal(E.sparse_aggregate(g.adj_neg, msgs).value, 0)


def permute_variables(f: CnfFormula, perm):
    """perm[i] is the new (0-based) index of variable i + 1."""
    clauses = tuple(tuple((perm[abs(l) - 1] + 1) * (1 if l > 0 else -1) for l in c) for c in f.clauses)
    return CnfFormula(f.num_vars, clauses)


class TestSymmetries:
    @pytest.mark.parametrize("kind", KINDS)
    def test_clause_permutation_invariance(self, kind):
        cfg, params = model(kind)
        f = generate_instance(GenSpec(3, 8, 30, 5))
        L0, C0 = initial_embeddings(build_graph(f, kind), kind, cfg.d, 1)
        perm = np.random.default_rng(1).permutation(f.num_clauses)
        g = CnfFormula(f.num_vars, tuple(f.clauses[j] for j in perm))
        a = predict_logits(build_graph(f, kind), params, cfg, (L0, C0))
        b = predict_logits(build_graph(g, kind), params, cfg, (L0, C0[perm]))
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("kind", KINDS)
    def test_variable_renaming_equivariance(self, kind):
        cfg, params = model(kind)
        f = generate_instance(GenSpec(2, 9, 30, 6))
        L0, C0 = initial_embeddings(build_graph(f, kind), kind, cfg.d, 2)
        perm = np.random.default_rng(2).permutation(f.num_vars)
        L1 = np.empty_like(L0)
        if kind == "nsfg":
            for i in range(f.num_vars):
                L1[2 * perm[i]: 2 * perm[i] + 2] = L0[2 * i: 2 * i + 2]
        else:
            L1[perm] = L0
        a = predict_logits(build_graph(f, kind), params, cfg, (L0, C0))
        b = predict_logits(build_graph(permute_variables(f, perm), kind), params, cfg, (L1, C0))
        np.testing.assert_allclose(b[perm], a, rtol=0, atol=1e-10)

    def test_nsfg_polarity_flip(self):
        cfg, params = model("nsfg")
        for s in range(5):
            f = generate_instance(GenSpec(3, 10, 40, s))
            flipped = CnfFormula(f.num_vars, tuple(tuple(-l for l in c) for c in f.clauses))
            L0, C0 = initial_embeddings(build_nsfg(f), "nsfg", cfg.d, s)
            swapped = L0[np.arange(2 * f.num_vars) ^ 1]
            a = predict_logits(build_nsfg(f), params, cfg, (L0, C0))
            b = predict_logits(build_nsfg(flipped), params, cfg, (swapped, C0))
            np.testing.assert_allclose(b, -a, rtol=0, atol=1e-12)
            nonzero = a != 0
            assert np.all(np.array(predict_assignment(a))[nonzero] != np.array(predict_assignment(b))[nonzero])


class TestPredictAssignment:
    def test_examples(self):
        assert predict_assignment([2.0, -1.0, 0.0]) == (True, False, True)
        assert predict_assignment([-50.0] * 4) == (False,) * 4
        logits = np.array([0.3, -2.0, 1.0])
        a, b = predict_assignment(logits), predict_assignment(-logits)
        assert all(x != y for x, y in zip(a, b))


class TestCheckpoint:
    @pytest.mark.parametrize("kind", KINDS)
    def test_roundtrip(self, tmp_path, kind):
        cfg, params = model(kind, dtype=np.float32)
        ckpt = Checkpoint(cfg, params)
        save_checkpoint(ckpt, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.config == cfg
        assert back.params.names() == params.names()
        for name in params.names():
            np.testing.assert_array_equal(back.params[name], params[name])
        assert checkpoint_bytes(back) == checkpoint_bytes(ckpt)

    def test_truncated(self):
        cfg, params = model("nsfg", dtype=np.float32)
        data = checkpoint_bytes(Checkpoint(cfg, params))
        for cut in (len(data) - 1, len(data) // 2, 10):
            with pytest.raises(CheckpointError):
                parse_checkpoint(data[:cut])

    def test_kind_mismatch(self):
        cfg, params = model("esfg", dtype=np.float32)
        data = checkpoint_bytes(Checkpoint(cfg, params))
        with pytest.raises(CheckpointError, match="esfg"):
            parse_checkpoint(data, expect_kind="nsfg")

    def test_version_mismatch(self):
        cfg, params = model("nsfg", dtype=np.float32)
        data = checkpoint_bytes(Checkpoint(cfg, params)).replace(b"checkpoint 1\n", b"checkpoint 9\n", 1)
        with pytest.raises(CheckpointError, match="version"):
            parse_checkpoint(data)

    def test_parameter_set_must_match_config(self):
        cfg, params = model("nsfg", dtype=np.float32)
        with pytest.raises(ValueError):
            Checkpoint(ModelConfig("esfg", 8, 2), params)
        with pytest.raises(ValueError):
            Checkpoint(ModelConfig("nsfg", 16, 2), params)
