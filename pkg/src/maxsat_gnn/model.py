"""MS-NSFG and MS-ESFG: LSTM message passing over factor graphs.

One parameter set is shared by all T rounds. Each round first updates the
clauses from their literals, then the literals from the clauses, both
reading the embeddings of the previous round. Initial embeddings are drawn
from U(0, 1) per instance from a seed; LSTM cell states start at zero.

MS-NSFG scores both literal nodes of a variable with the prediction MLP and
uses the difference, so exchanging every x with ¬x (initial embeddings
swapped along) negates the logits exactly.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine as E
from .engine import ParamStore, Tape, Var
from .generator import derive_seed
from .graphs import BatchedGraph, Esfg, Nsfg

KINDS = ("nsfg", "esfg")
CHECKPOINT_MAGIC = "maxsat-gnn checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "nsfg"
    d: int = 64
    T: int = 10
    param_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        if self.d < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {self.d}")
        if self.T < 1:
            raise ValueError(f"layer count T must be >= 1, got {self.T}")


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    d = config.d
    shapes: dict[str, tuple[int, int]] = {}
    if config.kind == "nsfg":
        shapes.update(E.mlp_shapes("msg_lit", d, d, d))
        shapes.update(E.mlp_shapes("msg_clause", d, d, d))
        shapes.update(E.lstm_shapes("upd_clause", d, d))
        # literal input: aggregated clause message next to the negated literal's embedding
        shapes.update(E.lstm_shapes("upd_lit", 2 * d, d))
    else:
        for name in ("msg_lit_pos", "msg_lit_neg", "msg_clause_pos", "msg_clause_neg"):
            shapes.update(E.mlp_shapes(name, d, d, d))
        shapes.update(E.lstm_shapes("upd_clause", d, d))
        shapes.update(E.lstm_shapes("upd_lit", d, d))
    shapes.update(E.mlp_shapes("pred", d, d, 1))
    return shapes


def init_model(config: ModelConfig, dtype=np.float32) -> ParamStore:
    return E.init_params(param_shapes(config), config.param_seed, dtype)


def _check_params(params: ParamStore, config: ModelConfig) -> None:
    expected = param_shapes(config)
    got = params.shapes()
    if set(got) != set(expected):
        raise ValueError(f"parameters do not match a {config.kind} model: "
                         f"missing {sorted(set(expected) - set(got))}, extra {sorted(set(got) - set(expected))}")
    for name, shape in expected.items():
        if tuple(got[name]) != shape:
            raise ValueError(f"parameter {name} has shape {got[name]}, expected {shape}")


def _row_counts(graph, kind: str) -> list[tuple[int, int]]:
    """(embedding rows for literals/variables, clause rows) per instance."""
    sizes = graph.sizes if isinstance(graph, BatchedGraph) else [(graph.num_vars, graph.num_clauses)]
    per_var = 2 if kind == "nsfg" else 1
    return [(per_var * n, m) for n, m in sizes]


def initial_embeddings(graph, kind: str, d: int, seeds) -> tuple[np.ndarray, np.ndarray]:
    """U(0, 1) literal and clause embeddings, drawn instance by instance.

    ``seeds`` is one seed per instance, or a single int: used as is for a
    lone graph, and expanded with :func:`derive_seed` for a batch.
    """
    rows = _row_counts(graph, kind)
    if isinstance(seeds, (int, np.integer)):
        seeds = [int(seeds)] if len(rows) == 1 and not isinstance(graph, BatchedGraph) else \
            [derive_seed(int(seeds), i) for i in range(len(rows))]
    seeds = list(seeds)
    if len(seeds) != len(rows):
        raise ValueError(f"{len(rows)} instances but {len(seeds)} init seeds")
    lits, clauses = [], []
    for (nl, nc), s in zip(rows, seeds):
        rng = np.random.default_rng(s)
        lits.append(rng.random((nl, d), dtype=np.float32))
        clauses.append(rng.random((nc, d), dtype=np.float32))
    return np.concatenate(lits), np.concatenate(clauses)


def _unwrap(graph, kind: str):
    g = graph.graph if isinstance(graph, BatchedGraph) else graph
    want = Nsfg if kind == "nsfg" else Esfg
    if not isinstance(g, want):
        raise ValueError(f"{kind} model needs a {want.__name__} graph, got {type(g).__name__}")
    return g


def forward(graph, params: dict[str, Var], config: ModelConfig, init) -> Var:
    """Per-variable logits (column vector) recorded on the params' tape.

    ``init`` is a seed (or per-instance seeds), or an explicit
    ``(literal_embeddings, clause_embeddings)`` pair.
    """
    g = _unwrap(graph, config.kind)
    tape = next(iter(params.values())).tape
    dtype = next(iter(params.values())).value.dtype
    if isinstance(init, tuple) and len(init) == 2 and isinstance(init[0], np.ndarray):
        L0, C0 = init
    else:
        L0, C0 = initial_embeddings(graph, config.kind, config.d, init)
    nl = 2 * g.num_vars if config.kind == "nsfg" else g.num_vars
    if L0.shape != (nl, config.d) or C0.shape != (g.num_clauses, config.d):
        raise ValueError(f"initial embeddings {L0.shape}, {C0.shape} do not fit the graph")
    L = tape.constant(L0.astype(dtype))
    C = tape.constant(C0.astype(dtype))
    cL = tape.constant(np.zeros_like(L.value))
    cC = tape.constant(np.zeros_like(C.value))
    step = _nsfg_round if config.kind == "nsfg" else _esfg_round
    for _ in range(config.T):
        L, cL, C, cC = step(g, params, L, cL, C, cC)
    if config.kind == "esfg":
        return E.mlp_forward(L, params, "pred")
    # score every literal node; a variable's logit is its positive minus its negative literal's score
    scores = E.mlp_forward(L, params, "pred")
    return E.sub(E.gather_rows(scores, np.arange(0, nl, 2)), E.gather_rows(scores, np.arange(1, nl, 2)))


def _nsfg_round(g: Nsfg, p, L, cL, C, cC):
    to_clauses = E.sparse_aggregate(g.adj, E.mlp_forward(L, p, "msg_lit"), g.adj_t)
    C_new, cC_new = E.lstm_cell_step(to_clauses, C, cC, p, "upd_clause")
    to_lits = E.sparse_aggregate(g.adj_t, E.mlp_forward(C, p, "msg_clause"), g.adj)
    lit_in = E.concat_cols([to_lits, E.gather_rows(L, g.flip)])
    L_new, cL_new = E.lstm_cell_step(lit_in, L, cL, p, "upd_lit")
    return L_new, cL_new, C_new, cC_new


def _esfg_round(g: Esfg, p, L, cL, C, cC):
    to_clauses = E.add(
        E.sparse_aggregate(g.adj_pos, E.mlp_forward(L, p, "msg_lit_pos"), g.adj_pos_t),
        E.sparse_aggregate(g.adj_neg, E.mlp_forward(L, p, "msg_lit_neg"), g.adj_neg_t),
    )
    C_new, cC_new = E.lstm_cell_step(to_clauses, C, cC, p, "upd_clause")
    to_vars = E.add(
        E.sparse_aggregate(g.adj_pos_t, E.mlp_forward(C, p, "msg_clause_pos"), g.adj_pos),
        E.sparse_aggregate(g.adj_neg_t, E.mlp_forward(C, p, "msg_clause_neg"), g.adj_neg),
    )
    L_new, cL_new = E.lstm_cell_step(to_vars, L, cL, p, "upd_lit")
    return L_new, cL_new, C_new, cC_new


def predict_logits(graph, params: ParamStore, config: ModelConfig, init) -> np.ndarray:
    """Forward pass without keeping gradients; returns a flat logit array."""
    _check_params(params, config)
    tape = Tape()
    out = forward(graph, tape.bind(params.params), config, init)
    return out.value[:, 0].copy()


def forward_msnsfg(graph, params: ParamStore, config: ModelConfig, init_seed) -> np.ndarray:
    if config.kind != "nsfg":
        raise ValueError("forward_msnsfg needs an nsfg config")
    return predict_logits(graph, params, config, init_seed)


def forward_msesfg(graph, params: ParamStore, config: ModelConfig, init_seed) -> np.ndarray:
    if config.kind != "esfg":
        raise ValueError("forward_msesfg needs an esfg config")
    return predict_logits(graph, params, config, init_seed)


def predict_assignment(logits) -> tuple[bool, ...]:
    """True where sigmoid(logit) >= 0.5, i.e. logit >= 0."""
    return tuple(bool(z >= 0) for z in np.asarray(logits).reshape(-1))


# ---- checkpoints ------------------------------------------------------------

class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ParamStore
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        _check_params(self.params, self.config)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    """Text header, then each parameter as little-endian float32 in header order.

    Header lines: ``maxsat-gnn checkpoint <version>``, the config as JSON,
    ``param <name> <rows> <cols>`` per parameter, and ``end``.
    """
    head = [f"{CHECKPOINT_MAGIC} {ckpt.version}", json.dumps(asdict(ckpt.config), sort_keys=True)]
    payload = io.BytesIO()
    for name, value in ckpt.params.params.items():
        rows, cols = value.shape
        head.append(f"param {name} {rows} {cols}")
        payload.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    head.append("end")
    return ("\n".join(head) + "\n").encode("ascii") + payload.getvalue()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def parse_checkpoint(data: bytes, expect_kind: str | None = None) -> Checkpoint:
    marker = b"\nend\n"
    cut = data.find(marker)
    if cut < 0:
        raise CheckpointError("corrupt checkpoint: header is not terminated")
    try:
        lines = data[:cut].decode("ascii").split("\n")
    except UnicodeDecodeError:
        raise CheckpointError("corrupt checkpoint: header is not ASCII") from None
    first = lines[0].rsplit(" ", 1)
    if len(first) != 2 or first[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a maxsat-gnn checkpoint")
    if first[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {first[1]}, expected {CHECKPOINT_VERSION}")
    try:
        config = ModelConfig(**json.loads(lines[1]))
    except (IndexError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: bad config ({exc})") from None
    if expect_kind is not None and config.kind != expect_kind:
        raise CheckpointError(f"checkpoint holds a {config.kind} model, expected {expect_kind}")
    table = []
    for line in lines[2:]:
        parts = line.split()
        if len(parts) != 4 or parts[0] != "param":
            raise CheckpointError(f"corrupt checkpoint: bad header line {line!r}")
        table.append((parts[1], int(parts[2]), int(parts[3])))
    body = data[cut + len(marker):]
    need = sum(4 * r * c for _, r, c in table)
    if len(body) != need:
        raise CheckpointError(f"corrupt checkpoint: payload has {len(body)} bytes, header needs {need}")
    params, pos = {}, 0
    for name, r, c in table:
        params[name] = np.frombuffer(body, dtype="<f4", count=r * c, offset=pos).reshape(r, c).astype(np.float32)
        pos += 4 * r * c
    try:
        return Checkpoint(config, ParamStore(params), CHECKPOINT_VERSION)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None


def load_checkpoint(path, expect_kind: str | None = None) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes(), expect_kind)
