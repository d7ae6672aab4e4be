"""Graph-convolutional item embeddings and the recurrent user-state network.

Two equivalent GCN paths exist: a per-item receptive-field unroll
(item_embedding) and a whole-graph propagation (propagate_all) used by
the batched trainer. They compute the same values; the tests pin that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .graph import KnowledgeGraph


def _uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class GcnParameters:
    """Per-hop (neighbor weight, self weight) pairs, outermost hop last."""

    layers: list[tuple[Tensor, Tensor]]

    @property
    def hops(self) -> int:
        return len(self.layers)

    @classmethod
    def init(cls, dim: int, hops: int, rng: np.random.Generator) -> "GcnParameters":
        layers = [(Tensor(_uniform(rng, dim, dim), requires_grad=True),
                   Tensor(_uniform(rng, dim, dim), requires_grad=True))
                  for _ in range(hops)]
        return cls(layers=layers)

    def tensors(self) -> list[Tensor]:
        return [t for pair in self.layers for t in pair]


@dataclass
class GruParameters:
    """Gated recurrent cell weights; hidden size equals the input size."""

    w_update: Tensor
    u_update: Tensor
    b_update: Tensor
    w_reset: Tensor
    u_reset: Tensor
    b_reset: Tensor
    w_cand: Tensor
    u_cand: Tensor
    b_cand: Tensor

    @property
    def dim(self) -> int:
        return self.w_update.shape[0]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "GruParameters":
        def w():
            return Tensor(_uniform(rng, dim, dim), requires_grad=True)

        def b():
            return Tensor(np.zeros(dim), requires_grad=True)

        return cls(w_update=w(), u_update=w(), b_update=b(),
                   w_reset=w(), u_reset=w(), b_reset=b(),
                   w_cand=w(), u_cand=w(), b_cand=b())

    def tensors(self) -> list[Tensor]:
        return [self.w_update, self.u_update, self.b_update,
                self.w_reset, self.u_reset, self.b_reset,
                self.w_cand, self.u_cand, self.b_cand]


@dataclass
class UserState:
    """Encoded session state: hidden vector after folding the clicked history."""

    hidden: np.ndarray
    step: int
    history: tuple


def aggregate_neighbors(g: KnowledgeGraph, embeddings: Tensor, entity: int, tape: Tape) -> Tensor:
    """Mean of the neighbor rows of `embeddings`; zero vector if no neighbors."""
    nbr = g.neighbors(entity)
    if nbr.size == 0:
        return Tensor(np.zeros(embeddings.shape[1]))
    return tape.mean_rows(tape.gather_rows(embeddings, nbr))


def integrate(e_neighborhood: Tensor, e_self: Tensor, w: Tensor, b: Tensor, tape: Tape) -> Tensor:
    """One graph-convolution step: relu(W e_N + B e_self)."""
    return tape.relu(tape.add(tape.matmul(w, e_neighborhood), tape.matmul(b, e_self)))


def item_embedding(g: KnowledgeGraph, item, gcn: GcnParameters, base: Tensor, tape: Tape) -> Tensor:
    """Receptive-field unroll of the final-hop embedding of one item."""
    entity = g.item_to_entity.get(item)
    if entity is None:
        raise KeyError(f"item {item!r} has no linked entity")
    memo: dict[tuple[int, int], Tensor] = {}

    def emb(node: int, hop: int) -> Tensor:
        key = (node, hop)
        if key in memo:
            return memo[key]
        if hop == 0:
            out = tape.gather_row(base, node)
        else:
            w, b = gcn.layers[hop - 1]
            nbr = g.neighbors(node)
            if nbr.size == 0:
                e_n = Tensor(np.zeros(base.shape[1]))
            else:
                e_n = tape.mean_of([emb(int(t), hop - 1) for t in nbr])
            out = integrate(e_n, emb(node, hop - 1), w, b, tape)
        memo[key] = out
        return out

    return emb(int(entity), gcn.hops)


def propagate_all(g: KnowledgeGraph, base: Tensor, gcn: GcnParameters, tape: Tape) -> Tensor:
    """Final-hop embeddings for every entity at once.

    Equivalent to item_embedding row-by-row: each hop applies
    relu(neighbor-mean @ W.T + previous @ B.T) with zero aggregate for
    childless entities.
    """
    out = base
    adj = g.mean_adjacency
    for w, b in gcn.layers:
        nbr = tape.matmul_const(adj, out)
        out = tape.relu(tape.add(tape.linear(nbr, w), tape.linear(out, b)))
    return out


def gru_step(p: GruParameters, h_prev: Tensor, item_vec: Tensor, tape: Tape) -> Tensor:
    """One gated update of the session state by a clicked-item vector."""
    z = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_update, item_vec),
                                       tape.matmul(p.u_update, h_prev)), p.b_update))
    r = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_reset, item_vec),
                                       tape.matmul(p.u_reset, h_prev)), p.b_reset))
    h_cand = tape.tanh(tape.add(tape.add(tape.matmul(p.w_cand, item_vec),
                                         tape.matmul(p.u_cand, tape.mul(r, h_prev))), p.b_cand))
    return tape.add(tape.mul(tape.scale(z, -1.0, 1.0), h_prev), tape.mul(z, h_cand))


def gru_step_rows(p: GruParameters, h_prev: Tensor, items: Tensor, tape: Tape) -> Tensor:
    """gru_step applied to a batch of rows (B, d)."""
    z = tape.sigmoid(tape.add(tape.linear(items, p.w_update, p.b_update),
                              tape.linear(h_prev, p.u_update)))
    r = tape.sigmoid(tape.add(tape.linear(items, p.w_reset, p.b_reset),
                              tape.linear(h_prev, p.u_reset)))
    h_cand = tape.tanh(tape.add(tape.linear(items, p.w_cand, p.b_cand),
                                tape.linear(tape.mul(r, h_prev), p.u_cand)))
    return tape.add(tape.mul(tape.scale(z, -1.0, 1.0), h_prev), tape.mul(z, h_cand))


def encode_state(history, g: KnowledgeGraph, gcn: GcnParameters, gru: GruParameters,
                 base: Tensor, tape: Tape) -> UserState:
    """Fold the clicked history through the GRU from a zero initial state."""
    h: Tensor = Tensor(np.zeros(gru.dim))
    for item in history:
        vec = item_embedding(g, item, gcn, base, tape)
        h = gru_step(gru, h, vec, tape)
    return UserState(hidden=h.data.copy(), step=len(history), history=tuple(history))


def encode_rows(gru: GruParameters, item_matrix: Tensor, row_of: np.ndarray,
                histories: list[tuple], tape: Tape) -> Tensor:
    """Batched state encoding: (B, d) hidden rows for B histories.

    Histories are right-padded; padded steps keep the previous hidden
    value through masking, so results match per-history folding.
    """
    b = len(histories)
    dim = item_matrix.shape[1]
    h = Tensor(np.zeros((b, dim)))
    if b == 0:
        return h
    max_len = max((len(hs) for hs in histories), default=0)
    for t in range(max_len):
        rows = np.zeros(b, dtype=np.int64)
        mask = np.zeros((b, dim))
        for i, hs in enumerate(histories):
            if len(hs) > t:
                rows[i] = row_of[hs[t]]
                mask[i, :] = 1.0
        items = tape.gather_rows(item_matrix, rows)
        items = tape.mul_const(items, mask)  # zero the padded rows' input
        step = gru_step_rows(gru, h, items, tape)
        h = tape.add(tape.mul_const(step, mask), tape.mul_const(h, 1.0 - mask))
    return h
