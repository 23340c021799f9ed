"""Session encoder: embedding, single-layer gated session-graph step,
attention aggregation and next-track scoring.

All parameters are float64 so that gradient checks against central finite
differences are meaningful.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import torch
from torch import nn


@dataclass
class SessionGraph:
    nodes: np.ndarray  # unique track ids, first-appearance order
    a_out: np.ndarray  # n x n, row-normalized outgoing adjacency
    a_in: np.ndarray  # n x n, row-normalized incoming adjacency
    position_map: np.ndarray  # sequence position -> node index


def build_session_graph(tracks: Sequence[int]) -> SessionGraph:
    """Binary directed adjacency over the session's unique tracks,
    row-normalized by out-degree (a_out) and in-degree (a_in)."""
    node_of = {}
    nodes = []
    for t in tracks:
        if t not in node_of:
            node_of[t] = len(nodes)
            nodes.append(t)
    n = len(nodes)
    adj = np.zeros((n, n))
    for a, b in zip(tracks, tracks[1:]):
        adj[node_of[a], node_of[b]] = 1.0
    out_deg = adj.sum(axis=1, keepdims=True)
    in_deg = adj.sum(axis=0, keepdims=True)
    a_out = np.divide(adj, out_deg, out=np.zeros_like(adj), where=out_deg > 0)
    a_in = np.divide(adj.T, in_deg.T, out=np.zeros_like(adj), where=in_deg.T > 0)
    position_map = np.array([node_of[t] for t in tracks], dtype=np.int64)
    return SessionGraph(np.array(nodes, dtype=np.int64), a_out, a_in, position_map)


@dataclass
class GraphBatch:
    """Padded batch of session graphs."""

    node_ids: torch.Tensor  # (B, N) int64, padded with 0
    node_mask: torch.Tensor  # (B, N) float64, 1 for real nodes
    a_out: torch.Tensor  # (B, N, N)
    a_in: torch.Tensor  # (B, N, N)
    alias: torch.Tensor  # (B, L) node index per position, padded with 0
    seq_mask: torch.Tensor  # (B, L) float64, 1 for real positions
    lengths: torch.Tensor  # (B,) int64


def batch_graphs(sessions: Sequence[Sequence[int]], max_len: int) -> GraphBatch:
    graphs = [build_session_graph(list(s)[:max_len]) for s in sessions]
    b = len(graphs)
    n_max = max(len(g.nodes) for g in graphs)
    node_ids = torch.zeros((b, n_max), dtype=torch.int64)
    node_mask = torch.zeros((b, n_max), dtype=torch.float64)
    a_out = torch.zeros((b, n_max, n_max), dtype=torch.float64)
    a_in = torch.zeros((b, n_max, n_max), dtype=torch.float64)
    alias = torch.zeros((b, max_len), dtype=torch.int64)
    seq_mask = torch.zeros((b, max_len), dtype=torch.float64)
    lengths = torch.zeros(b, dtype=torch.int64)
    for i, g in enumerate(graphs):
        n = len(g.nodes)
        m = len(g.position_map)
        node_ids[i, :n] = torch.from_numpy(g.nodes)
        node_mask[i, :n] = 1.0
        a_out[i, :n, :n] = torch.from_numpy(g.a_out)
        a_in[i, :n, :n] = torch.from_numpy(g.a_in)
        alias[i, :m] = torch.from_numpy(g.position_map)
        seq_mask[i, :m] = 1.0
        lengths[i] = m
    return GraphBatch(node_ids, node_mask, a_out, a_in, alias, seq_mask, lengths)


class SessionEncoder(nn.Module):
    """Embedding table + one gated graph step + additive attention readout."""

    def __init__(self, n_tracks: int, hidden_dim: int):
        super().__init__()
        self.n_tracks = n_tracks
        self.hidden_dim = hidden_dim
        d = hidden_dim
        dt = torch.float64
        self.embeddings = nn.Parameter(torch.empty(n_tracks, d, dtype=dt))
        self.w_in = nn.Parameter(torch.empty(d, d, dtype=dt))
        self.b_in = nn.Parameter(torch.empty(d, dtype=dt))
        self.w_out = nn.Parameter(torch.empty(d, d, dtype=dt))
        self.b_out = nn.Parameter(torch.empty(d, dtype=dt))
        # gates: message side (d x 2d) plus state side (d x d)
        for gate in ("update", "reset", "cand"):
            setattr(self, f"w_{gate}", nn.Parameter(torch.empty(d, 2 * d, dtype=dt)))
            setattr(self, f"u_{gate}", nn.Parameter(torch.empty(d, d, dtype=dt)))
            setattr(self, f"b_{gate}", nn.Parameter(torch.empty(d, dtype=dt)))
        self.w1 = nn.Parameter(torch.empty(d, dtype=dt))
        self.w2 = nn.Parameter(torch.empty(d, d, dtype=dt))
        self.w3 = nn.Parameter(torch.empty(d, d, dtype=dt))
        self.b_attn = nn.Parameter(torch.empty(d, dtype=dt))
        self.w4 = nn.Parameter(torch.empty(d, 2 * d, dtype=dt))

    def reset_parameters(self, seed: int) -> None:
        bound = 1.0 / math.sqrt(self.hidden_dim)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                p.uniform_(-bound, bound, generator=gen)

    def embed(self, track_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Lookup with zeroed padding rows; ids must be < n_tracks."""
        if track_ids.numel() and int(track_ids.max()) >= self.n_tracks:
            raise IndexError(
                f"track id {int(track_ids.max())} out of range (|V|={self.n_tracks})"
            )
        return self.embeddings[track_ids] * mask.unsqueeze(-1)

    def encode(self, batch: GraphBatch) -> torch.Tensor:
        """One gated message-passing step; returns H of shape (B, L, d)."""
        x = self.embed(batch.node_ids, batch.node_mask)
        m_in = batch.a_in @ (x @ self.w_in.T + self.b_in)
        m_out = batch.a_out @ (x @ self.w_out.T + self.b_out)
        m = torch.cat([m_in, m_out], dim=-1)
        z = torch.sigmoid(m @ self.w_update.T + x @ self.u_update.T + self.b_update)
        r = torch.sigmoid(m @ self.w_reset.T + x @ self.u_reset.T + self.b_reset)
        c = torch.tanh(m @ self.w_cand.T + (r * x) @ self.u_cand.T + self.b_cand)
        state = (1.0 - z) * x + z * c
        h = torch.gather(
            state, 1, batch.alias.unsqueeze(-1).expand(-1, -1, self.hidden_dim)
        )
        return h * batch.seq_mask.unsqueeze(-1)

    def aggregate(self, h: torch.Tensor, seq_mask: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Additive attention against the last track; returns z of shape (B, d)."""
        idx = (lengths - 1).clamp(min=0)
        h_last = h[torch.arange(h.shape[0]), idx]
        pre = torch.sigmoid(h @ self.w2.T + (h_last @ self.w3.T).unsqueeze(1) + self.b_attn)
        beta = (pre @ self.w1) * seq_mask
        z_global = (beta.unsqueeze(-1) * h).sum(dim=1)
        return torch.cat([h_last, z_global], dim=-1) @ self.w4.T

    def predict_scores(self, z: torch.Tensor) -> torch.Tensor:
        """Logits over the vocabulary; softmax/log-softmax belong to the caller."""
        return z @ self.embeddings.T

    def forward(self, sessions: Sequence[Sequence[int]], max_len: int):
        """Full pass: returns (H, seq_mask, lengths, z)."""
        batch = batch_graphs(sessions, max_len)
        h = self.encode(batch)
        z = self.aggregate(h, batch.seq_mask, batch.lengths)
        return h, batch.seq_mask, batch.lengths, z

    def named_tensors(self) -> List:
        return list(self.named_parameters())
