"""Sparse track-to-track transition statistics.

Adjacent track pairs across all training sessions are counted into a sparse
frequency matrix, log-transformed, and normalized row-wise (per source) and
column-wise (per target) into Markov transition matrices.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .corpus import ConfigError

LOG_MODES = ("log1p", "log_nonzero")


@dataclass
class TransitionCounts:
    dimension: int
    entries: Counter  # (source, target) -> count

    @property
    def total(self) -> int:
        return sum(self.entries.values())

    def to_coo(self) -> sp.coo_matrix:
        if not self.entries:
            return sp.coo_matrix((self.dimension, self.dimension))
        keys = np.array(list(self.entries.keys()), dtype=np.int64)
        vals = np.array(list(self.entries.values()), dtype=np.float64)
        return sp.coo_matrix(
            (vals, (keys[:, 0], keys[:, 1])),
            shape=(self.dimension, self.dimension),
        )

    def write(self, f: TextIO) -> None:
        for (i, j), c in sorted(self.entries.items()):
            f.write(f"{i}\t{j}\t{c}\n")

    @classmethod
    def read(cls, f: TextIO, dimension: int) -> "TransitionCounts":
        entries = Counter()
        for line in f:
            line = line.strip()
            if not line:
                continue
            i, j, c = line.split("\t")
            entries[(int(i), int(j))] = int(c)
        return cls(dimension, entries)


@dataclass
class NormalizedTransitions:
    """Row-stochastic (CSR) and column-stochastic (CSC) views of the log matrix."""

    row_norm: sp.csr_matrix
    col_norm: sp.csc_matrix

    @property
    def dimension(self) -> int:
        return self.row_norm.shape[0]


def build_counts(sessions: Iterable, dimension: int) -> TransitionCounts:
    """Count adjacent (source, target) pairs over all sessions."""
    entries = Counter()
    for s in sessions:
        tracks = s.tracks if hasattr(s, "tracks") else s
        for a, b in zip(tracks, tracks[1:]):
            entries[(a, b)] += 1
    return TransitionCounts(dimension, entries)


def log_transform(counts: TransitionCounts, log_mode: str = "log1p") -> sp.csr_matrix:
    """Dampen counts: log1p keeps every observed transition in the support,
    log_nonzero maps frequency-1 transitions to weight 0 (dropping them)."""
    if log_mode not in LOG_MODES:
        raise ConfigError(f"log_mode must be one of {LOG_MODES}, got {log_mode!r}")
    m = counts.to_coo()
    if log_mode == "log1p":
        m.data = np.log1p(m.data)
    else:
        m.data = np.log(m.data)
    m = m.tocsr()
    m.eliminate_zeros()
    return m


def normalize(log_matrix: sp.spmatrix) -> NormalizedTransitions:
    """Divide each row / column by its sum; empty rows and columns stay empty."""
    csr = sp.csr_matrix(log_matrix, copy=True)
    row_sums = np.asarray(csr.sum(axis=1)).ravel()
    scale = np.divide(1.0, row_sums, out=np.zeros_like(row_sums), where=row_sums > 0)
    row_norm = sp.diags(scale) @ csr

    csc = sp.csc_matrix(log_matrix, copy=True)
    col_sums = np.asarray(csc.sum(axis=0)).ravel()
    scale = np.divide(1.0, col_sums, out=np.zeros_like(col_sums), where=col_sums > 0)
    col_norm = csc @ sp.diags(scale)

    return NormalizedTransitions(sp.csr_matrix(row_norm), sp.csc_matrix(col_norm))


def build_transitions(
    sessions: Iterable, dimension: int, log_mode: str = "log1p"
) -> NormalizedTransitions:
    """Full pipeline: counts -> log transform -> normalization."""
    return normalize(log_transform(build_counts(sessions, dimension), log_mode))
