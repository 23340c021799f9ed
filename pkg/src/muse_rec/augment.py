"""Session augmentation: transition-based insertion and window reorder.

For shuffle sessions, each of the |S|-1 gaps receives an insertion candidate
sampled from the elementwise product of the source row of the row-normalized
transition matrix and the target column of the column-normalized one. For
non-shuffle sessions, a contiguous window covering a gamma fraction of the
session is permuted uniformly at random.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .corpus import ConfigError, Session, MAX_LEN
from .transitions import NormalizedTransitions


@dataclass
class CandidateDistribution:
    """Per-gap sparse categorical distribution over insertable tracks."""

    supports: List[np.ndarray]  # track ids, one array per gap (possibly empty)
    probs: List[np.ndarray]  # matching probabilities, each summing to 1


@dataclass
class InsertionPlan:
    choices: List[Optional[int]]  # one per gap; None means no insertion


def candidate_distribution(
    session: Session, transitions: NormalizedTransitions
) -> CandidateDistribution:
    """Weight of candidate v in gap i: row_norm[S[i], v] * col_norm[v, S[i+1]],
    renormalized over the common support."""
    row = transitions.row_norm
    col = transitions.col_norm
    supports, probs = [], []
    for src, tgt in zip(session.tracks, session.tracks[1:]):
        r_idx = row.indices[row.indptr[src] : row.indptr[src + 1]]
        r_val = row.data[row.indptr[src] : row.indptr[src + 1]]
        c_idx = col.indices[col.indptr[tgt] : col.indptr[tgt + 1]]
        c_val = col.data[col.indptr[tgt] : col.indptr[tgt + 1]]
        common, ri, ci = np.intersect1d(r_idx, c_idx, return_indices=True)
        w = r_val[ri] * c_val[ci]
        keep = w > 0
        common, w = common[keep], w[keep]
        if common.size:
            supports.append(common)
            probs.append(w / w.sum())
        else:
            supports.append(np.empty(0, dtype=np.int64))
            probs.append(np.empty(0))
    return CandidateDistribution(supports, probs)


def sample_insertions(
    dist: CandidateDistribution, rng: np.random.Generator
) -> InsertionPlan:
    """One categorical draw per nonempty gap."""
    choices: List[Optional[int]] = []
    for support, p in zip(dist.supports, dist.probs):
        if support.size == 0:
            choices.append(None)
        else:
            choices.append(int(support[rng.choice(support.size, p=p)]))
    return InsertionPlan(choices)


def insert(
    session: Session, plan: InsertionPlan, max_len: int, rng: np.random.Generator
) -> Session:
    """Interleave the chosen tracks into their gaps, capped at max_len.

    When the insertions would overflow max_len, a uniformly random subset of
    size max_len - |S| survives; original tracks are never touched.
    """
    n = len(session.tracks)
    if len(plan.choices) != n - 1:
        raise ValueError(f"plan length {len(plan.choices)} != gaps {n - 1}")
    chosen_gaps = [i for i, c in enumerate(plan.choices) if c is not None]
    budget = max_len - n
    if budget < len(chosen_gaps):
        if budget <= 0:
            chosen_gaps = []
        else:
            keep = rng.choice(len(chosen_gaps), size=budget, replace=False)
            chosen_gaps = [chosen_gaps[k] for k in sorted(keep)]
    keep_set = set(chosen_gaps)
    out = []
    for i, t in enumerate(session.tracks):
        out.append(t)
        if i in keep_set:
            out.append(plan.choices[i])
    return Session(out, session.shuffle, session.id)


def transition_augment(
    session: Session,
    transitions: NormalizedTransitions,
    rng: np.random.Generator,
    max_len: int = MAX_LEN,
) -> Session:
    dist = candidate_distribution(session, transitions)
    plan = sample_insertions(dist, rng)
    return insert(session, plan, max_len, rng)


def reorder_augment(
    session: Session, gamma: float, rng: np.random.Generator
) -> Session:
    """Permute a contiguous window of length floor(gamma * |S|) uniformly."""
    if not 0 < gamma <= 1:
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    n = len(session.tracks)
    w = int(gamma * n)
    if w < 2:
        return Session(list(session.tracks), session.shuffle, session.id)
    start = int(rng.integers(0, n - w + 1))
    window = list(session.tracks[start : start + w])
    perm = rng.permutation(w)
    tracks = list(session.tracks)
    tracks[start : start + w] = [window[p] for p in perm]
    return Session(tracks, session.shuffle, session.id)
