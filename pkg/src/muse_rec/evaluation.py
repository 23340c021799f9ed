"""Ranking metrics, segmented reporting, popularity baseline and the
unique-transition-rate statistic."""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, TextIO

import numpy as np

KS = (5, 10)
SEGMENTS = ("all", "shuffle", "non_shuffle")
METRICS = ("recall", "mrr", "ndcg")


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """1-based rank; ties broken in favor of the smaller track id."""
    s = scores[target]
    greater = int(np.sum(scores > s))
    tied_before = int(np.sum(scores[:target] == s))
    return 1 + greater + tied_before


def recall_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


def mrr_at_k(rank: int, k: int) -> float:
    return 1.0 / rank if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    # single relevant item, so the ideal DCG is 1
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


@dataclass
class MetricsReport:
    values: Dict  # (segment, metric, k) -> float
    counts: Dict  # segment -> instance count

    def get(self, segment: str, metric: str, k: int) -> Optional[float]:
        return self.values.get((segment, metric, k))

    def write_csv(self, f: TextIO) -> None:
        f.write("segment,metric,K,value,count\n")
        for segment in SEGMENTS:
            if self.counts.get(segment, 0) == 0:
                continue
            for metric in METRICS:
                for k in KS:
                    f.write(
                        f"{segment},{metric},{k},"
                        f"{self.values[(segment, metric, k)]:.6f},"
                        f"{self.counts[segment]}\n"
                    )

    def format_table(self) -> str:
        lines = [f"{'segment':<12} {'count':>7} " + " ".join(f"{m}@{k:<4}" for m in METRICS for k in KS)]
        for segment in SEGMENTS:
            if self.counts.get(segment, 0) == 0:
                continue
            cells = " ".join(
                f"{self.values[(segment, m, k)]:.4f}" for m in METRICS for k in KS
            )
            lines.append(f"{segment:<12} {self.counts[segment]:>7} {cells}")
        return "\n".join(lines)


def report_from_ranks(ranks: Sequence[int], shuffles: Sequence[bool]) -> MetricsReport:
    values: Dict = {}
    counts: Dict = {}
    fns = {"recall": recall_at_k, "mrr": mrr_at_k, "ndcg": ndcg_at_k}
    masks = {
        "all": [True] * len(ranks),
        "shuffle": list(shuffles),
        "non_shuffle": [not s for s in shuffles],
    }
    for segment, mask in masks.items():
        seg_ranks = [r for r, m in zip(ranks, mask) if m]
        counts[segment] = len(seg_ranks)
        if not seg_ranks:
            continue
        for metric, fn in fns.items():
            for k in KS:
                values[(segment, metric, k)] = float(
                    np.mean([fn(r, k) for r in seg_ranks])
                )
    return MetricsReport(values, counts)


def evaluate(score_fn, instances: Sequence) -> MetricsReport:
    """Score every instance with ``score_fn(prefix) -> np.ndarray`` and report
    metrics overall and per shuffle segment."""
    ranks, shuffles = [], []
    for inst in instances:
        scores = score_fn(inst.prefix)
        ranks.append(rank_of_target(np.asarray(scores), inst.label))
        shuffles.append(inst.shuffle)
    return report_from_ranks(ranks, shuffles)


def unique_transition_rate(sessions: Iterable) -> float:
    """Percentage of adjacent-pair occurrences whose (source, target) pair
    appears exactly once across the whole session set."""
    counts = Counter()
    for s in sessions:
        tracks = s.tracks if hasattr(s, "tracks") else s
        for pair in zip(tracks, tracks[1:]):
            counts[pair] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("session set contains no transitions")
    unique = sum(1 for c in counts.values() if c == 1)
    return 100.0 * unique / total


def popularity_baseline(train_instances: Sequence, n_tracks: int):
    """Scoring function ranking every item by its training label frequency."""
    freq = np.zeros(n_tracks)
    for inst in train_instances:
        freq[inst.label] += 1

    def score_fn(prefix):
        return freq

    return score_fn
