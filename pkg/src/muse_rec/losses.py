"""Training objective: item matching, similarity matching, VICReg-style
regularization, batch alignment, next-track cross-entropy, and their
weighted combination."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F


@dataclass
class LossConfig:
    alpha: float = 0.2
    lam: float = 1.0  # invariance coefficient
    mu: float = 1.0  # variance coefficient
    nu: float = 10.0  # covariance coefficient
    kappa: int = 5
    warmup_epochs: int = 1
    variance_eps: float = 1e-4


@dataclass
class MatchedPairs:
    pairs: List[Tuple[int, int]]  # (row in A, row in B)
    distances: List[float]


def item_matched_pairs(orig_ids: Sequence[int], aug_ids: Sequence[int]) -> List[Tuple[int, int]]:
    """All cross position pairs carrying the same track id."""
    return [
        (t, k)
        for t, x in enumerate(orig_ids)
        for k, y in enumerate(aug_ids)
        if x == y
    ]


def item_matching_loss(
    h: torch.Tensor,
    h_aug: torch.Tensor,
    orig_ids: Sequence[int],
    aug_ids: Sequence[int],
) -> torch.Tensor:
    """Mean squared distance between same-track representations across views,
    normalized by the number of distinct tracks in the original session."""
    pairs = item_matched_pairs(orig_ids, aug_ids)
    if not pairs:
        return h.new_zeros(())
    t_idx = torch.tensor([p[0] for p in pairs])
    k_idx = torch.tensor([p[1] for p in pairs])
    sq = ((h[t_idx] - h_aug[k_idx]) ** 2).sum(dim=-1)
    return sq.sum() / len(set(orig_ids))


def nn_pairs(a: torch.Tensor, b: torch.Tensor, kappa: int) -> MatchedPairs:
    """For each row of ``a`` its nearest row of ``b`` (squared Euclidean),
    keeping the kappa closest pairs; ties broken by lower row index."""
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    d2 = (torch.cdist(a, b, p=2.0) ** 2).detach()
    nn_dist, nn_idx = d2.min(dim=1)
    order = sorted(range(a.shape[0]), key=lambda i: (float(nn_dist[i]), i))[:kappa]
    return MatchedPairs(
        [(i, int(nn_idx[i])) for i in order], [float(nn_dist[i]) for i in order]
    )


def similarity_matching_loss(
    h: torch.Tensor, h_aug: torch.Tensor, kappa: int
) -> torch.Tensor:
    """Sum of top-kappa nearest-neighbor squared distances, both directions."""
    fwd = nn_pairs(h, h_aug, kappa)
    bwd = nn_pairs(h_aug, h, kappa)
    loss = h.new_zeros(())
    for i, j in fwd.pairs:
        loss = loss + ((h[i] - h_aug[j]) ** 2).sum()
    for i, j in bwd.pairs:
        loss = loss + ((h_aug[i] - h[j]) ** 2).sum()
    return loss


def _variance_term(m: torch.Tensor, eps: float) -> torch.Tensor:
    if m.shape[0] < 2:
        return m.new_zeros(())
    std = torch.sqrt(m.var(dim=0, unbiased=True) + eps)
    return F.relu(1.0 - std).mean()


def _covariance_term(m: torch.Tensor) -> torch.Tensor:
    n, d = m.shape
    if n < 2:
        return m.new_zeros(())
    centered = m - m.mean(dim=0)
    cov = centered.T @ centered / (n - 1)
    off_diag = cov - torch.diag_embed(torch.diagonal(cov))
    return (off_diag**2).sum() / d


def vicreg(
    a: torch.Tensor,
    b: torch.Tensor,
    pair_index: Sequence[Tuple[int, int]],
    config: LossConfig,
) -> torch.Tensor:
    """lam * invariance(matched pairs) + mu * variance + nu * covariance."""
    d = a.shape[1]
    if pair_index:
        i_idx = torch.tensor([p[0] for p in pair_index])
        j_idx = torch.tensor([p[1] for p in pair_index])
        s = ((a[i_idx] - b[j_idx]) ** 2).sum(dim=-1).mean() / d
    else:
        s = a.new_zeros(())
    v = _variance_term(a, config.variance_eps) + _variance_term(b, config.variance_eps)
    c = _covariance_term(a) + _covariance_term(b)
    return config.lam * s + config.mu * v + config.nu * c


def matching_loss(
    h: torch.Tensor,
    h_aug: torch.Tensor,
    orig_ids: Sequence[int],
    aug_ids: Sequence[int],
    config: LossConfig,
    epoch: int,
) -> torch.Tensor:
    """Item matching + (post-warmup) similarity matching + VICReg on H-level."""
    loss = item_matching_loss(h, h_aug, orig_ids, aug_ids)
    if epoch >= config.warmup_epochs:
        loss = loss + similarity_matching_loss(h, h_aug, config.kappa)
    pairs = item_matched_pairs(orig_ids, aug_ids)
    return loss + vicreg(h, h_aug, pairs, config)


def align_loss(z: torch.Tensor, z_aug: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """VICReg over the batch of session representations, paired elementwise."""
    pairs = [(i, i) for i in range(z.shape[0])]
    return vicreg(z, z_aug, pairs, config)


def rec_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean categorical cross-entropy in the log domain."""
    if int(targets.max()) >= logits.shape[-1]:
        raise IndexError("target track id out of vocabulary range")
    return F.cross_entropy(logits, targets)


def total_loss(
    matching: torch.Tensor, align: torch.Tensor, rec: torch.Tensor, alpha: float
) -> torch.Tensor:
    return alpha * matching + (1.0 - alpha) * align + rec
