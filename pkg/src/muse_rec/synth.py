"""Synthetic session-log generator with known Markov structure.

Tracks are partitioned into clusters. Non-shuffle sessions are walks of a
ground-truth Markov chain whose mass is concentrated on a short per-track
preferred-successor list; shuffle sessions are uniform permutations of
tracks sampled from one cluster, with independent skips.
"""

from dataclasses import dataclass
from typing import List, TextIO

import numpy as np

from .corpus import ConfigError, LOG_COLUMNS


@dataclass
class SynthConfig:
    n_tracks: int = 2000
    n_clusters: int = 20
    n_sessions: int = 20000
    session_len_range: tuple = (8, 20)
    shuffle_fraction: float = 0.4
    skip_prob_shuffle: float = 0.3
    within_cluster_prob: float = 0.95
    seed: int = 0
    n_days: int = 7
    n_preferred: int = 3  # preferred successors per track
    preferred_mass: float = 0.8  # share of within-cluster mass on them

    def __post_init__(self):
        if self.n_tracks % self.n_clusters != 0:
            raise ConfigError("n_clusters must divide n_tracks evenly")
        if not 0 <= self.shuffle_fraction <= 1:
            raise ConfigError("shuffle_fraction must be in [0, 1]")


@dataclass
class Catalog:
    chain: np.ndarray  # (n_tracks, n_tracks) row-stochastic ground truth
    cluster_of: np.ndarray  # track -> cluster
    clusters: List[np.ndarray]  # cluster -> member tracks
    cum_chain: np.ndarray  # row-wise cumulative sums, for fast walking


def generate_catalog(config: SynthConfig, rng: np.random.Generator) -> Catalog:
    n, k = config.n_tracks, config.n_clusters
    size = n // k
    cluster_of = np.arange(n) // size
    clusters = [np.arange(c * size, (c + 1) * size) for c in range(k)]
    chain = np.zeros((n, n))
    out_mass = 1.0 - config.within_cluster_prob
    for t in range(n):
        members = clusters[cluster_of[t]]
        others = members[members != t]
        n_pref = min(config.n_preferred, others.size)
        preferred = rng.choice(others, size=n_pref, replace=False)
        weights = np.linspace(1.0, 0.5, n_pref)
        weights /= weights.sum()
        within = config.within_cluster_prob
        chain[t, preferred] += within * config.preferred_mass * weights
        chain[t, others] += within * (1.0 - config.preferred_mass) / others.size
        if k > 1:
            outside = np.setdiff1d(np.arange(n), members, assume_unique=True)
            chain[t, outside] += out_mass / outside.size
        else:
            chain[t, others] += out_mass / others.size
    chain /= chain.sum(axis=1, keepdims=True)
    return Catalog(chain, cluster_of, clusters, np.cumsum(chain, axis=1))


def _walk(catalog: Catalog, start: int, length: int, rng: np.random.Generator) -> List[int]:
    tracks = [start]
    cur = start
    for _ in range(length - 1):
        u = rng.random()
        cur = int(np.searchsorted(catalog.cum_chain[cur], u))
        tracks.append(cur)
    return tracks


def generate_sessions(catalog: Catalog, config: SynthConfig, rng: np.random.Generator) -> List[str]:
    """Rows of the raw event TSV (without header), one per play event."""
    rows = []
    lo, hi = config.session_len_range
    for s in range(config.n_sessions):
        sid = f"synth-{s:07d}"
        day = 1 + int(rng.integers(0, config.n_days))
        length = int(rng.integers(lo, hi + 1))
        shuffle = rng.random() < config.shuffle_fraction
        cluster = int(rng.integers(0, config.n_clusters))
        members = catalog.clusters[cluster]
        if shuffle:
            length = min(length, members.size)
            tracks = rng.choice(members, size=length, replace=False)
            skips = rng.random(length) < config.skip_prob_shuffle
        else:
            start = int(rng.choice(members))
            tracks = _walk(catalog, start, length, rng)
            skips = np.zeros(length, dtype=bool)
        for pos, (t, sk) in enumerate(zip(tracks, skips), 1):
            rows.append(
                f"{sid}\t{pos}\ttrack-{int(t):05d}\t{int(sk)}\t{int(shuffle)}\t{day}\t1"
            )
    return rows


def write_log(config: SynthConfig, f: TextIO) -> None:
    rng = np.random.default_rng(config.seed)
    catalog = generate_catalog(config, rng)
    rows = generate_sessions(catalog, config, rng)
    f.write("\t".join(LOG_COLUMNS + ["premium"]) + "\n")
    for row in rows:
        f.write(row + "\n")
