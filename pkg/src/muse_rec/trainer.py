"""Dual-view self-supervised training loop and the sklearn-style estimator.

``MuseRecommender`` wraps the whole pipeline behind a fit/predict interface:
fit() builds transition tables from the training sessions, trains the shared
encoder on original/augmented view pairs, and keeps the checkpoint with the
best validation MRR@5.
"""

import copy
import io
import struct
from dataclasses import dataclass, field, fields as dc_fields
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import torch
from sklearn.base import BaseEstimator

from . import losses as L
from .augment import reorder_augment, transition_augment
from .corpus import ConfigError, Session, TrainingInstance, sessions_to_instances
from .evaluation import evaluate, mrr_at_k, rank_of_target
from .losses import LossConfig
from .model import SessionEncoder
from .transitions import NormalizedTransitions, build_transitions

CHECKPOINT_MAGIC = b"MUSECKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 512
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_dim: int = 100
    max_len: int = 20
    loss: LossConfig = field(default_factory=LossConfig)
    gamma: float = 0.5
    augment_shuffle: bool = True
    augment_nonshuffle: bool = True
    log_mode: str = "log1p"
    optimizer: str = "adam"  # "adam" or "sgd" (momentum 0.9)
    grad_clip: float = 5.0
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    epochs: List[Dict]  # per-epoch loss breakdown + valid_mrr5
    best_epoch: int

    def write_csv(self, f: TextIO) -> None:
        f.write("epoch,loss_total,loss_rec,loss_match,loss_align,valid_mrr5\n")
        for row in self.epochs:
            f.write(
                f"{row['epoch']},{row['loss_total']!r},{row['loss_rec']!r},"
                f"{row['loss_match']!r},{row['loss_align']!r},{row['valid_mrr5']!r}\n"
            )


def make_views(
    instance: TrainingInstance,
    transitions: NormalizedTransitions,
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[List[int], List[int]]:
    """Original prefix plus its augmented view (per the shuffle flag)."""
    sess = Session(list(instance.prefix), instance.shuffle)
    if instance.shuffle:
        if config.augment_shuffle and len(sess) >= 2:
            aug = transition_augment(sess, transitions, rng, config.max_len)
        else:
            aug = sess
    else:
        if config.augment_nonshuffle:
            aug = reorder_augment(sess, config.gamma, rng)
        else:
            aug = sess
    return list(sess.tracks), list(aug.tracks)


def _check_finite(name: str, value: torch.Tensor) -> None:
    if not torch.isfinite(value):
        raise FloatingPointError(
            f"{name} loss diverged (value={float(value.detach())})"
        )


def train_step(
    views: Sequence[Tuple[List[int], List[int]]],
    labels: Sequence[int],
    model: SessionEncoder,
    optimizer: torch.optim.Optimizer,
    config: TrainConfig,
    epoch: int,
) -> Dict:
    """One gradient step over a batch of (original, augmented) view pairs."""
    origs = [v[0] for v in views]
    augs = [v[1] for v in views]
    h_o, mask_o, len_o, z_o = model(origs, config.max_len)
    h_a, mask_a, len_a, z_a = model(augs, config.max_len)

    item = h_o.new_zeros(())
    sim = h_o.new_zeros(())
    reg = h_o.new_zeros(())
    sim_active = epoch >= config.loss.warmup_epochs
    for i, (orig, aug) in enumerate(views):
        ho_i = h_o[i, : len(orig)]
        ha_i = h_a[i, : len(aug)]
        item = item + L.item_matching_loss(ho_i, ha_i, orig, aug)
        if sim_active:
            sim = sim + L.similarity_matching_loss(ho_i, ha_i, config.loss.kappa)
        reg = reg + L.vicreg(ho_i, ha_i, L.item_matched_pairs(orig, aug), config.loss)
    match = (item + sim + reg) / len(views)
    align = L.align_loss(z_o, z_a, config.loss)
    logits = model.predict_scores(z_o)
    rec = L.rec_loss(logits, torch.tensor(list(labels), dtype=torch.int64))
    for name, value in (("matching", match), ("alignment", align), ("recommendation", rec)):
        _check_finite(name, value)
    total = L.total_loss(match, align, rec, config.loss.alpha)

    optimizer.zero_grad()
    total.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
    optimizer.step()
    return {
        "loss_total": float(total.detach()),
        "loss_rec": float(rec.detach()),
        "loss_match": float(match.detach()),
        "loss_align": float(align.detach()),
        "loss_sim": float(sim.detach()) / len(views),
    }


def save_checkpoint(model: SessionEncoder, path: str) -> None:
    """Versioned binary: magic, version, |V|, d, then each named float64
    tensor as (name length, name, rows, cols, row-major values)."""
    tensors = model.named_tensors()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", CHECKPOINT_VERSION, model.n_tracks, model.hidden_dim))
        f.write(struct.pack("<I", len(tensors)))
        for name, p in tensors:
            data = p.detach().numpy().astype(np.float64)
            rows, cols = (data.shape[0], 1) if data.ndim == 1 else data.shape
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ConfigError("truncated checkpoint file")
    return data


def load_checkpoint(path: str) -> SessionEncoder:
    with open(path, "rb") as f:
        if _read_exact(f, 8) != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        version, n_tracks, hidden_dim = struct.unpack("<III", _read_exact(f, 12))
        if version != CHECKPOINT_VERSION:
            raise ConfigError(
                f"{path}: unsupported checkpoint version {version} "
                f"(expected {CHECKPOINT_VERSION})"
            )
        (n_tensors,) = struct.unpack("<I", _read_exact(f, 4))
        model = SessionEncoder(n_tracks, hidden_dim)
        state = dict(model.named_tensors())
        loaded = set()
        with torch.no_grad():
            for _ in range(n_tensors):
                (name_len,) = struct.unpack("<I", _read_exact(f, 4))
                name = _read_exact(f, name_len).decode("utf-8")
                rows, cols = struct.unpack("<II", _read_exact(f, 8))
                raw = _read_exact(f, rows * cols * 8)
                arr = np.frombuffer(raw, dtype="<f8").reshape(rows, cols)
                if name not in state:
                    raise ConfigError(f"{path}: unknown tensor {name!r}")
                target = state[name]
                target.copy_(torch.from_numpy(arr.reshape(tuple(target.shape)).copy()))
                loaded.add(name)
        missing = set(state) - loaded
        if missing:
            raise ConfigError(f"{path}: missing tensors {sorted(missing)}")
    return model


class MuseRecommender(BaseEstimator):
    """Next-track recommender trained with dual-view self-supervision.

    Parameters mirror TrainConfig / LossConfig; fit() accepts preprocessed
    Sessions for training and validation.
    """

    def __init__(
        self,
        epochs: int = 10,
        batch_size: int = 512,
        learning_rate: float = 1e-3,
        seed: int = 0,
        hidden_dim: int = 100,
        max_len: int = 20,
        gamma: float = 0.5,
        alpha: float = 0.2,
        lam: float = 1.0,
        mu: float = 1.0,
        nu: float = 10.0,
        kappa: int = 5,
        warmup_epochs: int = 1,
        variance_eps: float = 1e-4,
        augment_shuffle: bool = True,
        augment_nonshuffle: bool = True,
        log_mode: str = "log1p",
        optimizer: str = "adam",
        grad_clip: float = 5.0,
        threads: int = 1,
        n_tracks: Optional[int] = None,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.gamma = gamma
        self.alpha = alpha
        self.lam = lam
        self.mu = mu
        self.nu = nu
        self.kappa = kappa
        self.warmup_epochs = warmup_epochs
        self.variance_eps = variance_eps
        self.augment_shuffle = augment_shuffle
        self.augment_nonshuffle = augment_nonshuffle
        self.log_mode = log_mode
        self.optimizer = optimizer
        self.grad_clip = grad_clip
        self.threads = threads
        self.n_tracks = n_tracks

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            hidden_dim=self.hidden_dim,
            max_len=self.max_len,
            loss=LossConfig(
                alpha=self.alpha,
                lam=self.lam,
                mu=self.mu,
                nu=self.nu,
                kappa=self.kappa,
                warmup_epochs=self.warmup_epochs,
                variance_eps=self.variance_eps,
            ),
            gamma=self.gamma,
            augment_shuffle=self.augment_shuffle,
            augment_nonshuffle=self.augment_nonshuffle,
            log_mode=self.log_mode,
            optimizer=self.optimizer,
            grad_clip=self.grad_clip,
            threads=self.threads,
        )

    def fit(
        self,
        sessions: Sequence[Session],
        valid_sessions: Sequence[Session] = (),
        instances: Optional[Sequence[TrainingInstance]] = None,
        valid_instances: Optional[Sequence[TrainingInstance]] = None,
    ):
        if not sessions:
            raise ConfigError("training session set is empty")
        config = self._train_config()
        torch.set_num_threads(config.threads)
        n_tracks = self.n_tracks or (
            max(max(s.tracks) for s in sessions) + 1
        )
        if instances is None:
            instances = sessions_to_instances(sessions)
        if valid_instances is None:
            valid_instances = sessions_to_instances(valid_sessions)
        transitions = build_transitions(sessions, n_tracks, config.log_mode)

        torch.manual_seed(config.seed)
        model = SessionEncoder(n_tracks, config.hidden_dim)
        model.reset_parameters(config.seed)
        if config.optimizer == "adam":
            opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        else:
            opt = torch.optim.SGD(
                model.parameters(), lr=config.learning_rate, momentum=0.9
            )

        order_rng = np.random.default_rng((config.seed, 0xBA7C4))
        report_rows = []
        best_state, best_mrr, best_epoch = None, -1.0, -1
        for epoch in range(config.epochs):
            order = order_rng.permutation(len(instances))
            sums = {
                "loss_total": 0.0,
                "loss_rec": 0.0,
                "loss_match": 0.0,
                "loss_align": 0.0,
                "loss_sim": 0.0,
            }
            n_batches = 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start : start + config.batch_size]
                views, labels = [], []
                for i in idx:
                    inst = instances[i]
                    rng = np.random.default_rng((config.seed, epoch, int(i)))
                    views.append(make_views(inst, transitions, config, rng))
                    labels.append(inst.label)
                breakdown = train_step(views, labels, model, opt, config, epoch)
                for k in sums:
                    sums[k] += breakdown[k]
                n_batches += 1
            row = {k: v / n_batches for k, v in sums.items()}
            row["epoch"] = epoch
            row["valid_mrr5"] = (
                self._validation_mrr5(model, valid_instances, config)
                if valid_instances
                else float("nan")
            )
            report_rows.append(row)
            if valid_instances and row["valid_mrr5"] > best_mrr:
                best_mrr = row["valid_mrr5"]
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
        if best_state is not None:
            model.load_state_dict(best_state)
        else:
            best_epoch = config.epochs - 1
        self.model_ = model
        self.transitions_ = transitions
        self.report_ = TrainReport(report_rows, best_epoch)
        return self

    @staticmethod
    def _validation_mrr5(model, instances, config) -> float:
        scores = _batched_scores(model, [i.prefix for i in instances], config.max_len)
        mrrs = [
            mrr_at_k(rank_of_target(scores[j], inst.label), 5)
            for j, inst in enumerate(instances)
        ]
        return float(np.mean(mrrs))

    def predict_scores(self, prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        """Score matrix (n_prefixes, |V|) of next-track logits."""
        return _batched_scores(self.model_, prefixes, self.max_len)

    def predict(self, prefixes: Sequence[Sequence[int]], k: int = 10) -> np.ndarray:
        """Top-k track ids per prefix (ties broken by smaller id)."""
        scores = self.predict_scores(prefixes)
        # stable lexsort: primary = -score, secondary = track id
        return np.argsort(-scores, axis=1, kind="stable")[:, :k]

    def score_fn(self):
        model, max_len = self.model_, self.max_len

        def fn(prefix):
            return _batched_scores(model, [prefix], max_len)[0]

        return fn

    def evaluate(self, instances: Sequence[TrainingInstance]):
        return evaluate(self.score_fn(), instances)


def _batched_scores(
    model: SessionEncoder, prefixes: Sequence, max_len: int, batch_size: int = 512
) -> np.ndarray:
    out = []
    with torch.no_grad():
        for start in range(0, len(prefixes), batch_size):
            chunk = [list(p)[-max_len:] for p in prefixes[start : start + batch_size]]
            _, _, _, z = model(chunk, max_len)
            out.append(model.predict_scores(z).numpy())
    return np.concatenate(out, axis=0)


def parse_config_file(f: TextIO) -> Dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(f, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values
