"""Variational training: single-sample reparameterized objective, Adam,
plateau halving, early stopping.

The objective per word is the negative teacher-forced log-likelihood at
one Gaussian sample of the underlying form, u = mean + eps with
eps ~ N(0, I). The sample is drawn from the model's own conditional
prior, so no KL term appears and the expected objective is a lower-bound
surrogate of the true likelihood. The joint variant has no latent and
trains on the plain likelihood.

Scheduling is driven by the dev loss computed deterministically (dropout
off, eps = 0): halve the learning rate after `patience` consecutive
epochs without improvement, stop once it falls below the floor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tape, Tensor, clip_global_norm
from .errors import ConfigError, NumericError, TrainingError
from .model import (ModelParams, UFGaussian, Variant, init_params,
                    word_logprob)
from .seeds import derive_rng
from .vocab import Alphabet, LexiconEntry, MorphemeVocab

GRAD_NORM_CAP = 5.0
IMPROVE_TOL = 1e-6


@dataclass
class TrainConfig:
    variant: Variant
    d: int = 200
    dropout: float = 0.2
    lr: float = 1e-3
    min_lr: float = 1e-5
    patience: int = 1
    batch_size: int = 1
    max_epochs: int = 100
    seed: int = 0
    eps_per_step: bool = True  # noise policy for the position-dependent variant

    def __post_init__(self):
        if not 0.0 < self.min_lr <= self.lr:
            raise ConfigError(f"need 0 < min_lr <= lr, got lr={self.lr}, min_lr={self.min_lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    lr: float
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_loss: float = float("inf")
    stop_reason: str = ""

    def format_lines(self) -> list[str]:
        """Stable text form: one record per line, wall time excluded so
        identical runs serialize bitwise identically."""
        lines = ["# epoch\ttrain_loss\tdev_loss\tlr"]
        for r in self.records:
            lines.append(f"{r.epoch}\t{r.train_loss:.17g}\t{r.dev_loss:.17g}\t{r.lr:.17g}")
        lines.append(f"# best_epoch {self.best_epoch} best_dev_loss {self.best_dev_loss:.17g}"
                     f" stop {self.stop_reason}")
        return lines

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(self.format_lines()) + "\n")


class PlateauSchedule:
    """Halve the learning rate after `patience` consecutive non-improving
    dev evaluations; report a stop once the rate falls below the floor.
    Improvement means strictly lower than the best so far by at least
    IMPROVE_TOL."""

    def __init__(self, lr: float, min_lr: float, patience: int):
        self.lr = lr
        self.min_lr = min_lr
        self.patience = patience
        self.best = float("inf")
        self.bad_epochs = 0

    def update(self, dev_loss: float) -> str:
        """Returns one of 'improved', 'waited', 'halved', 'stop'."""
        if dev_loss < self.best - IMPROVE_TOL:
            self.best = dev_loss
            self.bad_epochs = 0
            return "improved"
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr /= 2.0
            self.bad_epochs = 0
            return "stop" if self.lr < self.min_lr else "halved"
        return "waited"


def reparam_sample(uf: UFGaussian, rng: np.random.Generator) -> Tensor:
    """One reparameterized draw u = mean + eps, eps ~ N(0, I). The noise
    is a constant in the graph, so gradients flow through the mean only."""
    return uf.mean + rng.standard_normal(uf.mean.data.shape[0])


def elbo_word_loss(variant: Variant, entry: LexiconEntry, params: ModelParams,
                   alphabet: Alphabet, rng: np.random.Generator | None, *,
                   training: bool = False, dropout: float = 0.0,
                   drop_rng: np.random.Generator | None = None,
                   eps_per_step: bool = True) -> Tensor:
    """Negative log-likelihood at one underlying-form sample.

    With rng None (or for the joint variant, always) the noise is pinned
    to zero, which is the deterministic dev/eval objective.
    """
    if variant is Variant.JOINT or rng is None:
        eps = None
    else:
        d = params.d
        eps = lambda: rng.standard_normal(d)
    lp = word_logprob(variant, entry, params, alphabet, eps=eps,
                      eps_per_step=eps_per_step, training=training,
                      dropout=dropout, drop_rng=drop_rng)
    return ad.mul(lp, -1.0)


def mean_dev_loss(variant: Variant, entries, params: ModelParams,
                  alphabet: Alphabet) -> float:
    """Deterministic mean per-word loss: dropout off, noise pinned to 0."""
    total = 0.0
    for e in entries:
        total += elbo_word_loss(variant, e, params, alphabet, None).item()
    return total / len(entries)


def _quantized(params: ModelParams) -> list[np.ndarray]:
    # round-trip through f32, the checkpoint payload precision
    return [t.data.astype(np.float32).astype(np.float64) for t in params.tensors()]


def _install(params: ModelParams, values: list[np.ndarray]) -> list[np.ndarray]:
    old = [t.data for t in params.tensors()]
    for t, v in zip(params.tensors(), values):
        t.data = v
    return old


def train(config: TrainConfig, train_entries: list[LexiconEntry],
          dev_entries: list[LexiconEntry], alphabet: Alphabet,
          vocab: MorphemeVocab) -> tuple[ModelParams, TrainLog]:
    """Full training run; returns parameters restored to the best-dev
    epoch (at checkpoint precision) plus the epoch-by-epoch log.

    The logged best_dev_loss is recomputed from the f32-quantized best
    snapshot, so a checkpoint round-trip reproduces it exactly; schedule
    decisions use the full-precision dev losses.
    """
    if not train_entries or not dev_entries:
        raise ConfigError("train and dev sets must both be nonempty")

    init_rng = derive_rng(config.seed, "init")
    order_rng = derive_rng(config.seed, "order")
    drop_rng = derive_rng(config.seed, "dropout")
    noise_rng = derive_rng(config.seed, "noise")

    params = init_params(init_rng, len(vocab), alphabet, config.d)
    opt = Adam(params.tensors(), lr=config.lr)
    schedule = PlateauSchedule(config.lr, config.min_lr, config.patience)
    log = TrainLog()
    best_values: list[np.ndarray] | None = None
    n = len(train_entries)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        lr_in_effect = schedule.lr
        order = order_rng.permutation(n)
        loss_sum = 0.0
        try:
            for start in range(0, n, config.batch_size):
                batch = [train_entries[i] for i in order[start:start + config.batch_size]]
                with Tape() as tape:
                    for entry in batch:
                        loss = elbo_word_loss(
                            config.variant, entry, params, alphabet, noise_rng,
                            training=True, dropout=config.dropout,
                            drop_rng=drop_rng, eps_per_step=config.eps_per_step)
                        loss_sum += loss.item()
                        tape.backward(loss)
                    for p in params.tensors():
                        if p.grad is not None and len(batch) > 1:
                            p.grad /= len(batch)
                    clip_global_norm(params.tensors(), GRAD_NORM_CAP)
                    opt.lr = schedule.lr
                    opt.step()
                    opt.zero_grads()
                    tape.clear()
            train_loss = loss_sum / n
            dev_loss = mean_dev_loss(config.variant, dev_entries, params, alphabet)
        except NumericError as e:
            raise TrainingError(f"diverged at epoch {epoch}: {e}") from e
        if not (np.isfinite(train_loss) and np.isfinite(dev_loss)):
            raise TrainingError(f"non-finite loss at epoch {epoch}")

        log.records.append(EpochRecord(epoch, train_loss, dev_loss,
                                       lr_in_effect, time.perf_counter() - t0))
        verdict = schedule.update(dev_loss)
        if verdict == "improved":
            best_values = _quantized(params)
            old = _install(params, best_values)
            log.best_dev_loss = mean_dev_loss(config.variant, dev_entries, params, alphabet)
            _install(params, old)
            log.best_epoch = epoch
        if verdict == "stop":
            log.stop_reason = "lr-floor"
            break
    else:
        log.stop_reason = "max-epochs"

    _install(params, best_values)
    return params, log
