"""Metrics and significance: exact-match accuracy, mean edit distance,
per-symbol surprisal, resample aggregation, paired permutation test.

Surprisal counts the EOS emission in both the log-probability sum and
the length normalizer. Test items with out-of-vocabulary morphemes are
scored as failures (no exact match, edit distance = gold length); they
are excluded only from the surprisal mean, where no probability is
defined, and their number is reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .model import ModelParams, Variant, greedy_decode, word_logprob
from .seeds import derive_rng, derive_seed
from .vocab import Alphabet, LexiconEntry, MorphemeVocab


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost insert/delete/substitute distance, two-row DP."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1,
                         cur[j - 1] + 1,
                         prev[j - 1] + (ca != cb))
        prev = cur
    return prev[len(b)]


def surprisal(variant: Variant, entry: LexiconEntry, params: ModelParams,
              alphabet: Alphabet) -> float:
    """Negative log-probability of the gold form at the noise-free mean,
    in nats per symbol; EOS counts in both numerator and length."""
    lp = word_logprob(variant, entry, params, alphabet).item()
    return -lp / (len(entry.form) + 1)


@dataclass
class PredictionRecord:
    morphemes: tuple[str, ...]
    gold: str
    predicted: str
    edit_distance: int
    surprisal: float | None  # None when morphemes are out of vocabulary
    unknown: bool = False


@dataclass
class EvalReport:
    accuracy: float  # percent of exact matches, 0..100
    mean_levenshtein: float
    mean_surprisal: float
    n_items: int
    n_unknown: int
    records: list[PredictionRecord] = field(default_factory=list)


def evaluate(variant: Variant, params: ModelParams, alphabet: Alphabet,
             vocab: MorphemeVocab, items: Sequence[tuple[tuple[str, ...], str]],
             max_len: int) -> EvalReport:
    """Score (morpheme identifiers, gold form) pairs with greedy decoding
    at the noise-free mean. Pure in (params, items): repeated calls agree."""
    if not items:
        raise DataError("empty evaluation set")
    records = []
    hits = 0
    dist_sum = 0
    surp_sum = 0.0
    n_known = 0
    for morphemes, gold in items:
        morphemes = tuple(morphemes)
        if any(m not in vocab for m in morphemes) or any(
                c not in alphabet.symbols for c in gold):
            records.append(PredictionRecord(morphemes, gold, "", len(gold), None, True))
            dist_sum += len(gold)
            continue
        ids = [vocab.index(m) for m in morphemes]
        pred_ids = greedy_decode(variant, ids, params, alphabet, max_len)
        pred = alphabet.decode(pred_ids)
        gold_entry = LexiconEntry(morphemes=tuple(ids), form=alphabet.encode(gold))
        s = surprisal(variant, gold_entry, params, alphabet)
        dist = levenshtein(pred, gold)
        records.append(PredictionRecord(morphemes, gold, pred, dist, s))
        hits += pred == gold
        dist_sum += dist
        surp_sum += s
        n_known += 1
    n = len(items)
    return EvalReport(
        accuracy=100.0 * hits / n,
        mean_levenshtein=dist_sum / n,
        mean_surprisal=surp_sum / n_known if n_known else float("nan"),
        n_items=n,
        n_unknown=n - n_known,
        records=records,
    )


# ---------------------------------------------------------------------------
# resample aggregation

def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and sample standard deviation (n-1 denominator)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1))


@dataclass
class CurvePoint:
    k: int
    acc_mean: float
    acc_sd: float
    mld_mean: float
    mld_sd: float
    nll_mean: float
    nll_sd: float


def resample_eval(protocol: Callable[[int, int], EvalReport],
                  sizes: Sequence[int], n_resamples: int,
                  seed: int) -> list[CurvePoint]:
    """Expected-performance estimate: for each training size k, run the
    protocol (subsample, train, evaluate) n_resamples times under derived
    seeds and aggregate each metric as mean and sample deviation."""
    if n_resamples < 2:
        raise ConfigError(f"need at least 2 resamples, got {n_resamples}")
    points = []
    for k in sizes:
        reports = [protocol(k, derive_seed(seed, f"resample-k{k}-r{r}"))
                   for r in range(n_resamples)]
        acc = mean_sd([r.accuracy for r in reports])
        mld = mean_sd([r.mean_levenshtein for r in reports])
        nll = mean_sd([r.mean_surprisal for r in reports])
        points.append(CurvePoint(k, acc[0], acc[1], mld[0], mld[1], nll[0], nll[1]))
    return points


# ---------------------------------------------------------------------------
# significance

def paired_permutation_test(a: Sequence[float], b: Sequence[float],
                            n_permutations: int = 10000, seed: int = 0) -> float:
    """Two-sided p-value for the mean paired difference under random sign
    flips. Exact enumeration of all 2^n sign patterns when n <= 20,
    otherwise Monte Carlo with add-one smoothing."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"paired vectors must match, got {a.shape} and {b.shape}")
    if n_permutations < 1000:
        raise ConfigError(f"need at least 1000 permutations, got {n_permutations}")
    diffs = a - b
    n = diffs.size
    obs = 0.0
    for d in diffs:
        obs += d

    if n <= 20:
        # doubling enumeration; entry 0 accumulates the all-plus pattern in
        # the same left-to-right order as obs, so the identity permutation
        # matches it bit for bit
        sums = np.zeros(1)
        for d in diffs:
            sums = np.concatenate([sums + d, sums - d])
        return float(np.count_nonzero(np.abs(sums) >= abs(obs)) / sums.size)

    rng = derive_rng(seed, "paired-permutation")
    signs = rng.choice((1.0, -1.0), size=(n_permutations, n))
    perm = signs @ diffs
    # tolerance guards the self-permutation tie under reordered summation
    tol = 1e-12 * max(1.0, abs(obs))
    extreme = int(np.count_nonzero(np.abs(perm) >= abs(obs) - tol))
    return (1 + extreme) / (1 + n_permutations)
