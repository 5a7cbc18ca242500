"""Corpus ingestion, morpheme decomposition, splitting, subsampling.

Two input formats:

  - paradigm TSV: lemma <TAB> inflected form <TAB> feature bundle, one
    row per paradigm slot. A word decomposes into exactly two abstract
    morphemes, one keyed by the lemma and one by the full feature-bundle
    string (the bundle is atomic: no per-tag split, no tag reordering).
  - weighted TSV: form <TAB> stem key <TAB> affix key or "∅" <TAB> count,
    for corpora where training sets are drawn by token frequency.

Splitting is paradigm-slot based. With the coverage policy on (the
default), every morpheme that appears in dev or test also appears in at
least one training slot; a held-out slot whose affix never trains is
unpredictable by construction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, SplitError
from .vocab import Alphabet, MorphemeVocab

NO_AFFIX = "∅"


@dataclass(frozen=True)
class RawParadigmRow:
    lemma: str
    form: str
    features: str


@dataclass(frozen=True)
class WeightedForm:
    form: str
    morphemes: tuple[str, ...]  # length 1 (bare stem) or 2 (stem + affix)
    count: int


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    dev_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0
    coverage: bool = True

    def __post_init__(self):
        fracs = (self.train_frac, self.dev_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ConfigError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fracs}")


# ---------------------------------------------------------------------------
# parsing

def _read_lines(path) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        text = f.read()
    return text.replace("\r\n", "\n").split("\n")


def parse_unimorph_tsv(path) -> list[RawParadigmRow]:
    """Three-column paradigm rows; duplicates of (lemma, features) keep
    the first occurrence."""
    rows: list[RawParadigmRow] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
        lemma, form, features = (c.strip() for c in cols)
        if not (lemma and form and features):
            raise ParseError(f"{path}:{lineno}: empty field")
        key = (lemma, features)
        if key in seen:
            continue
        seen.add(key)
        rows.append(RawParadigmRow(lemma, form, features))
    if not rows:
        raise DataError(f"{path}: no usable rows")
    return rows


def decompose(row: RawParadigmRow) -> tuple[str, str]:
    """A paradigm slot's abstract morphemes: lemma key, then the whole
    feature bundle as one key. Bundles differing only in tag order stay
    distinct on purpose."""
    return (row.lemma, row.features)


def parse_weighted_tsv(path) -> list[WeightedForm]:
    """Four-column weighted rows; affix "∅" means a bare one-morpheme word."""
    out: list[WeightedForm] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        form, stem, affix, count_s = (c.strip() for c in cols)
        if not (form and stem and affix):
            raise ParseError(f"{path}:{lineno}: empty field")
        try:
            count = int(count_s)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad count {count_s!r}") from None
        if count < 0:
            raise ParseError(f"{path}:{lineno}: negative count {count}")
        morphemes = (stem,) if affix == NO_AFFIX else (stem, affix)
        out.append(WeightedForm(form, morphemes, count))
    if not out:
        raise DataError(f"{path}: no usable rows")
    return out


# ---------------------------------------------------------------------------
# token-frequency subsampling

def sample_training_set(corpus: Sequence[WeightedForm], k: int,
                        rng: np.random.Generator) -> list[WeightedForm]:
    """Draw k distinct forms without replacement, each draw proportional
    to the remaining items' token counts. Once every remaining count is
    zero the leftover draws are uniform."""
    n = len(corpus)
    if k > n:
        raise ConfigError(f"cannot sample {k} items from a corpus of {n}")
    counts = np.array([w.count for w in corpus], dtype=np.float64)
    if counts.sum() <= 0:
        raise DataError("all token counts are zero")
    picked: list[int] = []
    alive = list(range(n))
    for _ in range(k):
        weights = counts[alive]
        total = weights.sum()
        if total <= 0:
            weights = np.ones(len(alive))
            total = float(len(alive))
        r = rng.random() * total
        acc = 0.0
        choice = len(alive) - 1
        for pos, w in enumerate(weights):
            acc += w
            if r < acc:
                choice = pos
                break
        picked.append(alive.pop(choice))
    return [corpus[i] for i in picked]


# ---------------------------------------------------------------------------
# paradigm splitting

def split_paradigms(slots: Sequence[tuple[str, ...]],
                    spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    """Partition slot indices into train/dev/test by ``spec.*_frac``.

    Slots are visited in seeded random order. Under the coverage policy
    the first slot in which each morpheme appears is forced into train,
    and dev/test fill their quotas from the remaining slots, so every
    held-out morpheme has at least one training occurrence.
    """
    n = len(slots)
    n_dev = round(spec.dev_frac * n)
    n_test = round(spec.test_frac * n)
    if n_dev < 1 or n_test < 1 or n - n_dev - n_test < 1:
        raise SplitError(f"{n} slots cannot fill a "
                         f"{spec.train_frac}/{spec.dev_frac}/{spec.test_frac} split")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)

    if not spec.coverage:
        dev = sorted(int(i) for i in order[:n_dev])
        test = sorted(int(i) for i in order[n_dev:n_dev + n_test])
        train = sorted(int(i) for i in order[n_dev + n_test:])
        return train, dev, test

    covered: set[str] = set()
    anchors: list[int] = []
    floaters: list[int] = []
    for i in order:
        i = int(i)
        if any(m not in covered for m in slots[i]):
            anchors.append(i)
            covered.update(slots[i])
        else:
            floaters.append(i)
    if len(floaters) < n_dev + n_test:
        singles = sorted({m for i in anchors for m in slots[i]
                          if sum(m in s for s in slots) == 1})
        raise SplitError(
            "too few slots remain after covering every morpheme in train; "
            f"single-occurrence morphemes: {', '.join(singles) if singles else '(none)'}")
    dev = sorted(floaters[:n_dev])
    test = sorted(floaters[n_dev:n_dev + n_test])
    train = sorted(anchors + floaters[n_dev + n_test:])
    return train, dev, test


# ---------------------------------------------------------------------------
# vocabulary construction

def build_vocab(forms: Iterable[str],
                morpheme_seqs: Iterable[tuple[str, ...]]) -> tuple[Alphabet, MorphemeVocab]:
    """Inventories over the whole corpus (all splits), sorted, so held-out
    forms stay representable and construction is order-independent."""
    forms = list(forms)
    alphabet = Alphabet.from_corpus(forms)
    vocab = MorphemeVocab(m for seq in morpheme_seqs for m in seq)
    return alphabet, vocab


# ---------------------------------------------------------------------------
# split manifest

def write_split_manifest(directory, train: list[int], dev: list[int],
                         test: list[int], seed: int) -> None:
    """Three index files plus the seed, enough to reproduce a split exactly."""
    os.makedirs(directory, exist_ok=True)
    for name, idx in (("train.idx", train), ("dev.idx", dev), ("test.idx", test)):
        with open(os.path.join(directory, name), "w", encoding="utf-8") as f:
            f.write("\n".join(str(i) for i in idx) + ("\n" if idx else ""))
    with open(os.path.join(directory, "seed.txt"), "w", encoding="utf-8") as f:
        f.write(f"{seed}\n")


def read_split_manifest(directory) -> tuple[list[int], list[int], list[int], int]:
    def read_idx(name):
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            raise DataError(f"split manifest incomplete: missing {name}")
        with open(path, "r", encoding="utf-8") as f:
            return [int(line) for line in f.read().split() if line]

    train, dev, test = (read_idx(n) for n in ("train.idx", "dev.idx", "test.idx"))
    with open(os.path.join(directory, "seed.txt"), "r", encoding="utf-8") as f:
        seed = int(f.read().strip())
    return train, dev, test, seed
