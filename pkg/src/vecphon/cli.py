"""Command-line entry points.

Subcommands: train, predict, evaluate, export-embeddings, resample.
Configuration is layered: built-in defaults, then a flat key=value
config file (--config), then command-line flags. Every run echoes its
effective configuration into the output directory so any result can be
reproduced from the echo alone.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration
problem.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (SplitSpec, WeightedForm, build_vocab, decompose,
                   parse_unimorph_tsv, parse_weighted_tsv, read_split_manifest,
                   sample_training_set, split_paradigms, write_split_manifest)
from .embeddings import PROJECTIONS, cosine, export_rows, write_embeddings
from .errors import CompatibilityError, ConfigError, DataError, VecphonError
from .evaluation import EvalReport, evaluate, resample_eval, surprisal
from .model import Variant, greedy_decode
from .seeds import derive_rng, derive_seed
from .training import TrainConfig, train
from .vocab import encode_entry

# every key a config file may set, with its parser
CONFIG_KEYS = {
    "seed": int, "variant": str, "dim": int, "out-dir": str,
    "data": str, "weighted-data": str, "split-manifest": str,
    "split-fracs": str, "coverage": lambda s: s.lower() == "true",
    "sample-k": int, "dropout": float, "lr": float, "min-lr": float,
    "patience": int, "batch-size": int, "epochs": int, "max-len": int,
    "checkpoint": str, "input": str, "morphemes": str, "gold": lambda s: s.lower() == "true",
    "out": str, "projection": str, "similarity": str,
    "sizes": str, "resamples": int, "variants": str, "run-name": str,
}


def parse_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key.replace("-", "_")] = CONFIG_KEYS[key](raw)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value {raw!r} for {key}") from None
    return values


def echo_config(ns, keys) -> None:
    os.makedirs(ns.out_dir, exist_ok=True)
    lines = [f"command={ns.command}"]
    for key in sorted(keys):
        lines.append(f"{key}={getattr(ns, key.replace('-', '_'))}")
    with open(os.path.join(ns.out_dir, "config.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_fracs(text) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"split fractions need 3 comma-separated numbers, got {text!r}")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad split fractions {text!r}") from None
    return a, b, c


def parse_int_list(text, what) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad {what} list {text!r}") from None
    if not values:
        raise ConfigError(f"empty {what} list")
    return values


# ---------------------------------------------------------------------------
# corpus plumbing shared by train / evaluate / resample

def load_slotted_corpus(ns):
    """Returns (slots, forms, counts): morpheme tuples, surface strings,
    token counts (all 1 for paradigm data)."""
    if ns.data and ns.weighted_data:
        raise ConfigError("give either --data or --weighted-data, not both")
    if ns.data:
        rows = parse_unimorph_tsv(ns.data)
        return [decompose(r) for r in rows], [r.form for r in rows], [1] * len(rows)
    if ns.weighted_data:
        rows = parse_weighted_tsv(ns.weighted_data)
        return ([r.morphemes for r in rows], [r.form for r in rows],
                [r.count for r in rows])
    raise ConfigError("a corpus is required: --data or --weighted-data")


def resolve_split(ns, slots):
    if ns.split_manifest:
        train_idx, dev_idx, test_idx, seed = read_split_manifest(ns.split_manifest)
        n = len(slots)
        for i in train_idx + dev_idx + test_idx:
            if not 0 <= i < n:
                raise DataError(f"split manifest index {i} out of range for {n} rows")
        return train_idx, dev_idx, test_idx, seed
    fracs = parse_fracs(ns.split_fracs)
    split_seed = derive_seed(ns.seed, "split")
    spec = SplitSpec(train_frac=fracs[0], dev_frac=fracs[1], test_frac=fracs[2],
                     seed=split_seed, coverage=ns.coverage)
    train_idx, dev_idx, test_idx = split_paradigms(slots, spec)
    return train_idx, dev_idx, test_idx, split_seed


def entries_for(indices, slots, forms, counts, alphabet, vocab):
    return [encode_entry(alphabet, vocab, slots[i], forms[i], counts[i])
            for i in indices]


def check_symbols(forms, alphabet):
    missing = sorted({c for form in forms for c in form} - set(alphabet.symbols))
    if missing:
        raise CompatibilityError(
            "symbols absent from the checkpoint alphabet: " + ", ".join(repr(c) for c in missing))


# ---------------------------------------------------------------------------
# commands

TRAIN_ECHO = ("data", "weighted-data", "variant", "dim", "seed", "dropout", "lr",
              "min-lr", "patience", "batch-size", "epochs", "split-fracs",
              "coverage", "sample-k", "out-dir")


def cmd_train(ns) -> int:
    slots, forms, counts = load_slotted_corpus(ns)
    train_idx, dev_idx, test_idx, split_seed = resolve_split(ns, slots)
    alphabet, vocab = build_vocab(forms, slots)

    if ns.sample_k is not None:
        if ns.sample_k > len(train_idx):
            raise ConfigError(f"--sample-k {ns.sample_k} exceeds the "
                              f"{len(train_idx)} training rows")
        pool = [WeightedForm(forms[i], tuple(slots[i]), counts[i]) for i in train_idx]
        rng = derive_rng(ns.seed, "sample")
        chosen = sample_training_set(pool, ns.sample_k, rng)
        train_entries = [encode_entry(alphabet, vocab, w.morphemes, w.form, w.count)
                         for w in chosen]
    else:
        train_entries = entries_for(train_idx, slots, forms, counts, alphabet, vocab)
    dev_entries = entries_for(dev_idx, slots, forms, counts, alphabet, vocab)

    config = TrainConfig(
        variant=Variant.from_tag(ns.variant), d=ns.dim, dropout=ns.dropout,
        lr=ns.lr, min_lr=ns.min_lr, patience=ns.patience,
        batch_size=ns.batch_size, max_epochs=ns.epochs, seed=ns.seed)
    params, log = train(config, train_entries, dev_entries, alphabet, vocab)

    os.makedirs(ns.out_dir, exist_ok=True)
    echo_config(ns, TRAIN_ECHO)
    save_checkpoint(os.path.join(ns.out_dir, "checkpoint.vpck"),
                    params, config.variant, alphabet, vocab)
    log.write(os.path.join(ns.out_dir, "trainlog.tsv"))
    write_split_manifest(os.path.join(ns.out_dir, "split"),
                         train_idx, dev_idx, test_idx, split_seed)
    print(f"trained {ns.variant} d={ns.dim} on {len(train_entries)} words; "
          f"best dev loss {log.best_dev_loss:.6f} at epoch {log.best_epoch} "
          f"({log.stop_reason})")
    print(f"checkpoint: {os.path.join(ns.out_dir, 'checkpoint.vpck')}")
    return 0


def read_prediction_requests(ns):
    """Each request: (morpheme identifiers, gold form or None)."""
    requests = []
    if ns.morphemes:
        requests.append((tuple(ns.morphemes.split("+")), None))
    if ns.input:
        if not os.path.exists(ns.input):
            raise DataError(f"no such file: {ns.input}")
        with open(ns.input, "r", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                cols = line.split("\t")
                gold = None
                if ns.gold:
                    if len(cols) < 2:
                        raise DataError(f"--gold needs a final gold column: {line!r}")
                    gold = cols[-1]
                    cols = cols[:-1]
                morphemes = tuple(cols) if len(cols) > 1 else tuple(cols[0].split("+"))
                requests.append((morphemes, gold))
    if not requests:
        raise ConfigError("nothing to predict: give --morphemes and/or --input")
    return requests


def cmd_predict(ns) -> int:
    params, variant, alphabet, vocab = load_checkpoint(ns.checkpoint)
    requests = read_prediction_requests(ns)
    out_lines = []
    for morphemes, gold in requests:
        unknown = [m for m in morphemes if m not in vocab]
        if unknown:
            out_lines.append("UNK-MORPHEME\t" + "+".join(unknown))
            continue
        ids = [vocab.index(m) for m in morphemes]
        pred = alphabet.decode(greedy_decode(variant, ids, params, alphabet, ns.max_len))
        fields = [pred]
        if gold is not None:
            try:
                entry = encode_entry(alphabet, vocab, morphemes, gold)
                fields.append(f"{surprisal(variant, entry, params, alphabet):.6f}")
            except VecphonError:
                fields.append("GOLD-NOT-ENCODABLE")
        out_lines.append("\t".join(fields))
    text = "\n".join(out_lines)
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)
    echo_config(ns, ("checkpoint", "input", "morphemes", "gold", "max-len", "out-dir"))
    return 0


def report_table(name, variant, rep: EvalReport) -> str:
    header = f"{'run':<16} {'variant':<10} {'ACC':>7} {'MLD':>7} {'NLL':>7} {'unk':>4}"
    row = (f"{name:<16} {variant.value:<10} {rep.accuracy:>7.1f} "
           f"{rep.mean_levenshtein:>7.3f} {rep.mean_surprisal:>7.3f} {rep.n_unknown:>4}")
    return header + "\n" + row


def cmd_evaluate(ns) -> int:
    params, variant, alphabet, vocab = load_checkpoint(ns.checkpoint)
    slots, forms, counts = load_slotted_corpus(ns)
    if ns.split_manifest:
        _, _, test_idx, _ = read_split_manifest(ns.split_manifest)
        for i in test_idx:
            if not 0 <= i < len(slots):
                raise DataError(f"split manifest index {i} out of range")
    else:
        test_idx = list(range(len(slots)))
    if not test_idx:
        raise DataError("empty test set")
    check_symbols([forms[i] for i in test_idx], alphabet)
    items = [(tuple(slots[i]), forms[i]) for i in test_idx]
    rep = evaluate(variant, params, alphabet, vocab, items, ns.max_len)

    name = ns.run_name or os.path.splitext(os.path.basename(ns.data or ns.weighted_data))[0]
    table = report_table(name, variant, rep)
    print(table)
    os.makedirs(ns.out_dir, exist_ok=True)
    echo_config(ns, ("checkpoint", "data", "weighted-data", "split-manifest",
                     "max-len", "run-name", "out-dir"))
    with open(os.path.join(ns.out_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(table + "\n")
    payload = {
        "run": name,
        "variant": variant.value,
        "conventions": "surprisal counts EOS in both the sum and the length",
        "accuracy": rep.accuracy,
        "mean_levenshtein": rep.mean_levenshtein,
        "mean_surprisal": rep.mean_surprisal,
        "n_items": rep.n_items,
        "n_unknown": rep.n_unknown,
        "items": [
            {"morphemes": list(r.morphemes), "gold": r.gold, "predicted": r.predicted,
             "edit_distance": r.edit_distance, "surprisal": r.surprisal,
             "unknown": r.unknown}
            for r in rep.records
        ],
    }
    with open(os.path.join(ns.out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=1)
    return 0


def cmd_export_embeddings(ns) -> int:
    params, variant, alphabet, vocab = load_checkpoint(ns.checkpoint)
    if ns.similarity:
        parts = ns.similarity.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--similarity needs two comma-separated identifiers, got {ns.similarity!r}")
        a, b = (params.morph_emb.data[vocab.index(p)] for p in parts)
        print(f"{cosine(a, b):.6f}")
        return 0
    rows = export_rows(params, vocab, ns.projection)
    os.makedirs(ns.out_dir, exist_ok=True)
    out_path = ns.out or os.path.join(ns.out_dir, "embeddings.tsv")
    write_embeddings(out_path, rows)
    echo_config(ns, ("checkpoint", "projection", "out-dir"))
    print(f"wrote {len(rows)} rows to {out_path}")
    return 0


def cmd_resample(ns) -> int:
    if not ns.weighted_data:
        raise ConfigError("resample needs --weighted-data")
    rows = parse_weighted_tsv(ns.weighted_data)
    slots = [r.morphemes for r in rows]
    forms = [r.form for r in rows]
    counts = [r.count for r in rows]
    pool_idx, dev_idx, test_idx, _ = resolve_split(ns, slots)
    sizes = parse_int_list(ns.sizes, "sizes")
    for k in sizes:
        if k > len(pool_idx):
            raise ConfigError(f"size {k} exceeds the sampling pool of {len(pool_idx)}")
    variants = [Variant.from_tag(v.strip()) for v in ns.variants.split(",")]

    alphabet, vocab = build_vocab(forms, slots)
    pool = [WeightedForm(forms[i], tuple(slots[i]), counts[i]) for i in pool_idx]
    dev_entries = entries_for(dev_idx, slots, forms, counts, alphabet, vocab)
    test_items = [(tuple(slots[i]), forms[i]) for i in test_idx]
    max_len = ns.max_len

    lines = ["k\tvariant\tacc_mean\tacc_sd\tmld_mean\tmld_sd\tnll_mean\tnll_sd"]
    for variant in variants:
        def protocol(k, sub_seed, variant=variant):
            chosen = sample_training_set(pool, k, np.random.default_rng(sub_seed))
            train_entries = [encode_entry(alphabet, vocab, w.morphemes, w.form, w.count)
                             for w in chosen]
            config = TrainConfig(
                variant=variant, d=ns.dim, dropout=ns.dropout, lr=ns.lr,
                min_lr=ns.min_lr, patience=ns.patience, batch_size=ns.batch_size,
                max_epochs=ns.epochs, seed=sub_seed)
            params, _ = train(config, train_entries, dev_entries, alphabet, vocab)
            return evaluate(variant, params, alphabet, vocab, test_items, max_len)

        points = resample_eval(protocol, sizes, ns.resamples, ns.seed)
        for p in points:
            lines.append(f"{p.k}\t{variant.value}\t{p.acc_mean:.3f}\t{p.acc_sd:.3f}"
                         f"\t{p.mld_mean:.4f}\t{p.mld_sd:.4f}"
                         f"\t{p.nll_mean:.4f}\t{p.nll_sd:.4f}")
    text = "\n".join(lines)
    print(text)
    os.makedirs(ns.out_dir, exist_ok=True)
    echo_config(ns, ("weighted-data", "sizes", "resamples", "variants", "dim",
                     "seed", "dropout", "lr", "min-lr", "patience", "batch-size",
                     "epochs", "split-fracs", "coverage", "out-dir"))
    with open(os.path.join(ns.out_dir, "curve.tsv"), "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def add_common(p):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default="pos-indep",
                   choices=[v.value for v in Variant])
    p.add_argument("--dim", type=int, default=200, help="embedding/hidden size d")
    p.add_argument("--out-dir", default="vecphon-out")


def add_corpus(p):
    p.add_argument("--data", help="paradigm TSV: lemma<TAB>form<TAB>features")
    p.add_argument("--weighted-data",
                   help="weighted TSV: form<TAB>stem<TAB>affix-or-∅<TAB>count")
    p.add_argument("--split-manifest", help="reuse an existing split directory")
    p.add_argument("--split-fracs", default="0.8,0.1,0.1")
    p.add_argument("--no-coverage", dest="coverage", action="store_false",
                   help="allow dev/test morphemes unseen in train")
    p.set_defaults(coverage=True)


def add_train_knobs(p):
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--min-lr", type=float, default=1e-5)
    p.add_argument("--patience", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--epochs", type=int, default=100)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vecphon",
        description="Morpheme-vector word spelling: train and query "
                    "character-level decoders over continuous underlying forms.")
    parser.add_argument("--version", action="version", version=f"vecphon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subcommands = {}

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    add_common(p)
    add_corpus(p)
    add_train_knobs(p)
    p.add_argument("--sample-k", type=int, default=None,
                   help="subsample this many training words by token count")
    p.set_defaults(func=cmd_train)
    subcommands["train"] = p

    p = sub.add_parser("predict", help="spell words for morpheme sequences")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--morphemes", help="single request, e.g. lemma+V;PST")
    p.add_argument("--input", help="batch file: morphemes per line, tab- or +-separated")
    p.add_argument("--gold", action="store_true",
                   help="last column of --input is a gold form; emit its surprisal")
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--out", help="write predictions here instead of stdout")
    p.set_defaults(func=cmd_predict)
    subcommands["predict"] = p

    p = sub.add_parser("evaluate", help="score a checkpoint on held-out forms")
    add_common(p)
    add_corpus(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--run-name", default=None)
    p.set_defaults(func=cmd_evaluate)
    subcommands["evaluate"] = p

    p = sub.add_parser("export-embeddings", help="dump morpheme vectors")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--projection", default="none", choices=PROJECTIONS)
    p.add_argument("--out", help="output file (default: out-dir/embeddings.tsv)")
    p.add_argument("--similarity", metavar="A,B",
                   help="print the cosine of two morphemes' embeddings and exit")
    p.set_defaults(func=cmd_export_embeddings)
    subcommands["export-embeddings"] = p

    p = sub.add_parser("resample", help="learning curves over training sizes")
    add_common(p)
    add_corpus(p)
    add_train_knobs(p)
    p.add_argument("--sizes", default="200,400,600,800",
                   help="comma-separated training sizes k")
    p.add_argument("--resamples", type=int, default=10)
    p.add_argument("--variants", default="pos-indep",
                   help="comma-separated variant tags to sweep")
    p.add_argument("--max-len", type=int, default=40)
    p.set_defaults(func=cmd_resample)
    subcommands["resample"] = p

    return parser, subcommands


def main(argv=None) -> int:
    parser, subcommands = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config_path = None
        for i, tok in enumerate(argv):
            if tok == "--config" and i + 1 < len(argv):
                config_path = argv[i + 1]
            elif tok.startswith("--config="):
                config_path = tok.split("=", 1)[1]
        if config_path:
            defaults = parse_config_file(config_path)
            for sub_parser in subcommands.values():
                sub_parser.set_defaults(**defaults)
        ns = parser.parse_args(argv)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return ns.func(ns)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except VecphonError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
