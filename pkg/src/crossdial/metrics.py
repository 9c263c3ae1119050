"""Automatic evaluation: corpus BLEU, Distinct-N, and language legality.

Everything here is built from scratch on exact integer n-gram counts, so
repeated evaluation is bit-identical and per-sentence statistics may be
aggregated in any order.

A note on reported precisions: the ``b1``/``b2`` columns are the order-1
and order-2 modified precisions of the order-4 BLEU computation, not
standalone BLEU-1/BLEU-2 scores.  ``score`` is the usual geometric mean
over orders 1..4 times the brevity penalty.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence


class MetricError(ValueError):
    """Raised for undefined metric inputs."""


# ---------------------------------------------------------------------------
# Tokenization


def tokenize_13a(text: str) -> list[str]:
    """Minimal WMT-style tokenization (the "13a" rule set).

    Normalizes a few common entities, splits ASCII punctuation and symbols
    off adjoining word characters (periods and commas only when not between
    digits, dashes after digits), and collapses whitespace runs.
    """
    norm = text
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")

    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


TOKENIZERS: dict[str, Callable[[str], list[str]]] = {
    "13a": tokenize_13a,
    "whitespace": whitespace_tokenize,
}


def _tokenizer_name(tokenizer: Callable[[str], list[str]]) -> str:
    for name, fn in TOKENIZERS.items():
        if fn is tokenizer:
            return name
    return getattr(tokenizer, "__name__", "custom")


def count_ngrams(tokens: Sequence[str], n: int) -> Counter:
    """Exact counts of order-n n-grams (as token tuples)."""
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU


@dataclass(frozen=True)
class BleuReport:
    """Corpus BLEU with its sufficient statistics.

    ``precisions`` are the raw (unsmoothed) modified n-gram precisions for
    orders 1..max_order on the 0-100 scale; orders with no hypothesis
    n-grams report 0.0 and are excluded from the geometric mean.
    """

    precisions: tuple[float, ...]
    score: float
    bp: float
    hyp_len: int
    ref_len: int
    smoothing_method: str
    smoothing_epsilon: float
    tokenizer: str

    @property
    def b1(self) -> float:
        return self.precisions[0]

    @property
    def b2(self) -> float:
        return self.precisions[1]


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    max_order: int = 4,
    smoothing: str = "floor",
    smoothing_epsilon: float = 1e-2,
    tokenizer: Callable[[str], list[str]] = tokenize_13a,
) -> BleuReport:
    """Corpus-level BLEU against one reference per hypothesis.

    Modified precisions are clipped n-gram matches over total hypothesis
    n-grams, aggregated over the corpus.  The brevity penalty is 1 when the
    hypothesis corpus is at least as long as the reference corpus, else
    exp(1 - r/c).  Smoothing ("floor") replaces a zero higher-order
    precision with ``smoothing_epsilon`` (on the 0-100 scale) inside the
    geometric mean; a zero order-1 precision always yields score 0.
    """
    if len(hypotheses) != len(references):
        raise MetricError(f"got {len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise MetricError("empty corpus")
    if smoothing not in ("floor", "none"):
        raise MetricError(f"unknown smoothing method {smoothing!r}")
    if max_order < 1:
        raise MetricError("max_order must be >= 1")

    correct = [0] * max_order
    total = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = tokenizer(hyp)
        ref_tokens = tokenizer(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_order + 1):
            hyp_ngrams = count_ngrams(hyp_tokens, n)
            if not hyp_ngrams:
                continue
            ref_ngrams = count_ngrams(ref_tokens, n)
            total[n - 1] += sum(hyp_ngrams.values())
            correct[n - 1] += sum(min(count, ref_ngrams[ng]) for ng, count in hyp_ngrams.items())

    if hyp_len == 0:
        raise MetricError("all hypotheses are empty")

    precisions = tuple(100.0 * c / t if t > 0 else 0.0 for c, t in zip(correct, total))

    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)

    if precisions[0] == 0.0:
        score = 0.0
    else:
        # work on the p/100 ratio scale: log(1.0) == 0.0 exactly, so a
        # perfect match scores exactly 100 * bp with no exp/log round-off
        logs = []
        degenerate = False
        for n in range(max_order):
            if total[n] == 0:
                continue
            p = precisions[n]
            if p == 0.0:
                if smoothing == "floor":
                    p = smoothing_epsilon
                else:
                    degenerate = True
                    break
            logs.append(math.log(p / 100.0))
        score = 0.0 if degenerate else 100.0 * bp * math.exp(sum(logs) / len(logs))

    return BleuReport(
        precisions=precisions,
        score=score,
        bp=bp,
        hyp_len=hyp_len,
        ref_len=ref_len,
        smoothing_method=smoothing,
        smoothing_epsilon=smoothing_epsilon,
        tokenizer=_tokenizer_name(tokenizer),
    )


# ---------------------------------------------------------------------------
# Distinct-N


@dataclass(frozen=True)
class DistinctReport:
    """Percent distinct unigrams (d1) and bigrams (d2), corpus level."""

    d1: float
    d2: float


def distinct_n(
    hypotheses: Sequence[str],
    n: int,
    tokenizer: Callable[[str], list[str]] = tokenize_13a,
) -> float:
    """100 * (distinct n-grams) / (total n-grams) across all hypotheses."""
    if n < 1:
        raise MetricError("n must be >= 1")
    seen: set[tuple[str, ...]] = set()
    total = 0
    for hyp in hypotheses:
        tokens = tokenizer(hyp)
        for i in range(len(tokens) - n + 1):
            seen.add(tuple(tokens[i : i + n]))
            total += 1
    if total == 0:
        raise MetricError(f"no n-grams of order {n} in the hypotheses; distinct-{n} is undefined")
    return 100.0 * len(seen) / total


def distinct_report(hypotheses: Sequence[str], tokenizer: Callable[[str], list[str]] = tokenize_13a) -> DistinctReport:
    return DistinctReport(
        d1=distinct_n(hypotheses, 1, tokenizer=tokenizer),
        d2=distinct_n(hypotheses, 2, tokenizer=tokenizer),
    )


# ---------------------------------------------------------------------------
# Language legality


@dataclass(frozen=True)
class LegalityReport:
    """Percent of generated whitespace tokens inside the target vocabulary.

    This is the quantitative proxy for "the model answered in the wrong
    language": responses drifting into another language (or into control
    tokens) score low.
    """

    legality: float


def language_legality(hypotheses: Sequence[str], target_vocabulary: Iterable[str]) -> LegalityReport:
    """Share of whitespace tokens belonging to ``target_vocabulary``.

    Whitespace tokens (not model subwords) keep the measure independent of
    any particular model's tokenizer.
    """
    vocabulary = set(target_vocabulary)
    if not hypotheses:
        raise MetricError("no hypotheses")
    if not vocabulary:
        raise MetricError("empty target vocabulary")
    total = 0
    legal = 0
    for hyp in hypotheses:
        for token in hyp.split():
            total += 1
            if token in vocabulary:
                legal += 1
    if total == 0:
        raise MetricError("hypotheses contain no tokens; legality is undefined")
    return LegalityReport(legality=100.0 * legal / total)


# ---------------------------------------------------------------------------
# Report files


def report_record(
    system: str,
    bleu: BleuReport,
    distinct: DistinctReport,
    legality: LegalityReport | None = None,
) -> dict:
    """One evaluated system as a flat record (the report-file schema)."""
    return {
        "system": system,
        "b1": bleu.b1,
        "b2": bleu.b2,
        "score": bleu.score,
        "bp": bleu.bp,
        "d1": distinct.d1,
        "d2": distinct.d2,
        "legality": None if legality is None else legality.legality,
        "smoothing_method": bleu.smoothing_method,
        "smoothing_epsilon": bleu.smoothing_epsilon,
        "tokenizer": bleu.tokenizer,
    }


def write_metric_report(path: str, records: Sequence[dict]) -> None:
    """Write report records as JSON lines (deterministic; no timestamps)."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_metric_report(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
