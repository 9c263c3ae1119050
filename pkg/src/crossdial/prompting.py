"""Prompt formatting for dialogue pairs and its inverse.

Three layouts are produced here:

* prompted   -- "Context: [X] Response: <extra_id_0>"  /  "<extra_id_0> [Y] <extra_id_1>"
* plain      -- source and target are the raw context and response
* corruption -- one token span replaced by the first sentinel; the target
                restates the span between the two sentinels

The prompted layout deliberately reuses the sentinel frame of the
corruption layout: fine-tuning then looks like more denoising, which is
what protects a multilingual model from drifting onto the tuning language.
Only two sentinels exist, so corruption is capped at a single interior
span (the second sentinel is the terminator).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import DialoguePair
from .kvconfig import coerce, load_kv

log = logging.getLogger(__name__)


class PromptError(ValueError):
    """Raised for invalid templates or unformattable inputs."""


@dataclass(frozen=True)
class PromptTemplate:
    """Hand-written prompt strings plus the two sentinel tokens."""

    context_prefix: str = "Context:"
    response_prefix: str = "Response:"
    sentinel0: str = "<extra_id_0>"
    sentinel1: str = "<extra_id_1>"

    def __post_init__(self) -> None:
        for name in ("context_prefix", "response_prefix", "sentinel0", "sentinel1"):
            if not getattr(self, name):
                raise PromptError(f"template field {name} must not be empty")
        if self.sentinel0 == self.sentinel1:
            raise PromptError("the two sentinels must differ")
        for name in ("sentinel0", "sentinel1"):
            if any(ch.isspace() for ch in getattr(self, name)):
                raise PromptError(f"sentinel {name} must not contain whitespace")


DEFAULT_TEMPLATE = PromptTemplate()

_TEMPLATE_SCHEMA = {
    "context_prefix": str,
    "response_prefix": str,
    "sentinel0": str,
    "sentinel1": str,
}


def load_template(path: str) -> PromptTemplate:
    """Read a template override file; absent keys keep their defaults."""
    values = coerce(load_kv(path), _TEMPLATE_SCHEMA, source=str(path))
    return PromptTemplate(**values)


@dataclass(frozen=True)
class FormattedExample:
    """A (source, target) training pair after formatting.

    ``prompted`` marks the fixed-prompt layout.  ``identity_corruption`` is
    set only by :func:`corrupt_spans` when the requested corruption rounded
    to zero tokens and the text was passed through unchanged.
    """

    source: str
    target: str
    prompted: bool
    identity_corruption: bool = False


def format_prompted(pair: DialoguePair, template: PromptTemplate = DEFAULT_TEMPLATE) -> FormattedExample:
    """Wrap a pair in the fixed prompt with sentinel-framed target.

    Rejects pairs whose text contains either sentinel: extraction from
    generated text must stay unambiguous.
    """
    for sentinel in (template.sentinel0, template.sentinel1):
        if sentinel in pair.context or sentinel in pair.response:
            raise PromptError(f"pair text contains the sentinel {sentinel!r}")
    source = " ".join([template.context_prefix, pair.context, template.response_prefix, template.sentinel0])
    target = " ".join([template.sentinel0, pair.response, template.sentinel1])
    return FormattedExample(source=source, target=target, prompted=True)


def format_plain(pair: DialoguePair) -> FormattedExample:
    """The non-prompted baseline layout: raw context in, raw response out."""
    return FormattedExample(source=pair.context, target=pair.response, prompted=False)


def extract_response(generated: str, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    """Recover the response between the first sentinel pair of a generation.

    Total on arbitrary text: without sentinel0 the whole input (trimmed) is
    returned; without a closing sentinel1 everything after sentinel0 is.
    """
    start = generated.find(template.sentinel0)
    if start < 0:
        return generated.strip()
    start += len(template.sentinel0)
    end = generated.find(template.sentinel1, start)
    if end < 0:
        return generated[start:].strip()
    return generated[start:end].strip()


def corrupt_spans(
    text: str,
    corruption_rate: float,
    mean_span_length: float,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    seed: int = 0,
) -> FormattedExample:
    """Mask one token span of ``text`` with sentinel0; target restates it.

    The span budget is round(corruption_rate * token count).  The plan
    would place round(budget / mean_span_length) spans, but the two-sentinel
    format admits exactly one interior span, so the whole budget lands in a
    single contiguous span at a seed-chosen position.  A budget of zero
    returns the identity corruption (source unchanged, empty target) with
    ``identity_corruption`` set.
    """
    tokens = text.split()
    if len(tokens) < 2:
        raise PromptError("span corruption needs at least 2 tokens")
    if not 0.0 < corruption_rate < 1.0:
        raise PromptError("corruption_rate must be in (0, 1)")
    if mean_span_length <= 0:
        raise PromptError("mean_span_length must be positive")

    budget = int(corruption_rate * len(tokens) + 0.5)
    if budget == 0:
        return FormattedExample(source=text, target="", prompted=False, identity_corruption=True)

    span_length = min(budget, len(tokens))
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(tokens) - span_length + 1))
    span = tokens[start : start + span_length]
    source_tokens = tokens[:start] + [template.sentinel0] + tokens[start + span_length :]
    target_tokens = [template.sentinel0] + span + [template.sentinel1]
    return FormattedExample(
        source=" ".join(source_tokens),
        target=" ".join(target_tokens),
        prompted=False,
    )
