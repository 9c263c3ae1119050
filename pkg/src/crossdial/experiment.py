"""Scenario orchestration: staged fine-tuning runs and the forgetting study.

Two transfer scenarios are wired here, each in a plain and a prompted
variant (four settings total):

* fs-xlt  -- train on the auxiliary language, then adapt on the few target
             examples; checkpoint selection uses the matching validation
             language per stage (auxiliary, then target).
* mtl     -- interleave the few target examples evenly into the auxiliary
             stream and train once; checkpoint selection deliberately uses
             the AUXILIARY validation set, mirroring the common situation
             where no target validation data exists.

The study pretrains one model per seed with span corruption on both
languages' raw text, snapshots it, and replays all four settings from the
identical snapshot, so any difference between settings is caused by the
fine-tuning recipe alone.  Wall-clock timings are kept out of every
deterministic artifact (they go to a separate diagnostics log).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    _SYNTHETIC_SCHEMA,
    Corpus,
    SyntheticSpec,
    derive_token_vocabulary,
    generate_synthetic_bilingual,
    synthetic_spec_from_kv,
)
from .interleave import interleave_even
from .kvconfig import ConfigError, coerce, load_kv
from .metrics import (
    BleuReport,
    DistinctReport,
    LegalityReport,
    corpus_bleu,
    distinct_report,
    language_legality,
    report_record,
    write_metric_report,
)
from .model import (
    PRETRAIN_DEFAULTS,
    SOURCE_TRAIN_DEFAULTS,
    TARGET_ADAPT_DEFAULTS,
    AttentiveSeq2Seq,
    ModelConfig,
    OptimizerConfig,
    Vocabulary,
    generate_corpus,
    pretrain_span_corruption,
    restore_checkpoint,
    select_best_checkpoint,
    train,
)
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, extract_response, format_plain, format_prompted

log = logging.getLogger(__name__)

SCENARIOS = ("fs-xlt", "mtl")

# setting name -> (scenario, prompted)
SETTINGS = {
    "FS-XLT": ("fs-xlt", False),
    "FS-XLT_pmpt": ("fs-xlt", True),
    "MTL": ("mtl", False),
    "MTL_pmpt": ("mtl", True),
}


def template_texts(template: PromptTemplate) -> list[str]:
    """The template strings a model vocabulary must cover."""
    return [template.context_prefix, template.response_prefix, template.sentinel0, template.sentinel1]


def format_pairs(pairs: Iterable, prompted: bool, template: PromptTemplate = DEFAULT_TEMPLATE) -> list[tuple[str, str]]:
    """Render dialogue pairs to (source, target) texts in one layout."""
    out = []
    for pair in pairs:
        ex = format_prompted(pair, template) if prompted else format_plain(pair)
        out.append((ex.source, ex.target))
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: scenario, layout, per-stage optimizer budgets."""

    scenario: str
    prompted: bool
    train_config: OptimizerConfig = SOURCE_TRAIN_DEFAULTS
    adapt_config: OptimizerConfig = TARGET_ADAPT_DEFAULTS
    seed: int = 0
    eval_every: int | None = None
    max_generate: int = 64

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r} (expected one of {SCENARIOS})")

    @property
    def setting_name(self) -> str:
        base = {"fs-xlt": "FS-XLT", "mtl": "MTL"}[self.scenario]
        return base + ("_pmpt" if self.prompted else "")


@dataclass(frozen=True)
class ScenarioData:
    """The five corpora a scenario consumes, plus the legality inventory."""

    aux_train: Corpus
    aux_valid: Corpus
    tgt_train: Corpus
    tgt_valid: Corpus
    tgt_test: Corpus
    target_vocabulary: frozenset[str] | None = None

    @classmethod
    def from_synthetic(cls, bundle) -> "ScenarioData":
        return cls(
            aux_train=bundle.aux_train,
            aux_valid=bundle.aux_valid,
            tgt_train=bundle.tgt_fewshot,
            tgt_valid=bundle.tgt_valid,
            tgt_test=bundle.tgt_test,
            target_vocabulary=bundle.tgt_vocabulary,
        )

    def legality_vocabulary(self) -> frozenset[str]:
        if self.target_vocabulary is not None:
            return self.target_vocabulary
        return derive_token_vocabulary([self.tgt_train, self.tgt_valid, self.tgt_test])


@dataclass(frozen=True)
class RunReport:
    """Everything observable about one finished scenario run."""

    setting: str
    scenario: str
    prompted: bool
    seed: int
    contexts: tuple[str, ...]
    references: tuple[str, ...]
    raw_generations: tuple[str, ...]
    hypotheses: tuple[str, ...]
    bleu: BleuReport
    distinct: DistinctReport
    legality: LegalityReport
    selected_step: int
    selected_valid_loss: float
    selection_language: str  # language of the validation set that picked the checkpoint
    total_steps: int
    wall_seconds: float  # diagnostics only; never written into deterministic artifacts


def run_scenario(
    model: AttentiveSeq2Seq,
    data: ScenarioData,
    spec: ExperimentSpec,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> RunReport:
    """Run one setting on an already (pre)trained model, in place."""
    started = time.perf_counter()

    def fmt(corpus) -> list[tuple[str, str]]:
        return format_pairs(corpus, spec.prompted, template)

    total_steps = 0
    if spec.scenario == "fs-xlt":
        stage1 = train(model, fmt(data.aux_train), fmt(data.aux_valid), spec.train_config, eval_every=spec.eval_every)
        restore_checkpoint(model, select_best_checkpoint(stage1.checkpoints))
        total_steps += stage1.train_losses[-1][0] if stage1.train_losses else 0
        stage2 = train(model, fmt(data.tgt_train), fmt(data.tgt_valid), spec.adapt_config, eval_every=spec.eval_every)
        best = select_best_checkpoint(stage2.checkpoints)
        restore_checkpoint(model, best)
        total_steps += stage2.train_losses[-1][0] if stage2.train_losses else 0
        selection_language = data.tgt_valid.language
    else:
        mixed = interleave_even(data.aux_train, data.tgt_train)
        result = train(
            model,
            format_pairs(mixed.pairs, spec.prompted, template),
            fmt(data.aux_valid),
            spec.train_config,
            eval_every=spec.eval_every,
        )
        best = select_best_checkpoint(result.checkpoints)
        restore_checkpoint(model, best)
        total_steps += result.train_losses[-1][0] if result.train_losses else 0
        selection_language = data.aux_valid.language

    sources = []
    for pair in data.tgt_test:
        ex = format_prompted(pair, template) if spec.prompted else format_plain(pair)
        sources.append(ex.source)
    raw = generate_corpus(model, sources, max_length=spec.max_generate)
    hypotheses = [extract_response(text, template) for text in raw] if spec.prompted else list(raw)
    references = [pair.response for pair in data.tgt_test]

    bleu = corpus_bleu(hypotheses, references)
    distinct = distinct_report(hypotheses)
    legality = language_legality(hypotheses, data.legality_vocabulary())
    wall = time.perf_counter() - started
    log.info(
        "%s seed=%d: bleu %.2f, legality %.1f%% (selected step %d on %s valid)",
        spec.setting_name, spec.seed, bleu.score, legality.legality, best.step, selection_language,
    )
    return RunReport(
        setting=spec.setting_name,
        scenario=spec.scenario,
        prompted=spec.prompted,
        seed=spec.seed,
        contexts=tuple(pair.context for pair in data.tgt_test),
        references=tuple(references),
        raw_generations=tuple(raw),
        hypotheses=tuple(hypotheses),
        bleu=bleu,
        distinct=distinct,
        legality=legality,
        selected_step=best.step,
        selected_valid_loss=best.valid_loss,
        selection_language=selection_language,
        total_steps=total_steps,
        wall_seconds=wall,
    )


# ---------------------------------------------------------------------------
# The forgetting study


REFERENCE_SYNTHETIC = SyntheticSpec()

# The reference budgets below drive a from-scratch ~80k-parameter model, so
# the learning rates sit well above the defaults that suit a large
# pretrained network.
STUDY_PRETRAIN = OptimizerConfig(learning_rate=5e-3, epochs=8, batch_size=8)
STUDY_TRAIN = OptimizerConfig(learning_rate=3e-3, epochs=4, batch_size=8)
STUDY_ADAPT = OptimizerConfig(learning_rate=6e-3, epochs=6, batch_size=4)


@dataclass(frozen=True)
class StudyConfig:
    synthetic: SyntheticSpec = REFERENCE_SYNTHETIC
    pretrain: OptimizerConfig = STUDY_PRETRAIN
    train: OptimizerConfig = STUDY_TRAIN
    adapt: OptimizerConfig = STUDY_ADAPT
    seeds: tuple[int, ...] = (0, 1, 2)
    eval_every: int | None = None
    max_generate: int = 64

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")


@dataclass
class StudyReport:
    config: StudyConfig
    seeds: tuple[int, ...]
    runs: dict[str, tuple[RunReport, ...]]  # setting -> one report per seed
    medians: dict[str, dict[str, float]]  # setting -> metric -> median over seeds
    wall_seconds: float

    def direction_holds(self) -> bool:
        """Median target legality: does the prompted variant match or beat
        its plain counterpart in both scenarios?"""
        med = self.medians
        return (
            med["FS-XLT_pmpt"]["legality"] >= med["FS-XLT"]["legality"]
            and med["MTL_pmpt"]["legality"] >= med["MTL"]["legality"]
        )


def run_forgetting_study(config: StudyConfig = StudyConfig(), template: PromptTemplate = DEFAULT_TEMPLATE) -> StudyReport:
    """Pretrain once per seed, then replay all four settings from the same
    snapshot; aggregate per-setting medians over seeds."""
    started = time.perf_counter()
    runs: dict[str, list[RunReport]] = {name: [] for name in SETTINGS}
    for seed in config.seeds:
        synth = dataclasses.replace(config.synthetic, seed=seed)
        bundle = generate_synthetic_bilingual(synth)
        data = ScenarioData.from_synthetic(bundle)
        vocabulary = Vocabulary.build(
            [bundle.aux_train, bundle.aux_valid, bundle.aux_test, bundle.tgt_fewshot, bundle.tgt_valid, bundle.tgt_test],
            extra_texts=template_texts(template),
        )
        model = AttentiveSeq2Seq(vocabulary, ModelConfig(seed=seed))
        log.info("seed %d: pretraining on %d + %d raw texts", seed, len(bundle.aux_train), len(bundle.tgt_valid))
        pretrain_span_corruption(model, [bundle.aux_train, bundle.tgt_valid], config.pretrain, template=template, seed=seed)
        base = model.snapshot()
        for name, (scenario, prompted) in SETTINGS.items():
            model.load_snapshot(base)
            spec = ExperimentSpec(
                scenario=scenario,
                prompted=prompted,
                train_config=config.train,
                adapt_config=config.adapt,
                seed=seed,
                eval_every=config.eval_every,
                max_generate=config.max_generate,
            )
            runs[name].append(run_scenario(model, data, spec, template=template))

    medians = {
        name: {
            "score": float(np.median([r.bleu.score for r in reports])),
            "b1": float(np.median([r.bleu.b1 for r in reports])),
            "b2": float(np.median([r.bleu.b2 for r in reports])),
            "d1": float(np.median([r.distinct.d1 for r in reports])),
            "d2": float(np.median([r.distinct.d2 for r in reports])),
            "legality": float(np.median([r.legality.legality for r in reports])),
        }
        for name, reports in runs.items()
    }
    return StudyReport(
        config=config,
        seeds=tuple(config.seeds),
        runs={name: tuple(reports) for name, reports in runs.items()},
        medians=medians,
        wall_seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Config files


_OPT_SCHEMA = {
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "weight_decay": float,
    "max_length": int,
}


def optimizer_config_from_kv(raw: dict[str, str], defaults: OptimizerConfig, source: str = "<config>") -> OptimizerConfig:
    """Overlay flat entries (keys = field names) onto a default config."""
    values = coerce(raw, _OPT_SCHEMA, source=source)
    return dataclasses.replace(defaults, **values)


def optimizer_config_entries(config: OptimizerConfig, prefix: str = "") -> dict[str, object]:
    """Render a config as flat entries (inverse of the loader)."""
    return {prefix + name: getattr(config, name) for name in _OPT_SCHEMA}


def _parse_seeds(value: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part.strip()) for part in value.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad seeds list {value!r} (expected comma-separated integers)") from None
    if not seeds:
        raise ConfigError("seeds list is empty")
    return seeds


def load_study_config(path: str) -> StudyConfig:
    return study_config_from_kv(load_kv(path), source=str(path))


def study_config_from_kv(entries: dict[str, str], source: str = "<config>") -> StudyConfig:
    """Stage-prefixed study config: synthetic.*, pretrain.*, train.*,
    adapt.*, plus top-level seeds / eval_every / max_generate."""
    synth_raw: dict[str, str] = {}
    stage_raw: dict[str, dict[str, str]] = {"pretrain": {}, "train": {}, "adapt": {}}
    top: dict[str, str] = {}
    for key, value in entries.items():
        if key.startswith("synthetic."):
            synth_raw[key[len("synthetic."):]] = value
        elif key.startswith("pretrain."):
            stage_raw["pretrain"][key[len("pretrain."):]] = value
        elif key.startswith("train."):
            stage_raw["train"][key[len("train."):]] = value
        elif key.startswith("adapt."):
            stage_raw["adapt"][key[len("adapt."):]] = value
        elif key in ("seeds", "eval_every", "max_generate"):
            top[key] = value
        else:
            raise ConfigError(f"{source}: unknown config key {key!r}")

    # name unknown keys by their full prefixed spelling
    for suffix in synth_raw:
        if suffix not in _SYNTHETIC_SCHEMA:
            raise ConfigError(f"{source}: unknown config key 'synthetic.{suffix}'")
    for stage, raw in stage_raw.items():
        for suffix in raw:
            if suffix not in _OPT_SCHEMA:
                raise ConfigError(f"{source}: unknown config key '{stage}.{suffix}'")

    synthetic = synthetic_spec_from_kv(synth_raw, source=source) if synth_raw else REFERENCE_SYNTHETIC
    pretrain = optimizer_config_from_kv(stage_raw["pretrain"], STUDY_PRETRAIN, source=source)
    train_cfg = optimizer_config_from_kv(stage_raw["train"], STUDY_TRAIN, source=source)
    adapt = optimizer_config_from_kv(stage_raw["adapt"], STUDY_ADAPT, source=source)

    kwargs: dict = {}
    if "seeds" in top:
        kwargs["seeds"] = _parse_seeds(top["seeds"])
    if "eval_every" in top:
        try:
            kwargs["eval_every"] = int(top["eval_every"])
        except ValueError:
            raise ConfigError(f"{source}: bad value for 'eval_every': {top['eval_every']!r}") from None
    if "max_generate" in top:
        try:
            kwargs["max_generate"] = int(top["max_generate"])
        except ValueError:
            raise ConfigError(f"{source}: bad value for 'max_generate': {top['max_generate']!r}") from None
    return StudyConfig(synthetic=synthetic, pretrain=pretrain, train=train_cfg, adapt=adapt, **kwargs)


def study_config_entries(config: StudyConfig) -> dict[str, object]:
    """The resolved study config as flat entries, ready for an echo file."""
    out: dict[str, object] = {}
    out["synthetic.vocab_size"] = config.synthetic.vocab_size_per_language
    out["synthetic.n_train_aux"] = config.synthetic.n_train_aux
    out["synthetic.n_fewshot_tgt"] = config.synthetic.n_fewshot_tgt
    out["synthetic.n_valid"] = config.synthetic.n_valid
    out["synthetic.n_test"] = config.synthetic.n_test
    out["synthetic.templates"] = config.synthetic.template_count
    out["synthetic.seed"] = config.synthetic.seed
    out.update(optimizer_config_entries(config.pretrain, "pretrain."))
    out.update(optimizer_config_entries(config.train, "train."))
    out.update(optimizer_config_entries(config.adapt, "adapt."))
    out["seeds"] = ",".join(str(s) for s in config.seeds)
    if config.eval_every is not None:
        out["eval_every"] = config.eval_every
    out["max_generate"] = config.max_generate
    return out


# ---------------------------------------------------------------------------
# Artifacts


def write_study_artifacts(report: StudyReport, out_dir: str) -> None:
    """Write the study's deterministic artifacts (plus a timing log).

    report.jsonl, study.json and samples.txt are byte-identical across
    re-runs with the same config; timing.log holds wall-clock diagnostics
    and is exempt from that guarantee.
    """
    os.makedirs(out_dir, exist_ok=True)

    records = []
    for name in SETTINGS:
        for run in report.runs[name]:
            records.append(
                report_record(system=f"{name}@seed{run.seed}", bleu=run.bleu, distinct=run.distinct, legality=run.legality)
            )
    write_metric_report(os.path.join(out_dir, "report.jsonl"), records)

    summary = {
        "seeds": list(report.seeds),
        "medians": report.medians,
        "per_seed": {
            name: [
                {
                    "seed": run.seed,
                    "score": run.bleu.score,
                    "b1": run.bleu.b1,
                    "b2": run.bleu.b2,
                    "d1": run.distinct.d1,
                    "d2": run.distinct.d2,
                    "legality": run.legality.legality,
                    "selected_step": run.selected_step,
                    "selected_valid_loss": run.selected_valid_loss,
                    "selection_language": run.selection_language,
                    "total_steps": run.total_steps,
                }
                for run in report.runs[name]
            ]
            for name in SETTINGS
        },
        "direction_holds": report.direction_holds(),
    }
    with open(os.path.join(out_dir, "study.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, ensure_ascii=False, sort_keys=True, indent=2) + "\n")

    first = next(iter(SETTINGS))
    sample_count = min(3, len(report.runs[first][0].contexts))
    lines = []
    for i in range(sample_count):
        lines.append(f"=== sample {i + 1} ===")
        lines.append(f"context:   {report.runs[first][0].contexts[i]}")
        lines.append(f"reference: {report.runs[first][0].references[i]}")
        for name in SETTINGS:
            lines.append(f"{name + ':':<13}{report.runs[name][0].hypotheses[i]}")
        lines.append("")
    with open(os.path.join(out_dir, "samples.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))

    with open(os.path.join(out_dir, "timing.log"), "w", encoding="utf-8") as fh:
        fh.write(f"total {report.wall_seconds:.3f}s\n")
        for name in SETTINGS:
            for run in report.runs[name]:
                fh.write(f"{name}@seed{run.seed} {run.wall_seconds:.3f}s\n")


def write_run_artifacts(report: RunReport, out_dir: str) -> None:
    """Deterministic artifacts of a single scenario run."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "hypotheses.txt"), "w", encoding="utf-8") as fh:
        for hyp in report.hypotheses:
            fh.write(hyp + "\n")
    record = report_record(system=f"{report.setting}@seed{report.seed}", bleu=report.bleu, distinct=report.distinct, legality=report.legality)
    write_metric_report(os.path.join(out_dir, "report.jsonl"), [record])
    details = {
        "setting": report.setting,
        "scenario": report.scenario,
        "prompted": report.prompted,
        "seed": report.seed,
        "selected_step": report.selected_step,
        "selected_valid_loss": report.selected_valid_loss,
        "selection_language": report.selection_language,
        "total_steps": report.total_steps,
    }
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(details, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
