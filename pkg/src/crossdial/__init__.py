"""Toolkit for studying catastrophic forgetting in few-shot cross-lingual
dialogue transfer: synthetic bilingual corpora, fixed-prompt formatting with
sentinel tokens, even auxiliary/target interleaving, a hand-differentiated
attentive seq2seq trained with AdamW, generation metrics (corpus BLEU,
distinct-n, language legality), the four-setting transfer study, and blinded
pairwise human evaluation."""

from .corpus import (
    Corpus,
    CorpusError,
    DialoguePair,
    SyntheticBilingual,
    SyntheticSpec,
    derive_token_vocabulary,
    generate_synthetic_bilingual,
    load_corpus,
    load_pairs,
    load_synthetic_spec,
    sample_few_shot,
    save_corpus,
    save_pairs,
    shuffle_pairs,
    truncate_pair,
    whitespace_tokenize,
)
from .experiment import (
    SETTINGS,
    ExperimentSpec,
    RunReport,
    ScenarioData,
    StudyConfig,
    StudyReport,
    load_study_config,
    run_forgetting_study,
    run_scenario,
    write_run_artifacts,
    write_study_artifacts,
)
from .humaneval import (
    HumanEvalError,
    PairedSample,
    WinRateReport,
    aggregate_votes,
    export_pairs,
    read_key,
    read_sheet,
)
from .interleave import InterleavedCorpus, InterleaveError, interleave_even
from .kvconfig import ConfigError, dump_kv, load_kv, parse_kv_text, write_kv
from .metrics import (
    BleuReport,
    DistinctReport,
    LegalityReport,
    MetricError,
    corpus_bleu,
    distinct_n,
    distinct_report,
    language_legality,
    read_metric_report,
    tokenize_13a,
    write_metric_report,
)
from .model import (
    AdamW,
    AttentiveSeq2Seq,
    Checkpoint,
    GradientCheckReport,
    ModelConfig,
    ModelError,
    OptimizerConfig,
    PRETRAIN_DEFAULTS,
    SOURCE_TRAIN_DEFAULTS,
    TARGET_ADAPT_DEFAULTS,
    TrainingDivergedError,
    TrainResult,
    Vocabulary,
    evaluate_nll,
    generate_corpus,
    generate_greedy,
    gradient_check,
    load_model,
    make_training_batch,
    pretrain_span_corruption,
    restore_checkpoint,
    save_model,
    select_best_checkpoint,
    train,
)
from .prompting import (
    DEFAULT_TEMPLATE,
    FormattedExample,
    PromptError,
    PromptTemplate,
    corrupt_spans,
    extract_response,
    format_plain,
    format_prompted,
    load_template,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AttentiveSeq2Seq",
    "BleuReport",
    "Checkpoint",
    "ConfigError",
    "Corpus",
    "CorpusError",
    "DEFAULT_TEMPLATE",
    "DialoguePair",
    "DistinctReport",
    "ExperimentSpec",
    "FormattedExample",
    "GradientCheckReport",
    "HumanEvalError",
    "InterleaveError",
    "InterleavedCorpus",
    "LegalityReport",
    "MetricError",
    "ModelConfig",
    "ModelError",
    "OptimizerConfig",
    "PRETRAIN_DEFAULTS",
    "PairedSample",
    "PromptError",
    "PromptTemplate",
    "RunReport",
    "SETTINGS",
    "SOURCE_TRAIN_DEFAULTS",
    "ScenarioData",
    "StudyConfig",
    "StudyReport",
    "SyntheticBilingual",
    "SyntheticSpec",
    "TARGET_ADAPT_DEFAULTS",
    "TrainResult",
    "TrainingDivergedError",
    "Vocabulary",
    "WinRateReport",
    "aggregate_votes",
    "corpus_bleu",
    "corrupt_spans",
    "derive_token_vocabulary",
    "distinct_n",
    "distinct_report",
    "dump_kv",
    "evaluate_nll",
    "export_pairs",
    "extract_response",
    "format_plain",
    "format_prompted",
    "generate_corpus",
    "generate_greedy",
    "generate_synthetic_bilingual",
    "gradient_check",
    "interleave_even",
    "language_legality",
    "load_corpus",
    "load_kv",
    "load_model",
    "load_pairs",
    "load_study_config",
    "load_synthetic_spec",
    "load_template",
    "make_training_batch",
    "parse_kv_text",
    "pretrain_span_corruption",
    "read_key",
    "read_metric_report",
    "read_sheet",
    "restore_checkpoint",
    "run_forgetting_study",
    "run_scenario",
    "sample_few_shot",
    "save_corpus",
    "save_model",
    "save_pairs",
    "select_best_checkpoint",
    "shuffle_pairs",
    "tokenize_13a",
    "train",
    "truncate_pair",
    "whitespace_tokenize",
    "write_kv",
    "write_metric_report",
    "write_run_artifacts",
    "write_study_artifacts",
]
