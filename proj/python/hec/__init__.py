"""Two-pass speech recognition: hybrid first pass, hypothesis-encoding second pass."""

from ._hec import (
    AEDModel,
    Corpus,
    ExperimentReport,
    HecError,
    HybridModel,
    Tokenizer,
    Utterance,
    ctc_loss,
    ctc_prefix_score,
    edit_distance,
    entity_recall,
    generate_corpus,
    read_corpus,
    recognize,
    run_experiment,
    train_first_pass,
    train_second_pass,
    wer,
    werr,
    write_corpus,
)

__all__ = [
    "AEDModel",
    "Corpus",
    "ExperimentReport",
    "HecError",
    "HybridModel",
    "Tokenizer",
    "Utterance",
    "ctc_loss",
    "ctc_prefix_score",
    "edit_distance",
    "entity_recall",
    "generate_corpus",
    "read_corpus",
    "recognize",
    "run_experiment",
    "train_first_pass",
    "train_second_pass",
    "wer",
    "werr",
    "write_corpus",
]
