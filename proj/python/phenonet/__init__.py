"""phenonet: neural phenotype classification from clinical notes.

Thin dict-based wrapper around the compiled core. Run-level operations take
the same JSON config document the CLI and run directories use.
"""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping, Sequence

try:
    from . import _core  # installed-package layout
except ImportError:  # pragma: no cover - build-tree layout
    import _core  # type: ignore[no-redef]

LabeledCorpus = _core.LabeledCorpus
LabeledRecord = _core.LabeledRecord
read_corpus = _core.read_corpus
write_corpus = _core.write_corpus
synth_corpus = _core.synth_corpus
trigger_scan = _core.trigger_scan
chance_macro_f1 = _core.chance_macro_f1
clean_text = _core.clean_text
tokenize = _core.tokenize

__version__ = "0.1.0"
__all__ = [
    "LabeledCorpus",
    "LabeledRecord",
    "ablate",
    "chance_macro_f1",
    "clean_text",
    "config_hash",
    "crossval",
    "default_config",
    "evaluate",
    "read_corpus",
    "synth_corpus",
    "tokenize",
    "train",
    "train_embeddings",
    "trigger_scan",
    "write_corpus",
]


def default_config() -> dict:
    """Full run-config document with every field at its default."""
    return json.loads(_core.default_config())


def config_hash(config: Mapping[str, Any]) -> str:
    """Stable hash identifying the experiment a config describes."""
    return _core.config_hash(json.dumps(config))


def train(config: Mapping[str, Any]) -> dict:
    """Train per config; returns run_dir, mean/std F1, and per-repeat reports."""
    return json.loads(_core.run_train(json.dumps(config)))


def evaluate(config: Mapping[str, Any], checkpoint: str) -> dict:
    """Score a saved checkpoint on the corpus named by the config."""
    return json.loads(_core.evaluate(json.dumps(config), checkpoint))


def ablate(
    config: Mapping[str, Any],
    steps: Sequence[str] = ("P1", "P1+P2", "P1+P2+P3"),
) -> list[dict]:
    """Compare cleaning variants end to end; one row per variant."""
    return json.loads(_core.ablate(json.dumps(config), list(steps)))


def crossval(config: Mapping[str, Any], grid: Mapping[str, Iterable[Any]]) -> list[dict]:
    """K-fold cross-validate every point of a hyperparameter grid."""
    axes = [(param, [str(v) for v in values]) for param, values in grid.items()]
    return json.loads(_core.crossval(json.dumps(config), axes))


def train_embeddings(config: Mapping[str, Any], vectors_out: str) -> int:
    """Train word vectors on the config's corpus; returns the vocabulary size."""
    return _core.train_embeddings_to_file(json.dumps(config), vectors_out)
