"""Python access to the qacoop dialog models, metrics and command line."""

import json
from pathlib import Path

from . import _qacoop
from ._qacoop import CorpusError, git_blob_hash, join_tokens, tokenize

__all__ = [
    "Checkpoint",
    "CorpusError",
    "git_blob_hash",
    "join_tokens",
    "run_cli",
    "score_corpus",
    "tokenize",
    "toy_dataset",
]


def score_corpus(candidates, references):
    """Scores candidates (strings or token lists) against per-candidate reference lists."""
    return json.loads(_qacoop.score_corpus_json(candidates, references))


def toy_dataset(seed=7, n=8, vocab=64):
    return json.loads(_qacoop.toy_dataset_json(seed, n, vocab))


def run_cli(*args):
    """Runs the qacoop command line in-process; returns (exit code, stdout, stderr)."""
    return _qacoop.run_cli(["qacoop"] + [str(a) for a in args])


class Checkpoint:
    def __init__(self, path):
        self._ck = _qacoop.Checkpoint(Path(path))

    @property
    def config(self):
        return json.loads(self._ck.config_json())

    @property
    def epoch(self):
        return self._ck.epoch

    @property
    def val_perplexity(self):
        return self._ck.val_perplexity

    @property
    def vocab_size(self):
        return self._ck.vocab_size

    def evaluate(self, data_dir, split="test", **options):
        return json.loads(self._ck.evaluate_json(Path(data_dir), split, **options))
