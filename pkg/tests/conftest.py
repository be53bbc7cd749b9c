"""Shared test fixtures: deterministic random models and tiny vocabularies."""

from __future__ import annotations

import zlib

import numpy as np
import pytest

from specdec.models import BOS_STRING, EOS_STRING, LanguageModel, Vocabulary

_CRITERION_RESULTS: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): tags a test as one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    passed = report.passed and _CRITERION_RESULTS.get(label, True)
    _CRITERION_RESULTS[label] = passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERION_RESULTS, key=lambda s: int(s.split(":")[0])):
        status = "PASS" if _CRITERION_RESULTS[label] else "FAIL"
        terminalreporter.write_line(f"[criterion {label}] {status}")


def make_vocab(n_chars: int) -> Vocabulary:
    """Vocabulary of the first n_chars lowercase letters plus bos/eos."""
    chars = tuple("abcdefghijklmnopqrstuvwxyz"[:n_chars])
    return Vocabulary(
        tokens=chars + (BOS_STRING, EOS_STRING),
        bos_id=n_chars,
        eos_id=n_chars + 1,
    )


def one_hot(size: int, index: int) -> np.ndarray:
    row = np.zeros(size, dtype=np.float64)
    row[index] = 1.0
    return row


class RandomTableModel(LanguageModel):
    """Deterministic pseudo-random distribution per context.

    Each context hashes to an RNG seed; the row is a Dirichlet draw, so the
    same (seed, context) always yields the identical distribution without
    storing a table up front.
    """

    def __init__(self, vocab: Vocabulary, seed: int, concentration: float = 0.6):
        self.vocab = vocab
        self.seed = seed
        self.concentration = concentration
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def distribution(self, ctx) -> np.ndarray:
        key = tuple(ctx)
        row = self._cache.get(key)
        if row is None:
            digest = zlib.crc32(repr((self.seed, key)).encode("utf-8"))
            rng = np.random.default_rng(digest)
            row = rng.dirichlet(np.full(self.vocab.size, self.concentration))
            row = row / row.sum()
            row.flags.writeable = False
            self._cache[key] = row
        return row


class PermutedModel(LanguageModel):
    """Cyclic shift of another model's rows; the argmax always moves."""

    def __init__(self, base: LanguageModel):
        self.vocab = base.vocab
        self.base = base

    def distribution(self, ctx) -> np.ndarray:
        row = np.roll(self.base.distribution(ctx), 1)
        row.flags.writeable = False
        return row


class TableModel(LanguageModel):
    """Explicit context -> row mapping with a fallback row."""

    def __init__(self, vocab: Vocabulary, rows: dict, fallback: np.ndarray):
        self.vocab = vocab
        self.rows = {k: np.asarray(v, dtype=np.float64) for k, v in rows.items()}
        self.fallback = np.asarray(fallback, dtype=np.float64)

    def distribution(self, ctx) -> np.ndarray:
        return self.rows.get(tuple(ctx), self.fallback)


TRAIN_TEXT = (
    "the cat sat on the mat and the dog sat on the rug. "
    "the cat saw the dog and the dog saw the cat. "
    "the sun rose over the hill and the cat sat in the sun. "
    "the dog ran to the hill and the cat ran to the mat. "
    "the man saw the cat on the mat and the man sat on the rug. "
    "the rain fell on the hill and the dog slept on the rug. "
    "the cat slept on the mat and the man slept in the sun. "
    "the dog saw the rain and ran to the rug in the sun. "
) * 3


def text_vocab(text: str) -> tuple[Vocabulary, tuple[int, ...]]:
    """Character vocabulary in first-occurrence order plus the encoded text."""
    chars = tuple(dict.fromkeys(text))
    vocab = Vocabulary(
        tokens=chars + (BOS_STRING, EOS_STRING),
        bos_id=len(chars),
        eos_id=len(chars) + 1,
    )
    return vocab, vocab.encode(text)
