"""Benchmark harness: corpus ingestion, experiment config, matrix runs, reports.

A bench run trains a target and a base draft n-gram on one corpus, sweeps a
grid of (lambda, tree policy) cells, and for every cell decodes the same
prompt set both speculatively and with the greedy baseline, asserting exact
equality before a record is written. Reports are deterministic: a given
(config, seed) pair produces byte-identical CSV/JSON output. Wall-clock
timings are informational only and never enter the deterministic reports.

Config files are flat ``key = value`` text; ``#`` starts a comment. Grids
are comma-separated. See ``CONFIG_FIELDS`` for every key, its type, and
its default; ``corpus`` is the only required key.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from .decode import greedy_decode, speculative_decode
from .errors import InputError, LosslessnessError
from .metrics import (
    KL_DRAFT_TARGET,
    KL_TARGET_DRAFT,
    CostModel,
    combine_stats,
    estimate_kl,
    mean_acceptance,
    predicted_speedup,
)
from .models import (
    BOS_STRING,
    EOS_STRING,
    Vocabulary,
    distill_interpolate,
    train_ngram,
)
from .tree import BranchPolicy

REPORT_VERSION = 1
CSV_COLUMNS = [
    "domain",
    "lambda",
    "tau",
    "branch",
    "depth",
    "budget",
    "prompts",
    "cycles",
    "emitted_tokens",
    "target_context_evals",
    "target_contexts_scored",
    "draft_calls",
    "tree_nodes",
    "gamma",
    "kl_estimate",
    "predicted_speedup",
    "losslessness_verified",
]


def ingest_corpus(path) -> tuple[Vocabulary, tuple[int, ...]]:
    """Read a UTF-8 text file as a character stream.

    The vocabulary lists characters in first-occurrence order with the
    bos/eos markers appended after them, so repeated ingestion of the same
    file is bit-identical.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise OSError(f"corpus file {path} is not valid UTF-8: {exc}") from exc
    if not text:
        raise OSError(f"corpus file {path} is empty")
    chars = tuple(dict.fromkeys(text))
    vocab = Vocabulary(
        tokens=chars + (BOS_STRING, EOS_STRING),
        bos_id=len(chars),
        eos_id=len(chars) + 1,
    )
    ids = {ch: i for i, ch in enumerate(chars)}
    return vocab, tuple(ids[ch] for ch in text)


def split_corpus(sequence, train_fraction: float = 0.85) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Deterministic prefix/suffix split into (training, held-out) tokens."""
    seq = tuple(sequence)
    cut = int(len(seq) * train_fraction)
    return seq[:cut], seq[cut:]


# key -> (parser, default); REQUIRED default means the key must be present.
_REQUIRED = object()


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.split(","))


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.split(","))


CONFIG_FIELDS = {
    "corpus": (str, _REQUIRED),
    "ood_corpus": (str, ""),
    "target_order": (int, 3),
    "draft_order": (int, 1),
    "target_alpha": (float, 0.1),
    "draft_alpha": (float, 0.5),
    "lambda_grid": (_parse_float_list, (0.0, 0.25, 0.5, 0.75, 1.0)),
    "tau_grid": (_parse_float_list, (1.0,)),
    "branch_grid": (_parse_int_list, (4,)),
    "depth_grid": (_parse_int_list, (3,)),
    "budget_grid": (_parse_int_list, (8,)),
    "prompt_count": (int, 200),
    "prompt_length": (int, 8),
    "probe_count": (int, 100),
    "probe_length": (int, 8),
    "max_tokens": (int, 32),
    "seed": (int, 20250825),
    "kl_direction": (str, KL_TARGET_DRAFT),
    "draft_cost": (float, 0.05),
    "batch_cost": (float, 1.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One bench run: model construction, grids, sampling, and cost model."""

    corpus: str
    ood_corpus: str = ""
    target_order: int = 3
    draft_order: int = 1
    target_alpha: float = 0.1
    draft_alpha: float = 0.5
    lambda_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    tau_grid: tuple[float, ...] = (1.0,)
    branch_grid: tuple[int, ...] = (4,)
    depth_grid: tuple[int, ...] = (3,)
    budget_grid: tuple[int, ...] = (8,)
    prompt_count: int = 200
    prompt_length: int = 8
    probe_count: int = 100
    probe_length: int = 8
    max_tokens: int = 32
    seed: int = 20250825
    kl_direction: str = KL_TARGET_DRAFT
    draft_cost: float = 0.05
    batch_cost: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda_grid", "tau_grid", "branch_grid", "depth_grid", "budget_grid"):
            if not getattr(self, name):
                raise InputError(f"{name} must be non-empty")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambda_grid):
            raise InputError("lambda_grid values must lie in [0, 1]")
        for name in ("target_order", "draft_order", "prompt_count", "prompt_length",
                     "probe_count", "probe_length", "max_tokens"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.target_alpha < 0 or self.draft_alpha < 0:
            raise InputError("smoothing alphas must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must fit in 64 bits")
        if self.kl_direction not in (KL_TARGET_DRAFT, KL_DRAFT_TARGET):
            raise InputError(f"unknown kl_direction {self.kl_direction!r}")
        CostModel(self.draft_cost, self.batch_cost)  # validates

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Parse the flat key=value config format."""
        values: dict[str, object] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in CONFIG_FIELDS:
                raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
            parser, _ = CONFIG_FIELDS[key]
            try:
                values[key] = parser(value)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        for key, (_, default) in CONFIG_FIELDS.items():
            if key not in values:
                if default is _REQUIRED:
                    raise InputError(f"{path}: missing required config key {key!r}")
                values[key] = default
        return cls(**values)  # type: ignore[arg-type]

    def override(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @property
    def cost_model(self) -> CostModel:
        return CostModel(self.draft_cost, self.batch_cost)


@dataclass(frozen=True)
class RunRecord:
    """One (domain, lambda, policy) cell of the matrix, losslessness-checked."""

    domain: str
    lam: float
    tau: float
    branch: int
    depth: int
    budget: int
    prompts: int
    cycles: int
    emitted_tokens: int
    target_context_evals: int
    target_contexts_scored: int
    draft_calls: int
    tree_nodes: int
    gamma: float
    kl_estimate: float
    predicted_speedup: float
    losslessness_verified: bool
    wall_clock_ms: float = 0.0  # informational; excluded from reports

    @property
    def cell_key(self) -> tuple:
        return (self.domain, self.lam, self.tau, self.branch, self.depth, self.budget)

    @property
    def cell_label(self) -> str:
        return (
            f"{self.domain},lam={self.lam:g},tau={self.tau:g},"
            f"b={self.branch},d={self.depth},n={self.budget}"
        )

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "lambda": self.lam,
            "tau": self.tau,
            "branch": self.branch,
            "depth": self.depth,
            "budget": self.budget,
            "prompts": self.prompts,
            "cycles": self.cycles,
            "emitted_tokens": self.emitted_tokens,
            "target_context_evals": self.target_context_evals,
            "target_contexts_scored": self.target_contexts_scored,
            "draft_calls": self.draft_calls,
            "tree_nodes": self.tree_nodes,
            "gamma": self.gamma,
            "kl_estimate": self.kl_estimate,
            "predicted_speedup": self.predicted_speedup,
            "losslessness_verified": self.losslessness_verified,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        return cls(
            domain=doc["domain"],
            lam=float(doc["lambda"]),
            tau=float(doc["tau"]),
            branch=int(doc["branch"]),
            depth=int(doc["depth"]),
            budget=int(doc["budget"]),
            prompts=int(doc["prompts"]),
            cycles=int(doc["cycles"]),
            emitted_tokens=int(doc["emitted_tokens"]),
            target_context_evals=int(doc["target_context_evals"]),
            target_contexts_scored=int(doc["target_contexts_scored"]),
            draft_calls=int(doc["draft_calls"]),
            tree_nodes=int(doc["tree_nodes"]),
            gamma=float(doc["gamma"]),
            kl_estimate=float(doc["kl_estimate"]),
            predicted_speedup=float(doc["predicted_speedup"]),
            losslessness_verified=bool(doc["losslessness_verified"]),
        )


def _sample_spans(zone: tuple[int, ...], length: int, count: int, rng, what: str):
    if len(zone) < length:
        raise InputError(
            f"corpus too small: need spans of {length} tokens for {what}, "
            f"zone has {len(zone)}"
        )
    starts = rng.integers(0, len(zone) - length + 1, size=count)
    return [tuple(zone[s:s + length]) for s in starts]


def _domain_samples(
    sequence: tuple[int, ...], vocab: Vocabulary, config: ExperimentConfig, rng
) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Probe contexts from the first half of a zone, prompts from the second,
    so the two sets never share positions. Contexts are bos-anchored."""
    half = len(sequence) // 2
    probes = [
        (vocab.bos_id,) + span
        for span in _sample_spans(sequence[:half], config.probe_length,
                                  config.probe_count, rng, "probes")
    ]
    prompts = [
        (vocab.bos_id,) + span
        for span in _sample_spans(sequence[half:], config.prompt_length,
                                  config.prompt_count, rng, "prompts")
    ]
    return probes, prompts


def build_models(config: ExperimentConfig):
    """Train the target and base-draft n-grams from the config's corpus.

    Returns (vocab, target, draft_base, held_out_sequence).
    """
    vocab, sequence = ingest_corpus(config.corpus)
    train_seq, held = split_corpus(sequence)
    target = train_ngram(train_seq, config.target_order, config.target_alpha, vocab)
    draft_base = train_ngram(train_seq, config.draft_order, config.draft_alpha, vocab)
    return vocab, target, draft_base, held


def run_matrix(config: ExperimentConfig) -> list[RunRecord]:
    """Execute every (domain, lambda, policy) cell of the experiment grid.

    Each cell decodes the identical prompt set speculatively and via the
    greedy baseline; any divergence raises :class:`LosslessnessError`
    (never skipped). Records come back sorted by cell key.
    """
    vocab, target, draft_base, held = build_models(config)
    rng = np.random.default_rng(config.seed)

    domains: dict[str, tuple[int, ...]] = {"in": held}
    if config.ood_corpus:
        ood_text = Path(config.ood_corpus).read_text(encoding="utf-8")
        if not ood_text:
            raise OSError(f"corpus file {config.ood_corpus} is empty")
        ood_seq = vocab.encode(ood_text, skip_unknown=True)
        if not ood_seq:
            raise InputError(
                f"out-of-domain corpus {config.ood_corpus} shares no characters "
                "with the training corpus"
            )
        domains["ood"] = ood_seq

    samples = {
        name: _domain_samples(seq, vocab, config, rng)
        for name, seq in sorted(domains.items())
    }

    lambdas = sorted(set(config.lambda_grid))
    policies = sorted(
        set(product(config.tau_grid, config.branch_grid, config.depth_grid, config.budget_grid))
    )
    cost = config.cost_model

    records: list[RunRecord] = []
    for domain in sorted(samples):
        probes, prompts = samples[domain]
        for lam in lambdas:
            draft = distill_interpolate(target, draft_base, lam)
            kl = estimate_kl(draft, target, probes, config.kl_direction)
            for tau, branch, depth, budget in policies:
                policy = BranchPolicy(tau, branch, depth, budget)
                started = time.perf_counter()
                per_prompt = []
                for prompt in prompts:
                    tokens, stats = speculative_decode(
                        draft, target, prompt, config.max_tokens, policy
                    )
                    baseline = greedy_decode(target, prompt, config.max_tokens)
                    if tokens != baseline:
                        cell = (
                            f"{domain},lam={lam:g},tau={tau:g},"
                            f"b={branch},d={depth},n={budget}"
                        )
                        raise LosslessnessError(config.seed, cell, prompt)
                    per_prompt.append(stats)
                merged = combine_stats(per_prompt)
                gamma = mean_acceptance(merged)
                records.append(
                    RunRecord(
                        domain=domain,
                        lam=lam,
                        tau=tau,
                        branch=branch,
                        depth=depth,
                        budget=budget,
                        prompts=len(prompts),
                        cycles=merged.cycles,
                        emitted_tokens=merged.emitted_tokens,
                        target_context_evals=merged.target_context_evals,
                        target_contexts_scored=merged.target_contexts_scored,
                        draft_calls=merged.draft_calls,
                        tree_nodes=merged.tree_nodes,
                        gamma=gamma,
                        kl_estimate=kl,
                        predicted_speedup=predicted_speedup(
                            gamma, cost, merged.draft_calls / merged.cycles
                        ),
                        losslessness_verified=True,
                        wall_clock_ms=(time.perf_counter() - started) * 1e3,
                    )
                )
    records.sort(key=lambda r: r.cell_key)
    return records


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def emit_report(
    records: list[RunRecord],
    config: ExperimentConfig,
    out_dir,
    fmt: str = "both",
) -> list[Path]:
    """Write the deterministic report files; returns the paths written.

    csv  -> report.csv (one row per record, fixed column order) and
            scatter.csv (kl_estimate, gamma pairs for the KL-vs-acceptance
            plot, ordered by cell key so a lambda sweep reads top-down).
    json -> report.json (full config echo plus all records).
    Only losslessness-verified records may be emitted.
    """
    if not records:
        raise InputError("no records to report")
    if fmt not in ("csv", "json", "both"):
        raise InputError(f"unknown report format {fmt!r}")
    if any(not r.losslessness_verified for r in records):
        raise InputError("refusing to report records without verified losslessness")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.cell_key)
    written: list[Path] = []

    if fmt in ("csv", "both"):
        lines = [f"# specdec report v{REPORT_VERSION}", ",".join(CSV_COLUMNS)]
        for rec in ordered:
            doc = rec.to_dict()
            lines.append(",".join(_fmt(doc[col]) for col in CSV_COLUMNS))
        csv_path = out / "report.csv"
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(csv_path)

        scatter = [f"# specdec scatter v{REPORT_VERSION}", "kl_estimate,gamma"]
        scatter.extend(f"{_fmt(r.kl_estimate)},{_fmt(r.gamma)}" for r in ordered)
        scatter_path = out / "scatter.csv"
        scatter_path.write_text("\n".join(scatter) + "\n", encoding="utf-8")
        written.append(scatter_path)

    if fmt in ("json", "both"):
        doc = {
            "format": "specdec-report",
            "version": REPORT_VERSION,
            "config": config.to_dict(),
            "records": [r.to_dict() for r in ordered],
        }
        json_path = out / "report.json"
        json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(json_path)

    return written


def load_records(path) -> tuple[ExperimentConfig, list[RunRecord]]:
    """Read a report.json back into (config, records) for re-emission."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "specdec-report":
        raise InputError(f"{path} is not a specdec report file")
    cfg_doc = dict(doc["config"])
    for key in ("lambda_grid", "tau_grid", "branch_grid", "depth_grid", "budget_grid"):
        cfg_doc[key] = tuple(cfg_doc[key])
    config = ExperimentConfig(**cfg_doc)
    return config, [RunRecord.from_dict(r) for r in doc["records"]]
