"""The verification walk and the lossless speculative decode loop.

The contract that makes acceleration lossless: starting at the tree root,
compute the target's greedy token for the current root-path context; if a
child carries exactly that token, accept it and descend, otherwise stop and
emit the target's own token as a bonus. Every emission is therefore a token
the target would have produced greedily on its own, so the concatenated
output is bit-identical to plain greedy decoding; the tree shape only
changes how many target passes that output costs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dists import greedy_token
from .errors import InputError
from .metrics import DecodeStats
from .models import Context, LanguageModel, next_distribution
from .tree import BranchPolicy, ROOT_ID, SpecTree, expand_tree, prune_tree


@dataclass(frozen=True)
class VerificationResult:
    """Outcome of verifying one speculative tree.

    bonus_token is the target's greedy token at the stopping node, or None
    when the accepted path ended in EOS (no context remains to predict
    from). nodes_scored counts the distinct root-path contexts the target
    evaluated during the walk.
    """

    accepted_tokens: tuple[int, ...]
    bonus_token: int | None
    nodes_scored: int

    @property
    def cycle_acceptance(self) -> int:
        """Tokens this cycle contributes: accepted plus the bonus if any."""
        return len(self.accepted_tokens) + (1 if self.bonus_token is not None else 0)


class _CountingModel(LanguageModel):
    """Pass-through wrapper counting distribution calls."""

    def __init__(self, inner: LanguageModel) -> None:
        self.vocab = inner.vocab
        self.inner = inner
        self.calls = 0

    def distribution(self, ctx: Context) -> np.ndarray:
        self.calls += 1
        return self.inner.distribution(ctx)


def greedy_decode(target: LanguageModel, prompt, max_tokens: int) -> list[int]:
    """Baseline: append the target's argmax token until EOS or max_tokens.

    This is the ground truth every speculative run must reproduce exactly.
    """
    if max_tokens < 1:
        raise InputError(f"max_tokens must be >= 1, got {max_tokens}")
    eos = target.vocab.eos_id
    ctx = tuple(int(t) for t in prompt)
    out: list[int] = []
    while len(out) < max_tokens:
        tok = greedy_token(next_distribution(target, ctx))
        out.append(tok)
        if tok == eos:
            break
        ctx += (tok,)
    return out


def verify_tree(target: LanguageModel, tree: SpecTree) -> VerificationResult:
    """Walk the tree root-down, accepting children that match the target's
    greedy token at each step.

    Equivalent to scoring the whole tree in one batched pass and then
    walking the matches; the sequential walk is the observable contract.
    An accepted EOS terminates the walk without a bonus token.
    """
    eos = target.vocab.eos_id
    ctx = tree.context
    node_id = ROOT_ID
    accepted: list[int] = []
    scored = 0
    while True:
        dist = next_distribution(target, ctx)
        scored += 1
        want = greedy_token(dist)
        match = None
        for child_id in tree.children[node_id]:
            if tree.nodes[child_id].token == want:
                match = child_id
                break
        if match is None:
            return VerificationResult(tuple(accepted), want, scored)
        accepted.append(want)
        if want == eos:
            return VerificationResult(tuple(accepted), None, scored)
        node_id = match
        ctx += (want,)


def speculative_decode(
    draft: LanguageModel,
    target: LanguageModel,
    prompt,
    max_tokens: int,
    policy: BranchPolicy,
) -> tuple[list[int], DecodeStats]:
    """Full draft-and-verify loop: expand, prune, verify, emit, repeat.

    Emits accepted tokens plus the bonus each cycle, stopping at EOS or at
    exactly max_tokens (the final cycle's emission is truncated to fit).
    The returned tokens are bit-identical to ``greedy_decode(target,
    prompt, max_tokens)`` for every policy; only the stats vary.
    """
    if draft.vocab != target.vocab:
        raise InputError("draft and target must share a vocabulary")
    if max_tokens < 1:
        raise InputError(f"max_tokens must be >= 1, got {max_tokens}")

    counted_draft = _CountingModel(draft)
    eos = target.vocab.eos_id
    base = tuple(int(t) for t in prompt)
    out: list[int] = []
    stats = DecodeStats()

    while len(out) < max_tokens:
        ctx = base + tuple(out)
        tree = expand_tree(counted_draft, ctx, policy)
        tree = prune_tree(tree, policy.node_budget)
        result = verify_tree(target, tree)

        emitted = list(result.accepted_tokens)
        if result.bonus_token is not None:
            emitted.append(result.bonus_token)
        emitted = emitted[: max_tokens - len(out)]
        out.extend(emitted)

        stats.cycles += 1
        stats.emitted_tokens += len(emitted)
        stats.target_context_evals += 1  # one batched verification pass
        stats.target_contexts_scored += result.nodes_scored
        stats.tree_nodes += tree.non_root_count
        stats.per_cycle_acceptance.append(len(emitted))
        if eos in emitted:
            break

    stats.draft_calls = counted_draft.calls
    return out, stats
