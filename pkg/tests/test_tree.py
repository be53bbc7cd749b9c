"""Unit tests for draft-tree construction, entropy-gated expansion, pruning."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pytest

from specdec.errors import InputError
from specdec.models import ConstantModel
from specdec.tree import (
    ROOT_ID,
    BranchPolicy,
    SpecTree,
    branch_width,
    expand_tree,
    prune_tree,
    render_tree,
    top_tokens,
)

from conftest import RandomTableModel, make_vocab, one_hot


def rank_key(node):
    """Pruning order re-derived independently of the implementation."""
    return (-node.cum_logprob, node.depth, node.token, node.id)


def build_random_tree(rng, vocab_size: int = 8, max_nodes: int = 30) -> SpecTree:
    tree = SpecTree(context=(vocab_size - 2,))
    for _ in range(int(rng.integers(1, max_nodes + 1))):
        parent = int(rng.choice(np.fromiter(tree.nodes.keys(), dtype=np.int64)))
        used = {tree.nodes[c].token for c in tree.children.get(parent, [])}
        available = [t for t in range(vocab_size) if t not in used]
        if not available:
            continue
        token = int(rng.choice(available))
        prob = float(rng.uniform(0.05, 1.0))
        tree.add_child(parent, token, prob)
    return tree


def test_policy_validation():
    with pytest.raises(InputError):
        BranchPolicy(-0.1, 2, 3, 8)
    with pytest.raises(InputError):
        BranchPolicy(1.0, 0, 3, 8)
    with pytest.raises(InputError):
        BranchPolicy(1.0, 2, 0, 8)
    with pytest.raises(InputError):
        BranchPolicy(1.0, 9, 3, 8)  # branch wider than budget
    chain = BranchPolicy.chain(5)
    assert chain.max_branch == 1
    assert chain.max_depth == 5
    assert chain.node_budget == 5
    assert math.isinf(chain.entropy_threshold)


def test_branch_width_cases():
    policy = BranchPolicy(1.0, 4, 3, 8)
    assert branch_width(one_hot(8, 2), policy) == 1
    assert branch_width(np.full(16, 1.0 / 16.0), policy) == 4
    assert branch_width(np.array([0.5, 0.5, 0.0, 0.0]), policy) == 1
    wide = BranchPolicy(0.0, 4, 3, 8)
    assert branch_width(np.array([0.9, 0.1, 0.0, 0.0]), wide) == 2  # nonzero cap


def test_top_tokens_stable_ties():
    row = np.array([0.25, 0.25, 0.25, 0.25])
    assert list(top_tokens(row, 2)) == [0, 1]
    row2 = np.array([0.1, 0.4, 0.4, 0.1])
    assert list(top_tokens(row2, 3)) == [1, 2, 0]


def test_add_child_validation():
    tree = SpecTree(context=(6,))
    child = tree.add_child(ROOT_ID, 3, 0.5)
    with pytest.raises(InputError):
        tree.add_child(99, 0, 0.5)
    with pytest.raises(InputError):
        tree.add_child(ROOT_ID, 3, 0.5)  # duplicate sibling token
    with pytest.raises(InputError):
        tree.add_child(child, 0, 0.0)
    with pytest.raises(InputError):
        tree.add_child(child, 0, 1.5)
    assert tree.nodes[child].cum_logprob == pytest.approx(math.log(0.5), abs=1e-15)


def test_expand_one_hot_draft_yields_chain():
    vocab = make_vocab(3)
    draft = ConstantModel(vocab, one_hot(vocab.size, 1))
    policy = BranchPolicy(1.0, 4, 4, 16)
    tree = expand_tree(draft, (vocab.bos_id,), policy)
    assert tree.non_root_count == 4
    depths = sorted(node.depth for nid, node in tree.nodes.items() if nid != ROOT_ID)
    assert depths == [1, 2, 3, 4]
    for nid, node in tree.nodes.items():
        if nid != ROOT_ID:
            assert node.token == 1
            assert node.cum_logprob == 0.0
    assert tree.draft_queries == 4  # depth-4 frontier is not queried


def test_expand_uniform_binary_tree():
    vocab = make_vocab(2)  # V = 4 including bos/eos
    draft = ConstantModel(vocab, np.full(4, 0.25))
    policy = BranchPolicy(0.0, 2, 2, 16)
    tree = expand_tree(draft, (vocab.bos_id,), policy)
    assert tree.non_root_count == 6
    leaves = [n for nid, n in tree.nodes.items() if nid != ROOT_ID and n.depth == 2]
    assert len(leaves) == 4
    for leaf in leaves:
        assert leaf.cum_logprob == pytest.approx(2 * math.log(0.25), abs=1e-12)
    assert tree.draft_queries == 3


def test_expand_never_extends_eos():
    vocab = make_vocab(2)
    row = np.zeros(vocab.size)
    row[vocab.eos_id] = 0.9
    row[0] = 0.1
    draft = ConstantModel(vocab, row)
    policy = BranchPolicy(math.inf, 1, 4, 8)
    tree = expand_tree(draft, (vocab.bos_id,), policy)
    assert tree.non_root_count == 1
    only = tree.nodes[1]
    assert only.token == vocab.eos_id
    assert tree.children.get(1, []) == []

    wide = BranchPolicy(0.0, 2, 3, 16)
    tree2 = expand_tree(draft, (vocab.bos_id,), wide)
    for nid, node in tree2.nodes.items():
        if node.token == vocab.eos_id:
            assert tree2.children.get(nid, []) == []


def test_expand_validates_context():
    vocab = make_vocab(2)
    draft = ConstantModel(vocab, np.full(4, 0.25))
    policy = BranchPolicy.chain(2)
    with pytest.raises(InputError):
        expand_tree(draft, (0,), policy)  # no bos anchor


def test_prune_chain_noop_and_errors():
    vocab = make_vocab(3)
    draft = ConstantModel(vocab, one_hot(vocab.size, 2))
    tree = expand_tree(draft, (vocab.bos_id,), BranchPolicy.chain(4))
    pruned = prune_tree(tree, 10)
    assert set(pruned.nodes) == set(tree.nodes)
    with pytest.raises(InputError):
        prune_tree(tree, 0)


def test_prune_to_single_best_depth_one_node():
    vocab = make_vocab(2)
    draft = ConstantModel(vocab, np.array([0.7, 0.3, 0.0, 0.0]))
    tree = expand_tree(draft, (vocab.bos_id,), BranchPolicy(0.0, 2, 3, 16))
    pruned = prune_tree(tree, 1)
    assert pruned.non_root_count == 1
    node = next(n for nid, n in pruned.nodes.items() if nid != ROOT_ID)
    assert node.depth == 1
    assert node.token == 0
    assert node.cum_logprob == pytest.approx(math.log(0.7), abs=1e-12)


def test_prune_binary_tree_against_enumeration_oracle():
    vocab = make_vocab(2)
    draft = ConstantModel(vocab, np.full(4, 0.25))
    tree = expand_tree(draft, (vocab.bos_id,), BranchPolicy(0.0, 2, 2, 16))
    assert tree.non_root_count == 6
    pruned = prune_tree(tree, 3)
    kept = {nid for nid in pruned.nodes if nid != ROOT_ID}
    assert len(kept) == 3

    # oracle: enumerate every ancestor-closed 3-subset and its total score
    node_ids = [nid for nid in tree.nodes if nid != ROOT_ID]
    closed_subsets = []
    for combo in combinations(node_ids, 3):
        chosen = set(combo)
        if all(tree.nodes[nid].parent in chosen | {ROOT_ID} for nid in chosen):
            closed_subsets.append(chosen)
    score = lambda subset: sum(tree.nodes[nid].cum_logprob for nid in subset)
    best_score = max(score(s) for s in closed_subsets)
    assert kept in closed_subsets
    assert score(kept) == pytest.approx(best_score, abs=1e-12)

    # the globally best-ranked node survives
    best = min((n for nid, n in tree.nodes.items() if nid != ROOT_ID), key=rank_key)
    assert best.id in kept

    # idempotent
    again = prune_tree(pruned, 3)
    assert set(again.nodes) == set(pruned.nodes)


def test_chain_degeneration_with_branch_one_and_infinite_threshold():
    vocab = make_vocab(6)
    for seed in range(10):
        draft = RandomTableModel(vocab, seed=seed)
        for policy in (BranchPolicy(0.0, 1, 5, 5), BranchPolicy(math.inf, 4, 5, 16)):
            tree = expand_tree(draft, (vocab.bos_id,), policy)
            for nid in tree.nodes:
                assert len(tree.children.get(nid, [])) <= 1


def test_random_trees_validate_and_prune_cleanly():
    rng = np.random.default_rng(42)
    for _ in range(300):
        tree = build_random_tree(rng)
        tree.validate()
        n = int(rng.integers(1, 12))
        pruned = prune_tree(tree, n)
        pruned.validate()
        assert pruned.non_root_count <= min(n, tree.non_root_count)
        for nid, node in pruned.nodes.items():
            assert tree.nodes[nid] == node
        best = min((n_ for i, n_ in tree.nodes.items() if i != ROOT_ID), key=rank_key)
        assert best.id in pruned.nodes


def test_path_tokens_and_context_preserved_by_prune():
    rng = np.random.default_rng(9)
    tree = build_random_tree(rng, max_nodes=20)
    pruned = prune_tree(tree, 5)
    assert pruned.context == tree.context
    for nid in pruned.nodes:
        assert pruned.path_tokens(nid) == tree.path_tokens(nid)


def test_render_tree_golden():
    vocab = make_vocab(3)
    tree = SpecTree(context=(vocab.bos_id,))
    a = tree.add_child(ROOT_ID, 0, 0.5)
    tree.add_child(a, 1, 0.25)
    tree.add_child(ROOT_ID, 2, 0.5)
    expected = (
        "<root>\n"
        "  'a' p=0.500000 lp=-0.693147\n"
        "    'b' p=0.250000 lp=-2.079442\n"
        "  'c' p=0.500000 lp=-0.693147\n"
    )
    assert render_tree(tree, vocab) == expected


def test_cum_logprob_matches_external_recomputation():
    rng = np.random.default_rng(77)
    for _ in range(50):
        tree = build_random_tree(rng, max_nodes=15)
        for nid, node in tree.nodes.items():
            if nid == ROOT_ID:
                continue
            total, cursor = 0.0, node
            while cursor.id != ROOT_ID:
                total += math.log(cursor.draft_prob)
                cursor = tree.nodes[cursor.parent]
            assert abs(node.cum_logprob - total) <= 1e-12
