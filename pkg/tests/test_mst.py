import itertools

import numpy as np
import pytest

from morphparse.conllu import validate_tree
from morphparse.mst import decode_tree, max_spanning_arborescence, tree_weight


def all_trees(n, single_root=True):
    for heads in itertools.product(range(n + 1), repeat=n):
        if validate_tree(list(heads), single_root=single_root).valid:
            yield list(heads)


def brute_force(adjacency, single_root=True):
    n = adjacency.shape[0]
    return max(sum(adjacency[d, h] for d, h in enumerate(t)) for t in all_trees(n, single_root))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_decoder_matches_exhaustive_search(n):
    rng = np.random.default_rng(n)
    trees = list(all_trees(n))
    table = np.array(trees)
    for _ in range(100):
        adj = rng.normal(size=(n, n + 1))
        heads = decode_tree(adj, log_space=True)
        assert validate_tree(heads).valid
        got = sum(adj[d, h] for d, h in enumerate(heads))
        best = adj[np.arange(n)[None, :], table].sum(axis=1).max()
        assert got == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("n", [3, 4])
def test_multi_root_mode_matches_exhaustive_search(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(50):
        adj = rng.normal(size=(n, n + 1))
        heads = decode_tree(adj, single_root=False, log_space=True)
        assert validate_tree(heads, single_root=False).valid
        got = sum(adj[d, h] for d, h in enumerate(heads))
        assert got == pytest.approx(brute_force(adj, single_root=False), abs=1e-9)


def test_probabilities_are_moved_to_log_space():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 5))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert decode_tree(probs) == decode_tree(np.log(probs), log_space=True)


def test_single_token_attaches_to_root():
    assert decode_tree(np.array([[0.3, 0.7]])) == [0]


def test_clear_chain_is_recovered():
    n = 5
    adj = np.full((n, n + 1), -10.0)
    gold = [0, 1, 2, 3, 4]
    for d, h in enumerate(gold):
        adj[d, h] = 0.0
    assert decode_tree(adj, log_space=True) == gold


def test_tree_weight_and_shape_errors():
    scores = np.arange(9.0).reshape(3, 3)
    assert tree_weight(scores, [-1, 0, 1]) == scores[1, 0] + scores[2, 1]
    with pytest.raises(ValueError):
        max_spanning_arborescence(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        decode_tree(np.zeros((3, 3)))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ties_go_to_the_lowest_head_indices(n):
    rng = np.random.default_rng(20 + n)
    trees = list(all_trees(n))
    for _ in range(100):
        adj = rng.integers(0, 3, size=(n, n + 1)).astype(float)
        weights = [sum(adj[d, h] for d, h in enumerate(t)) for t in trees]
        best = max(weights)
        expected = min(t for t, w in zip(trees, weights) if w == best)
        assert decode_tree(adj, log_space=True) == expected


def test_uniform_rows_decode_to_a_chain_from_the_left():
    assert decode_tree(np.zeros((4, 5)), log_space=True) == [0, 1, 1, 1]
