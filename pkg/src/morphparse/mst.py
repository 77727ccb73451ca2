"""Maximum spanning arborescence decoding (Chu-Liu-Edmonds).

Score matrices are indexed ``scores[dependent, head]`` over nodes ``0..n`` where
node 0 is the artificial root. ``-inf`` marks a forbidden arc.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np


def _find_cycle(heads: np.ndarray) -> Optional[List[int]]:
    n = len(heads)
    state = np.zeros(n, dtype=np.int8)  # 0 unseen, 1 on path, 2 done
    state[0] = 2
    for start in range(1, n):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            return path[path.index(node):]
        for p in path:
            state[p] = 2
    return None


def _cle(scores: np.ndarray) -> np.ndarray:
    n = len(scores)
    heads = scores.argmax(axis=1)
    heads[0] = -1
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    cycle_arr = np.array(cycle)
    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle_arr] = True
    outside = np.flatnonzero(~in_cycle)  # always contains the root
    m = len(outside) + 1
    contracted = np.full((m, m), -np.inf)
    contracted[: m - 1, : m - 1] = scores[np.ix_(outside, outside)]
    # arcs entering the cycle replace the cycle arc of the node they enter
    kept = scores[cycle_arr, heads[cycle_arr]]
    entering = scores[np.ix_(cycle_arr, outside)] - kept[:, None]
    enter_choice = entering.argmax(axis=0)
    contracted[m - 1, : m - 1] = entering.max(axis=0)
    leaving = scores[np.ix_(outside, cycle_arr)]
    leave_choice = leaving.argmax(axis=1)
    contracted[: m - 1, m - 1] = leaving.max(axis=1)
    contracted[0, :] = -np.inf
    np.fill_diagonal(contracted, -np.inf)

    sub_heads = _cle(contracted)
    result = heads.copy()
    for j, v in enumerate(outside):
        if v == 0:
            continue
        h = sub_heads[j]
        result[v] = outside[h] if h < m - 1 else cycle_arr[leave_choice[j]]
    h = sub_heads[m - 1]
    result[cycle_arr[enter_choice[h]]] = outside[h]
    return result


def _prepare(scores) -> np.ndarray:
    scores = np.array(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError(f"expected a square score matrix, got {scores.shape}")
    scores[0, :] = -np.inf
    np.fill_diagonal(scores, -np.inf)
    return scores


def tree_weight(scores, heads) -> float:
    """Sum of ``scores[d, heads[d]]`` over dependents 1..n."""
    scores = np.asarray(scores)
    heads = np.asarray(heads)
    deps = np.arange(1, len(scores))
    return float(scores[deps, heads[deps]].sum())


def _best(scores: np.ndarray, single_root: bool) -> Optional[np.ndarray]:
    heads = _cle(scores)
    if not single_root or np.count_nonzero(heads[1:] == 0) == 1:
        return heads
    best, best_weight = None, -np.inf
    for r in range(1, len(scores)):
        if not np.isfinite(scores[r, 0]):
            continue
        constrained = scores.copy()
        constrained[1:, 0] = -np.inf
        constrained[r, 0] = scores[r, 0]
        candidate = _cle(constrained)
        weight = tree_weight(constrained, candidate)
        if weight > best_weight:
            best, best_weight = candidate, weight
    return best


def _lowest_heads(scores: np.ndarray, heads: np.ndarray, single_root: bool) -> np.ndarray:
    """Among trees tying with ``heads``, pick the one with the lexicographically lowest heads.

    Distinct arc scores almost never produce equal tree weights, so the search
    only runs when some score value repeats.
    """
    finite = scores[np.isfinite(scores)]
    if np.unique(finite).size == finite.size:
        return heads
    target = tree_weight(scores, heads)
    tol = 1e-9 * (1.0 + abs(target))
    fixed = scores.copy()
    for d in range(1, len(scores)):
        row_max = np.max(fixed[1:], axis=1)
        others = row_max.sum() - row_max[d - 1]
        for h in range(heads[d]):
            # cheap bound: every other dependent takes its best head
            if not np.isfinite(fixed[d, h]) or others + fixed[d, h] < target - tol:
                continue
            trial = fixed.copy()
            trial[d, :] = -np.inf
            trial[d, h] = fixed[d, h]
            candidate = _best(trial, single_root)
            if candidate is not None and tree_weight(trial, candidate) >= target - tol:
                heads = candidate
                break
        keep = fixed[d, heads[d]]
        fixed[d, :] = -np.inf
        fixed[d, heads[d]] = keep
    return heads


def max_spanning_arborescence(scores, single_root: bool = True) -> np.ndarray:
    """Heads (length n+1, ``heads[0] == -1``) of the best arborescence rooted at 0.

    With ``single_root`` the root gets exactly one child: when the unconstrained
    optimum has several, every candidate root child is tried and the best kept.
    Among equal-weight trees the lexicographically lowest head sequence wins.
    """
    scores = _prepare(scores)
    if len(scores) == 1:
        return np.array([-1])
    heads = _best(scores, single_root)
    if heads is None:
        raise ValueError("no arborescence with a single root child exists")
    return _lowest_heads(scores, heads, single_root)


def decode_tree(adjacency, single_root: bool = True, log_space: bool = False) -> List[int]:
    """Decode head ids for tokens 1..n from an ``(n, n+1)`` adjacency matrix.

    Rows are dependents 1..n, columns are candidate heads 0..n. Row-softmaxed
    probabilities are moved to log space first unless ``log_space`` is set.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    n = adjacency.shape[0]
    if adjacency.shape != (n, n + 1):
        raise ValueError(f"expected an (n, n+1) adjacency matrix, got {adjacency.shape}")
    if log_space:
        logs = adjacency
    else:
        with np.errstate(divide="ignore"):
            logs = np.log(adjacency)
    scores = np.full((n + 1, n + 1), -np.inf)
    scores[1:, :] = logs
    heads = max_spanning_arborescence(scores, single_root=single_root)
    return [int(h) for h in heads[1:]]
