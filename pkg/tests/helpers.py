"""Shared test utilities: full-tree audits and instrumented scorers."""

from __future__ import annotations

import math

import numpy as np

from spotsearch.hoo import ROOT, HooTree, NodeId


def audit_tree(tree: HooTree, tol: float = 1e-9) -> None:
    """Assert every structural and statistical invariant of ``tree``."""
    nodes = tree.nodes
    assert ROOT in tree.members
    assert nodes[ROOT].region == tree.space
    for node, stats in nodes.items():
        if stats.visits == 0:
            assert stats.u == math.inf and stats.b == math.inf, node
        else:
            assert stats.b <= stats.u, (node, stats)
            assert 0.0 <= stats.mean <= 1.0 + tol
        if node in tree.members:
            assert node.depth <= tree.max_depth
        if node.depth > 0:
            assert node.parent in tree.members, f"{node} has no member parent"
        a, b = node.children
        if a not in nodes:
            assert b not in nodes
            continue
        assert node in tree.members
        _assert_partition(stats.region, nodes[a].region, nodes[b].region)
        if stats.visits:
            sa, sb = nodes[a], nodes[b]
            assert stats.visits == sa.visits + sb.visits + stats.own_visits, node
            total = stats.own_reward_sum + sa.visits * sa.mean + sb.visits * sb.mean
            assert abs(stats.visits * stats.mean - total) <= tol * max(1, stats.visits), node


def _assert_partition(parent, lower, upper) -> None:
    split_axes = [k for k in range(3) if lower.hi[k] != parent.hi[k] or upper.lo[k] != parent.lo[k]]
    assert len(split_axes) == 1
    k = split_axes[0]
    assert lower.lo == parent.lo and upper.hi == parent.hi
    assert lower.hi[k] == upper.lo[k] == 0.5 * (parent.lo[k] + parent.hi[k])
    for j in range(3):
        if j != k:
            assert lower.hi[j] == parent.hi[j] and upper.lo[j] == parent.lo[j]
    vol = parent.volume
    assert abs(lower.volume + upper.volume - vol) <= 1e-9 * max(vol, 1e-300)


def snapshot(tree: HooTree) -> dict[NodeId, object]:
    return {k: v.copy() for k, v in tree.nodes.items()}


def changed_nodes(before: dict, tree: HooTree) -> set[NodeId]:
    return {k for k, v in tree.nodes.items() if k not in before or before[k] != v}


class CountingScorer:
    """Wraps a scorer and records the size of every batch."""

    def __init__(self, inner):
        self.inner = inner
        self.batch_sizes: list[int] = []

    def score_batch(self, poses):
        self.batch_sizes.append(len(poses))
        return self.inner.score_batch(poses)


class FailingScorer:
    """Delegates to ``inner`` for ``ok_calls`` batches, then raises."""

    def __init__(self, inner, ok_calls: int):
        self.inner = inner
        self.ok_calls = ok_calls
        self.calls = 0

    def score_batch(self, poses):
        self.calls += 1
        if self.calls > self.ok_calls:
            raise RuntimeError("scorer backend went away")
        return self.inner.score_batch(poses)


class TableScorer:
    """Returns fixed scores regardless of pose."""

    def __init__(self, scores):
        self.scores = list(scores)

    def score_batch(self, poses):
        assert len(poses) == len(self.scores)
        return list(self.scores)


def lstsq_slope(y) -> float:
    y = np.asarray(y, dtype=float)
    x = np.arange(1, len(y) + 1, dtype=float)
    return float(np.polyfit(x, y, 1)[0])
