"""Truncated (and vanilla) Hierarchical Optimistic Optimization over a cuboid.

Each iteration walks from the root to an unexplored node by always following the
child with the larger B-value, splits that node's region in two, scores the
region center and backs the reward up along the traversed path.

With the truncated variant the confidence radius uses the fixed horizon ``N``,
so nodes off the path keep their values and a backup costs O(depth). The
vanilla variant uses the running iteration count and therefore refreshes every
node after each evaluation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from spotsearch.geometry import POLICIES, Region, Vec3, center, divide, sample_directions
from spotsearch.scorers import Scorer, ScorerError, region_reward

logger = logging.getLogger(__name__)

INF = math.inf
VARIANTS = ("truncated", "vanilla")
DEPTH_LIMITS = ("inf", "formula")


class NodeId(NamedTuple):
    depth: int
    index: int

    @property
    def children(self) -> tuple[NodeId, NodeId]:
        return NodeId(self.depth + 1, 2 * self.index), NodeId(self.depth + 1, 2 * self.index + 1)

    @property
    def parent(self) -> NodeId:
        if self.depth == 0:
            raise ValueError("the root has no parent")
        return NodeId(self.depth - 1, self.index // 2)


ROOT = NodeId(0, 0)


@dataclass
class NodeStats:
    region: Region
    visits: int = 0
    mean: float = 0.0
    u: float = INF
    b: float = INF
    # Evaluations of this node's own region (1 normally, more at the depth cap).
    own_visits: int = 0
    own_reward_sum: float = 0.0

    def copy(self) -> NodeStats:
        return NodeStats(self.region, self.visits, self.mean, self.u, self.b, self.own_visits, self.own_reward_sum)


@dataclass(frozen=True)
class HooParams:
    c: float = 0.2
    nu1: float = 0.5
    rho: float = 0.5
    horizon: int = 500
    n_dir: int = 15
    depth_limit: str = "inf"
    division_policy: str = "softmax"
    variant: str = "truncated"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.nu1 > 0:
            raise ValueError(f"nu1 must be positive, got {self.nu1}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        if int(self.n_dir) != self.n_dir or self.n_dir < 1:
            raise ValueError(f"n_dir must be a positive integer, got {self.n_dir}")
        if self.depth_limit not in DEPTH_LIMITS:
            raise ValueError(f"depth_limit must be one of {DEPTH_LIMITS}, got {self.depth_limit!r}")
        if self.depth_limit == "formula" and self.rho == 1:
            raise ValueError("depth_limit='formula' is undefined for rho = 1")
        if self.division_policy not in POLICIES:
            raise ValueError(f"division_policy must be one of {POLICIES}, got {self.division_policy!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def max_depth(self) -> float:
        if self.depth_limit == "inf":
            return INF
        return depth_limit(self.horizon, self.nu1, self.rho)

    def describe(self) -> str:
        return (
            f"hoo-{self.variant}-{self.division_policy}-d{self.depth_limit}"
            f"-N{self.horizon}-c{self.c}-v{self.nu1}-rho{self.rho}-ndir{self.n_dir}"
        )


def depth_limit(N: int, nu1: float, rho: float) -> int:
    """Maximum tree depth ``ceil((ln N + ln nu1) / -ln rho)``, floored at zero."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not nu1 > 0:
        raise ValueError(f"nu1 must be positive, got {nu1}")
    if not 0 < rho < 1:
        raise ValueError(f"depth limit needs 0 < rho < 1, got {rho}")
    return max(0, math.ceil((math.log(N) + math.log(nu1)) / -math.log(rho)))


def u_value(stats: NodeStats, params: HooParams, depth: int, clock: int) -> float:
    """Optimistic estimate ``mean + c*sqrt(2 ln clock / T) + nu1 * rho**depth``.

    ``clock`` is the horizon for the truncated variant and the current iteration
    for the vanilla one.
    """
    if clock < 1:
        raise ValueError(f"clock must be >= 1, got {clock}")
    if stats.visits == 0:
        return INF
    return stats.mean + params.c * math.sqrt(2.0 * math.log(clock) / stats.visits) + params.nu1 * params.rho**depth


class HooTree:
    """Node statistics keyed by :class:`NodeId`, plus the set of nodes that joined the tree.

    ``nodes`` also holds the two unvisited children of every divided node; only
    ``members`` count as part of the tree proper.
    """

    def __init__(self, params: HooParams, space: Region):
        self.params = params
        self.space = space
        tie_seq, axis_seq = np.random.SeedSequence(params.seed).spawn(2)
        self.tie_rng = np.random.default_rng(tie_seq)
        self.axis_rng = np.random.default_rng(axis_seq)
        self.max_depth = params.max_depth()
        self.nodes: dict[NodeId, NodeStats] = {ROOT: NodeStats(space)}
        self.members: set[NodeId] = {ROOT}
        self.n = 0
        self.mutation_counts: list[int] = []
        self._by_depth: dict[int, list[NodeId]] = {0: [ROOT]}
        self._divide(ROOT)

    def _divide(self, node: NodeId) -> tuple[NodeId, NodeId]:
        lower, upper = divide(self.nodes[node].region, self.params.division_policy, self.axis_rng)
        a, b = node.children
        self.nodes[a] = NodeStats(lower)
        self.nodes[b] = NodeStats(upper)
        self._by_depth.setdefault(a.depth, []).extend((a, b))
        return a, b

    def is_divided(self, node: NodeId) -> bool:
        return node.children[0] in self.nodes

    def clock(self) -> int:
        return self.params.horizon if self.params.variant == "truncated" else max(self.n, 1)

    def leaves(self) -> Iterator[NodeId]:
        """Members none of whose children are members."""
        for node in self.members:
            a, b = node.children
            if a not in self.members and b not in self.members:
                yield node

    def __len__(self) -> int:
        return len(self.members)


def select_path(tree: HooTree) -> tuple[list[NodeId], NodeId]:
    """Follow the larger child B-value from the root; equal values are a fair coin flip."""
    node = ROOT
    path = [node]
    while node in tree.members and node.depth < tree.max_depth:
        a, b = node.children
        ba, bb = tree.nodes[a].b, tree.nodes[b].b
        if ba > bb:
            node = a
        elif ba < bb:
            node = b
        else:
            node = (a, b)[int(tree.tie_rng.integers(2))]
        path.append(node)
    return path, node


def expand(tree: HooTree, leaf: NodeId) -> tuple[NodeId, NodeId] | None:
    """Add ``leaf`` to the tree and split its region into two unvisited children.

    A leaf at the depth cap joins the tree without being split and ``None`` is
    returned.
    """
    if leaf in tree.members:
        raise ValueError(f"node {leaf} is already part of the tree")
    tree.members.add(leaf)
    if leaf.depth >= tree.max_depth:
        return None
    return tree._divide(leaf)


def _b_value(tree: HooTree, node: NodeId, stats: NodeStats) -> float:
    a, b = node.children
    if a not in tree.nodes:
        return stats.u
    return min(stats.u, max(tree.nodes[a].b, tree.nodes[b].b))


def backup(tree: HooTree, path: list[NodeId], reward: float) -> int:
    """Propagate ``reward`` from the evaluated leaf (``path[-1]``) up to the root.

    Returns the number of nodes whose statistics changed.
    """
    if not path:
        raise ValueError("backup needs a non-empty path")
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward must lie in [0, 1], got {reward}")
    params = tree.params
    clock = tree.clock()
    leaf = tree.nodes[path[-1]]
    leaf.own_visits += 1
    leaf.own_reward_sum += reward
    for node in reversed(path):
        stats = tree.nodes[node]
        stats.visits += 1
        stats.mean = (1.0 - 1.0 / stats.visits) * stats.mean + reward / stats.visits
        stats.u = u_value(stats, params, node.depth, clock)
        stats.b = _b_value(tree, node, stats)
    if params.variant == "vanilla":
        return _refresh_all(tree, clock)
    return len(path)


def _refresh_all(tree: HooTree, clock: int) -> int:
    """Recompute every visited U-value at ``clock`` and every B-value bottom-up."""
    touched = 0
    for depth in sorted(tree._by_depth, reverse=True):
        for node in tree._by_depth[depth]:
            stats = tree.nodes[node]
            if stats.visits == 0:
                continue
            stats.u = u_value(stats, tree.params, depth, clock)
            stats.b = _b_value(tree, node, stats)
            touched += 1
    return touched


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    node: NodeId
    reward: float
    best_so_far: float
    mean_so_far: float
    position: Vec3
    best_direction: int


@dataclass
class ExplorationLog:
    records: list[IterationRecord] = field(default_factory=list)
    complete: bool = True
    error: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])

    @property
    def cum_max(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])

    @property
    def cum_mean(self) -> np.ndarray:
        return np.array([r.mean_so_far for r in self.records])

    def best(self) -> IterationRecord:
        """First record attaining the highest reward."""
        if not self.records:
            raise ValueError("empty exploration log")
        return max(self.records, key=lambda r: (r.reward, -r.iteration))

    def append(self, reward: float, node: NodeId, position: Vec3, best_direction: int) -> IterationRecord:
        n = len(self.records) + 1
        if self.records:
            prev = self.records[-1]
            best = max(prev.best_so_far, reward)
            mean = prev.mean_so_far + (reward - prev.mean_so_far) / n
        else:
            best, mean = reward, reward
        rec = IterationRecord(n, node, reward, best, mean, position, best_direction)
        self.records.append(rec)
        return rec


class HooExplorer:
    """Step-by-step driver: select, expand, evaluate the region center, back up."""

    def __init__(self, params: HooParams, scorer: Scorer, space: Region, fov_degrees: float = 60.0):
        self.params = params
        self.scorer = scorer
        self.tree = HooTree(params, space)
        self.directions = sample_directions(params.n_dir)
        self.fov_degrees = fov_degrees
        self.log = ExplorationLog()
        self.last_path: list[NodeId] = []

    def step(self) -> IterationRecord:
        tree = self.tree
        path, leaf = select_path(tree)
        self.last_path = path
        fresh = 0
        if leaf not in tree.members:
            fresh = 2 if expand(tree, leaf) is not None else 0
        tree.n += 1
        position = center(tree.nodes[leaf].region)
        try:
            reward, k = region_reward(position, self.directions, self.scorer, self.fov_degrees)
        except ScorerError:
            raise
        except Exception as exc:
            raise ScorerError(f"{type(exc).__name__}: {exc}") from exc
        tree.mutation_counts.append(backup(tree, path, reward) + fresh)
        return self.log.append(reward, leaf, position, k)

    def run(self, iterations: int | None = None) -> ExplorationLog:
        total = self.params.horizon if iterations is None else iterations
        while len(self.log) < total:
            try:
                self.step()
            except ScorerError as exc:
                logger.warning("exploration aborted at iteration %d: %s", len(self.log) + 1, exc)
                self.log.complete = False
                self.log.error = str(exc)
                break
        return self.log


def run(params: HooParams, scorer: Scorer, space: Region) -> ExplorationLog:
    """Run ``params.horizon`` iterations and return the per-iteration log."""
    return HooExplorer(params, scorer, space).run()
