"""Hierarchical optimistic search for high-scoring camera spots in 3D scenes."""

from spotsearch.geometry import (
    CameraPose,
    Region,
    divide,
    fibonacci_directions,
    sample_directions,
    softmax_axis_probs,
)
from spotsearch.hoo import (
    ExplorationLog,
    HooExplorer,
    HooParams,
    HooTree,
    IterationRecord,
    NodeId,
    NodeStats,
    depth_limit,
    run,
)
from spotsearch.scorers import (
    ConstantScorer,
    Scene1D,
    ScorerError,
    SyntheticScene,
    grid_oracle,
    load_scene,
    region_reward,
)

__all__ = [
    "CameraPose",
    "ConstantScorer",
    "ExplorationLog",
    "HooExplorer",
    "HooParams",
    "HooTree",
    "IterationRecord",
    "NodeId",
    "NodeStats",
    "Region",
    "Scene1D",
    "ScorerError",
    "SyntheticScene",
    "depth_limit",
    "divide",
    "fibonacci_directions",
    "grid_oracle",
    "load_scene",
    "region_reward",
    "run",
    "sample_directions",
    "softmax_axis_probs",
]

__version__ = "0.1.0"
