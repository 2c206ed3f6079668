"""Baselines, experiment runner and CSV metrics for comparing explorers."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from spotsearch.geometry import Region, sample_directions
from spotsearch.hoo import ExplorationLog, HooExplorer, HooParams
from spotsearch.scorers import (
    Hotspot,
    Scene1D,
    Scorer,
    ScorerError,
    SyntheticScene,
    load_scene,
    region_reward,
    save_scene,
)

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / "data"
SUITE_DIR = DATA_DIR / "suite"
DEFAULT_CONFIG = DATA_DIR / "bench_default.json"

LONG_COLUMNS = ("scene", "variant", "seed", "iteration", "reward", "cum_max", "cum_mean", "status")
SUMMARY_COLUMNS = (
    "scene",
    "variant",
    "runs",
    "failed",
    "final_max_mean",
    "final_max_std",
    "final_mean_mean",
    "final_mean_std",
)
ALL_SCENES = "ALL"


@dataclass(frozen=True)
class RandomExplorerParams:
    horizon: int = 500
    n_dir: int = 15
    seed: int = 0
    bounds: Region | None = None

    def __post_init__(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        if int(self.n_dir) != self.n_dir or self.n_dir < 1:
            raise ValueError(f"n_dir must be a positive integer, got {self.n_dir}")

    def describe(self) -> str:
        return f"random-N{self.horizon}-ndir{self.n_dir}"


ExplorerParams = Union[HooParams, RandomExplorerParams]


def random_explore(params: RandomExplorerParams, scorer: Scorer) -> ExplorationLog:
    """Uniform random camera positions inside ``params.bounds``, scored like HOO regions."""
    if params.bounds is None:
        raise ValueError("random explorer needs bounds")
    rng = np.random.default_rng(params.seed)
    lo, hi = np.array(params.bounds.lo), np.array(params.bounds.hi)
    dirs = sample_directions(params.n_dir)
    log = ExplorationLog()
    for n in range(params.horizon):
        p = rng.uniform(lo, hi)
        position = (float(p[0]), float(p[1]), float(p[2]))
        try:
            reward, k = region_reward(position, dirs, scorer)
        except Exception as exc:
            logger.warning("random exploration aborted at iteration %d: %s", n + 1, exc)
            log.complete = False
            log.error = f"{type(exc).__name__}: {exc}"
            break
        log.append(reward, None, position, k)
    return log


def explore(params: ExplorerParams, scorer: Scorer, bounds: Region) -> ExplorationLog:
    if isinstance(params, RandomExplorerParams):
        return random_explore(dataclasses.replace(params, bounds=bounds), scorer)
    return HooExplorer(params, scorer, bounds).run()


@dataclass(frozen=True)
class Variant:
    name: str
    params: ExplorerParams


@dataclass
class BenchConfig:
    scenes: list[Path]
    variants: list[Variant]
    seeds: list[int]
    output: Path | None = None

    def __post_init__(self) -> None:
        if not self.scenes:
            raise ValueError("bench config needs at least one scene")
        if not self.seeds:
            raise ValueError("bench config needs at least one seed")
        if not self.variants:
            raise ValueError("bench config needs at least one variant")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError(f"variant names must be unique: {names}")


@dataclass
class RunResult:
    scene: str
    variant: str
    seed: int
    log: ExplorationLog

    @property
    def status(self) -> str:
        return "ok" if self.log.complete else "aborted"

    @property
    def final_max(self) -> float:
        return float(self.log.cum_max[-1]) if len(self.log) else float("nan")

    @property
    def final_mean(self) -> float:
        return float(self.log.cum_mean[-1]) if len(self.log) else float("nan")


@dataclass
class BenchResult:
    runs: list[RunResult] = field(default_factory=list)

    def select(self, scene: str | None = None, variant: str | None = None) -> list[RunResult]:
        return [
            r for r in self.runs if (scene is None or r.scene == scene) and (variant is None or r.variant == variant)
        ]

    @property
    def scenes(self) -> list[str]:
        return sorted({r.scene for r in self.runs})

    @property
    def variants(self) -> list[str]:
        return sorted({r.variant for r in self.runs})

    def summary_rows(self) -> list[dict[str, Any]]:
        rows = []
        for variant in self.variants:
            for scene in self.scenes + [ALL_SCENES]:
                runs = self.select(None if scene == ALL_SCENES else scene, variant)
                if not runs:
                    continue
                ok = [r for r in runs if len(r.log)]
                maxes = np.array([r.final_max for r in ok])
                means = np.array([r.final_mean for r in ok])
                rows.append(
                    {
                        "scene": scene,
                        "variant": variant,
                        "runs": len(runs),
                        "failed": sum(not r.log.complete for r in runs),
                        "final_max_mean": float(maxes.mean()) if ok else float("nan"),
                        "final_max_std": float(maxes.std()) if ok else float("nan"),
                        "final_mean_mean": float(means.mean()) if ok else float("nan"),
                        "final_mean_std": float(means.std()) if ok else float("nan"),
                    }
                )
        rows.sort(key=lambda r: (r["scene"] == ALL_SCENES, r["scene"], r["variant"]))
        return rows

    def long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for r in sorted(self.runs, key=lambda r: (r.scene, r.variant, r.seed)):
            for rec in r.log.records:
                w.writerow(
                    (
                        r.scene,
                        r.variant,
                        r.seed,
                        rec.iteration,
                        _fmt(rec.reward),
                        _fmt(rec.best_so_far),
                        _fmt(rec.mean_so_far),
                        r.status,
                    )
                )
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.summary_rows():
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def write(self, out_dir: str | Path, prefix: str = "bench") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        long_path, summary_path = out / f"{prefix}_long.csv", out / f"{prefix}_summary.csv"
        long_path.write_text(self.long_csv(), encoding="utf-8")
        summary_path.write_text(self.summary_csv(), encoding="utf-8")
        return long_path, summary_path


def _fmt(x: float) -> str:
    # repr gives the shortest decimal that round-trips
    return repr(float(x))


def read_long_csv(path: str | Path) -> list[dict[str, Any]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["seed"] = int(row["seed"])
        row["iteration"] = int(row["iteration"])
        for k in ("reward", "cum_max", "cum_mean"):
            row[k] = float(row[k])
    return rows


def scene_name(path: Path) -> str:
    return Path(path).stem


def run_bench(config: BenchConfig) -> BenchResult:
    """Run every (scene, variant, seed) combination; write CSVs if ``config.output`` is set."""
    scenes = [(scene_name(p), load_scene(p)) for p in config.scenes]
    result = BenchResult()
    for name, scene in scenes:
        for variant in config.variants:
            for seed in config.seeds:
                params = dataclasses.replace(variant.params, seed=seed)
                log = explore(params, scene, scene.bounds)
                if not log.complete:
                    logger.warning("run %s/%s/seed=%d aborted: %s", name, variant.name, seed, log.error)
                result.runs.append(RunResult(name, variant.name, seed, log))
    if config.output is not None:
        result.write(config.output)
    return result


def ablation_variants(
    horizon: int = 500,
    horizons: Sequence[int] = (500, 1000),
    nu1_grid: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0),
    n_dirs: Sequence[int] = (15, 30),
) -> list[Variant]:
    """Division policy, depth limit, horizon x nu1 sweep and direction count, deduplicated."""
    base = HooParams(horizon=horizon)
    candidates = [
        base,
        dataclasses.replace(base, division_policy="argmax"),
        dataclasses.replace(base, depth_limit="formula"),
    ]
    candidates += [dataclasses.replace(base, horizon=n, nu1=v) for n in horizons for v in nu1_grid]
    candidates += [dataclasses.replace(base, n_dir=k) for k in n_dirs]
    seen: dict[str, Variant] = {}
    for p in candidates:
        seen.setdefault(p.describe(), Variant(p.describe(), p))
    return list(seen.values())


def ablation_suite(
    scenes: Sequence[str | Path] | None = None,
    seeds: Iterable[int] = range(5),
    output: str | Path | None = None,
    **variant_kwargs,
) -> BenchResult:
    config = BenchConfig(
        scenes=[Path(p) for p in (scenes if scenes is not None else suite_paths())],
        variants=ablation_variants(**variant_kwargs),
        seeds=list(seeds),
        output=Path(output) if output is not None else None,
    )
    return run_bench(config)


# --- config files -----------------------------------------------------------

_HOO_FIELDS = {f.name for f in dataclasses.fields(HooParams)} - {"seed"}
_RANDOM_FIELDS = {"horizon", "n_dir"}


def variant_from_dict(data: dict[str, Any]) -> Variant:
    data = dict(data)
    name = data.pop("name", None)
    kind = data.pop("explorer", "hoo")
    if kind == "hoo":
        allowed, cls = _HOO_FIELDS, HooParams
    elif kind == "random":
        allowed, cls = _RANDOM_FIELDS, RandomExplorerParams
    else:
        raise ValueError(f"unknown explorer {kind!r}; expected 'hoo' or 'random'")
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown {kind} variant field(s) {sorted(unknown)}")
    params = cls(**data)
    return Variant(name or params.describe(), params)


def load_bench_config(path: str | Path, output: str | Path | None = None) -> BenchConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"scenes", "variants", "seeds", "output"}
    if unknown:
        raise ValueError(f"unknown bench config field(s) {sorted(unknown)}")
    scenes = [p if Path(p).is_absolute() else path.parent / p for p in data.get("scenes", [])]
    out = output if output is not None else data.get("output")
    return BenchConfig(
        scenes=[Path(p) for p in scenes],
        variants=[variant_from_dict(v) for v in data.get("variants", [])],
        seeds=[int(s) for s in data.get("seeds", [])],
        output=Path(out) if out is not None else None,
    )


# --- the standard synthetic suite -------------------------------------------

SUITE_SIZE = 10
SUITE_SEED = 20240


def suite_paths() -> list[Path]:
    return [SUITE_DIR / f"scene_{k:02d}.json" for k in range(SUITE_SIZE)]


def load_suite() -> list[tuple[str, SyntheticScene]]:
    return [(scene_name(p), load_scene(p)) for p in suite_paths()]


def generate_scene(rng: np.random.Generator) -> SyntheticScene:
    """One random room-sized scene with 1 to 5 hotspots.

    Roughly a third of the hotspots are isotropic, a third look back at their own
    center and a third prefer a fixed horizontal viewing axis. Center-facing lobes
    keep ``kappa <= 2`` so the best of 15 sampled directions stays close to the
    isotropic response.
    """
    size = np.round(rng.uniform([12.0, 3.0, 12.0], [24.0, 6.0, 24.0]), 1)
    bounds = Region((0.0, 0.0, 0.0), tuple(float(v) for v in size))
    hotspots = []
    for k in range(int(rng.integers(1, 6))):
        c = np.round(rng.uniform(0.1 * size, 0.9 * size), 2)
        kind = int(rng.integers(3))
        kappa, axis = 0.0, None
        if kind == 1:
            kappa = float(np.round(rng.uniform(0.5, 2.0), 2))
        elif kind == 2:
            kappa = float(np.round(rng.uniform(1.0, 4.0), 2))
            yaw = rng.uniform(0.0, 2.0 * np.pi)
            axis = (float(np.round(np.cos(yaw), 4)), 0.0, float(np.round(np.sin(yaw), 4)))
        hotspots.append(
            Hotspot(
                center=tuple(float(v) for v in c),
                sigma=float(np.round(rng.uniform(2.5, 6.0), 2)),
                amplitude=1.0 if k == 0 else float(np.round(rng.uniform(0.4, 0.9), 2)),
                kappa=kappa,
                preferred_axis=axis,
            )
        )
    return SyntheticScene(bounds, tuple(hotspots))


def generate_suite(seed: int = SUITE_SEED, n: int = SUITE_SIZE) -> list[SyntheticScene]:
    rng = np.random.default_rng(seed)
    return [generate_scene(rng) for _ in range(n)]


def write_suite(directory: str | Path = SUITE_DIR, seed: int = SUITE_SEED) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, scene in enumerate(generate_suite(seed)):
        path = directory / f"scene_{k:02d}.json"
        save_scene(scene, path)
        paths.append(path)
    return paths


def default_1d_scene() -> Scene1D:
    return Scene1D.default()


# The default nu1 = 0.5 underestimates how fast the 1D scene varies near its two
# upper bumps; nu1 = 4 (a point of the nu1 sweep) keeps the smoothness bound valid.
ONE_D_PARAMS = HooParams(c=0.2, nu1=4.0, rho=0.5, horizon=1000)


if __name__ == "__main__":
    for p in write_suite():
        print(p)


__all__ = [
    "BenchConfig",
    "BenchResult",
    "ONE_D_PARAMS",
    "RandomExplorerParams",
    "RunResult",
    "ScorerError",
    "Variant",
    "ablation_suite",
    "ablation_variants",
    "generate_suite",
    "load_bench_config",
    "load_suite",
    "random_explore",
    "run_bench",
    "suite_paths",
]
