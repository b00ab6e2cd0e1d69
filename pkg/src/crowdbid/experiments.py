"""Batched experiments: budget, task-failure and population-size sweeps.

A configuration names one sweep axis and the points along it.  Every
(point, repetition) cell draws a synthetic population, runs each mechanism
on it and records obtained value (OV), the share of the exact optimum
(POV, only while the population is small enough to enumerate), payments,
winner counts and probe counts.  Cells of the same repetition share their
population, so points along the sweep are paired.  Seeds come from
``SeedSequence([seed, repetition])`` and do not depend on scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .baselines import greedy_bid_threshold, random_selection
from .hvm import binary_search_budget, hvm_run
from .model import AuctionInstance
from .oracle import brute_force_optimal, subset_value
from .simulator import PopulationConfig, generate_population, population_instance, simulate_execution
from .tvm import tvm_run

__all__ = [
    "MECHANISMS",
    "SWEEPS",
    "POV_LIMIT",
    "ConfigError",
    "ExperimentConfig",
    "CellResult",
    "MetricsRow",
    "MetricsReport",
    "run_mechanism",
    "run_experiment",
    "mean_ci",
    "BenchConfig",
    "run_bench",
]

MECHANISMS = ("tvm", "hvm", "greedy", "random")
SWEEPS = ("budget", "tfp", "bidders")
POV_LIMIT = 20


class ConfigError(ValueError):
    pass


def run_mechanism(name: str, instance: AuctionInstance, jobs: int = 1, seed: int = 0,
                  theta: float = 1.0, budget_clamped: bool = False):
    """Outcome of mechanism ``name`` and the number of truthful-mechanism runs it took."""
    if name == "tvm":
        return tvm_run(instance, jobs), 1
    if name == "hvm":
        out, log = hvm_run(instance, jobs)
        return out, log.tvm_evaluations
    if name == "binary":
        out, log = binary_search_budget(instance, jobs)
        return out, log.tvm_evaluations
    if name == "greedy":
        return greedy_bid_threshold(instance, jobs, theta, budget_clamped), 0
    if name == "random":
        return random_selection(instance, seed), 0
    raise ConfigError(f"unknown mechanism {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationConfig
    sweep: str
    points: tuple
    mechanisms: tuple = ("tvm", "hvm")
    repetitions: int = 100
    budget: float = 2.0
    tfp: float = 0.0
    seed: int = 0
    greedy_theta: float = 1.0
    greedy_budget_clamped: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {', '.join(SWEEPS)}, got {self.sweep!r}")
        if not self.points:
            raise ConfigError("points must not be empty")
        for mech in self.mechanisms:
            if mech not in MECHANISMS:
                raise ConfigError(f"unknown mechanism {mech!r}")
        if self.repetitions < 2:
            raise ConfigError("repetitions must be >= 2 for confidence intervals")
        if self.sweep == "tfp" and not all(0 <= p <= 1 for p in self.points):
            raise ConfigError("tfp points must lie in [0, 1]")
        if self.sweep == "budget" and not all(p > 0 for p in self.points):
            raise ConfigError("budget points must be positive")
        if self.sweep == "bidders" and not all(int(p) == p and p >= 1 for p in self.points):
            raise ConfigError("bidder counts must be positive integers")
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if not 0 <= self.tfp <= 1:
            raise ConfigError("tfp must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict, seed: Optional[int] = None) -> "ExperimentConfig":
        data = dict(data)
        try:
            pop = dict(data.pop("population", {}))
            for k in [f for f in PopulationConfig.__dataclass_fields__ if f in data]:
                pop[k] = data.pop(k)
            pop.setdefault("bidder_count", 20)
            population = PopulationConfig.from_dict(pop)
            kwargs = {
                "population": population,
                "sweep": data.pop("sweep"),
                "points": tuple(data.pop("points")),
            }
        except KeyError as exc:
            raise ConfigError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if "mechanisms" in data:
            kwargs["mechanisms"] = tuple(data.pop("mechanisms"))
        for key in ("repetitions", "budget", "tfp", "seed", "greedy_theta", "greedy_budget_clamped"):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise ConfigError(f"unknown fields: {', '.join(sorted(data))}")
        if seed is not None:
            kwargs["seed"] = seed
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path, seed: Optional[int] = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = list(self.points)
        d["mechanisms"] = list(self.mechanisms)
        return d


@dataclass
class CellResult:
    point: float
    repetition: int
    mechanism: str
    ov: float
    pov: Optional[float]
    nov: float
    payments_total: float
    winners_count: int
    tvm_evaluations: int
    wall_time: float


def _cell_seed(master: int, repetition: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([master, repetition, stream]).generate_state(1)[0])


@lru_cache(maxsize=16)
def _prepared(pop_cfg: PopulationConfig, budget: float):
    """Instance, value of all bidders together, and the optimum when enumerable.

    Cached because points of a failure-probability sweep share all three.
    """
    instance = population_instance(generate_population(pop_cfg), budget)
    everyone = subset_value(instance, instance.ids.tolist())
    opt = brute_force_optimal(instance).opt_value if instance.m <= POV_LIMIT else None
    return instance, everyone, opt


def _run_cell(config: ExperimentConfig, point, repetition: int) -> list[CellResult]:
    pop_cfg = replace(config.population, rng_seed=_cell_seed(config.seed, repetition))
    budget, tfp = config.budget, config.tfp
    if config.sweep == "budget":
        budget = float(point)
    elif config.sweep == "tfp":
        tfp = float(point)
    else:
        pop_cfg = replace(pop_cfg, bidder_count=int(point))
    instance, everyone, opt = _prepared(pop_cfg, budget)
    fail_seed = _cell_seed(config.seed, repetition, 1)
    results = []
    for mech in config.mechanisms:
        t0 = time.perf_counter()
        out, evals = run_mechanism(mech, instance, 1, _cell_seed(config.seed, repetition, 2),
                                   config.greedy_theta, config.greedy_budget_clamped)
        elapsed = time.perf_counter() - t0
        ov = simulate_execution(out, instance, tfp, fail_seed) if tfp > 0 else out.achieved_value
        spent = math.fsum(instance.bid_of(k).bid for k in out.winners)
        # a selection whose bids overrun the budget is not comparable with the optimum
        pov = None
        if opt is not None and spent <= budget:
            pov = ov / opt if opt > 0 else 1.0
        results.append(CellResult(float(point), repetition, mech, ov, pov,
                                  ov / everyone if everyone > 0 else 0.0,
                                  out.payments_total, len(out.winners), evals, elapsed))
    return results


def mean_ci(xs, level: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t confidence half-width."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    if n == 0:
        return math.nan, math.nan
    mean = float(xs.mean())
    if n < 2:
        return mean, math.nan
    sd = float(xs.std(ddof=1))
    return mean, float(stats.t.ppf(0.5 + level / 2, n - 1) * sd / math.sqrt(n))


@dataclass
class MetricsRow:
    sweep: str
    x: float
    mechanism: str
    repetitions: int
    ov_mean: float
    ov_ci95: float
    pov_mean: Optional[float]
    pov_ci95: Optional[float]
    nov_mean: float
    nov_ci95: float
    payments_mean: float
    payments_ci95: float
    winners_mean: float
    winners_ci95: float
    tvm_evaluations_mean: float
    wall_time_mean: float


TIMING_COLUMNS = ("wall_time_mean",)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    rows: list[MetricsRow]
    cells: list[CellResult] = field(repr=False, default_factory=list)

    def row(self, mechanism: str, x: float) -> MetricsRow:
        for r in self.rows:
            if r.mechanism == mechanism and r.x == x:
                return r
        raise KeyError((mechanism, x))

    def series(self, mechanism: str, column: str) -> list:
        return [getattr(r, column) for r in self.rows if r.mechanism == mechanism]

    def to_csv(self, timing: bool = True) -> str:
        cols = [f for f in MetricsRow.__dataclass_fields__ if timing or f not in TIMING_COLUMNS]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.rows:
            writer.writerow(["" if getattr(r, c) is None else repr(getattr(r, c))
                             if isinstance(getattr(r, c), float) else getattr(r, c) for c in cols])
        return buf.getvalue()

    def to_json(self, timing: bool = True) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timing:
                for c in TIMING_COLUMNS:
                    d.pop(c)
            rows.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()})
        return json.dumps({"config": self.config.to_dict(), "rows": rows}, indent=2) + "\n"


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   progress: Optional[Callable[[int, int], None]] = None) -> MetricsReport:
    # repetition-major, so consecutive cells reuse the cached population
    cells = [(p, r) for r in range(config.repetitions) for p in config.points]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(lambda c: _run_cell(config, *c), cells))
    else:
        batches = []
        for k, c in enumerate(cells):
            batches.append(_run_cell(config, *c))
            if progress is not None:
                progress(k + 1, len(cells))
    flat = [res for batch in batches for res in batch]
    rows = []
    for p in config.points:
        for mech in config.mechanisms:
            group = [c for c in flat if c.point == float(p) and c.mechanism == mech]
            ov = mean_ci([c.ov for c in group])
            povs = [c.pov for c in group]
            pov = mean_ci(povs) if all(v is not None for v in povs) else (None, None)
            nov = mean_ci([c.nov for c in group])
            pay = mean_ci([c.payments_total for c in group])
            win = mean_ci([c.winners_count for c in group])
            rows.append(MetricsRow(
                config.sweep, float(p), mech, len(group), ov[0], ov[1], pov[0], pov[1],
                nov[0], nov[1], pay[0], pay[1], win[0], win[1],
                float(np.mean([c.tvm_evaluations for c in group])),
                float(np.mean([c.wall_time for c in group]))))
    return MetricsReport(config, rows, flat)


# -- search and scaling benchmark ---------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    bidder_counts: tuple = tuple(range(100, 1001, 100))
    budget: float = 10.0
    seed: int = 0
    jobs: tuple = (1, 2, 4)
    scaling_bidders: int = 1000
    population: PopulationConfig = field(default_factory=PopulationConfig)

    @classmethod
    def from_dict(cls, data: dict, seed: Optional[int] = None) -> "BenchConfig":
        data = dict(data)
        pop = PopulationConfig.from_dict(dict(data.pop("population", {})))
        kwargs = {"population": pop}
        for key in ("bidder_counts", "jobs"):
            if key in data:
                kwargs[key] = tuple(int(x) for x in data.pop(key))
        for key in ("budget", "seed", "scaling_bidders"):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise ConfigError(f"unknown fields: {', '.join(sorted(data))}")
        if seed is not None:
            kwargs["seed"] = seed
        return cls(**kwargs)


def _bench_instance(cfg: BenchConfig, m: int, index: int) -> AuctionInstance:
    pop = replace(cfg.population, bidder_count=m, rng_seed=_cell_seed(cfg.seed, index))
    return population_instance(generate_population(pop), cfg.budget)


def run_bench(cfg: BenchConfig) -> dict:
    """Probe counts and wall time of interpolation vs. bisection, and wall
    time of one truthful run against worker count."""
    search = []
    for k, m in enumerate(cfg.bidder_counts):
        inst = _bench_instance(cfg, m, k)
        row = {"bidders": m}
        for name in ("binary", "hvm"):
            t0 = time.perf_counter()
            out, evals = run_mechanism(name, inst)
            row[f"{name}_evaluations"] = evals
            row[f"{name}_time"] = time.perf_counter() - t0
            row[f"{name}_value"] = out.achieved_value
        search.append(row)
    scale = max([r["binary_time"] for r in search] + [r["hvm_time"] for r in search] + [1e-12])
    for r in search:
        r["binary_time_norm"] = r["binary_time"] / scale
        r["hvm_time_norm"] = r["hvm_time"] / scale
    wins = sum(r["hvm_evaluations"] <= r["binary_evaluations"] for r in search)
    reduction = [1 - r["hvm_evaluations"] / r["binary_evaluations"] for r in search]

    inst = _bench_instance(cfg, cfg.scaling_bidders, len(cfg.bidder_counts))
    scaling, ref = [], None
    for j in cfg.jobs:
        t0 = time.perf_counter()
        out = tvm_run(inst, j)
        elapsed = time.perf_counter() - t0
        ref = ref or out
        scaling.append({"jobs": j, "wall_time": elapsed, "identical": out.same_as(ref)})
    return {
        "search": search,
        "hvm_not_worse_share": wins / len(search) if search else math.nan,
        "mean_probe_reduction": float(np.mean(reduction)) if reduction else math.nan,
        "scaling": scaling,
    }
