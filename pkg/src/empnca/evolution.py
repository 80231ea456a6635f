"""Age-Fitness Pareto Optimization over NCA genomes.

Age (generations since a lineage entered the population) is always the first
objective and is minimized. Each generation every survivor produces one
mutated child, one random newcomer is injected, and the enlarged population
is contracted back to size P by random pairwise dominance tournaments.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .nca import N_PARAMS, DeathRule, Genome, rollout
from .objectives import Direction, Kind, ObjectiveSpec, evaluate_objective, loss
from .shapes import TargetShape

logger = logging.getLogger(__name__)

MUTATION_SIGMA = 0.5


@dataclass
class Individual:
    genome: Genome
    age: int = 0
    objectives: tuple = ()
    loss: float = math.nan
    evaluated: bool = False

    @property
    def id(self) -> int:
        return self.genome.id

    def to_dict(self) -> dict:
        return {
            "genome": self.genome.to_dict(),
            "age": self.age,
            "objectives": list(self.objectives),
            "loss": self.loss,
            "evaluated": self.evaluated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Individual":
        return cls(Genome.from_dict(d["genome"]), d["age"], tuple(d["objectives"]), d["loss"], d["evaluated"])


@dataclass
class EvolutionConfig:
    population_size: int
    generations: int
    objectives: List[ObjectiveSpec]
    target: TargetShape
    M: int = 25
    N: int = 50
    master_seed: int = 0
    death_rule: DeathRule = DeathRule.OVERWRITE_ALWAYS
    synchronous: bool = False
    mutation_sigma: float = MUTATION_SIGMA
    max_retries: int = 1000
    workers: int = 1
    checkpoint_every: int = 0
    checkpoint_dir: Optional[Path] = None

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 1 <= len(self.objectives) <= 2:
            raise ValueError("AFPO runs take age plus one or two objectives")
        if self.target.M != self.M:
            raise ValueError(f"target is {self.target.M}x{self.target.M}, grid is {self.M}x{self.M}")
        for spec in self.objectives:
            spec.validate(self.N)


class IdSource:
    """Monotonic genome ids, unique within one run."""

    def __init__(self, start: int = 0):
        self.next = start

    def __call__(self) -> int:
        value = self.next
        self.next += 1
        return value


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_genome(rng: np.random.Generator, id: int = 0) -> Genome:
    return Genome.from_parameters(rng.uniform(-1.0, 1.0, N_PARAMS), id=id)


def mutate(parent: Genome, rng: np.random.Generator, id: int = 0, sigma: float = MUTATION_SIGMA) -> Genome:
    """Copy of ``parent`` with one uniformly chosen parameter perturbed by N(0, sigma), clamped to [-1, 1]."""
    params = parent.parameters()
    i = int(rng.integers(N_PARAMS))
    params[i] = min(1.0, max(-1.0, params[i] + rng.normal(0.0, sigma)))
    return Genome.from_parameters(params, id=id, parent_id=parent.id)


def _keyed(ind: Individual, specs: Sequence[ObjectiveSpec]) -> tuple:
    # every component minimized
    vals = [float(ind.age)]
    for spec, v in zip(specs, ind.objectives):
        vals.append(-v if spec.direction is Direction.MAXIMIZE else v)
    return tuple(vals)


def _dominates_keys(a: tuple, b: tuple) -> bool:
    better = False
    for x, y in zip(a, b):
        if x > y:
            return False
        if x < y:
            better = True
    return better


def dominates(a: Individual, b: Individual, specs: Sequence[ObjectiveSpec]) -> bool:
    if len(a.objectives) != len(specs) or len(b.objectives) != len(specs):
        raise ValueError("objective vectors do not match the objective list")
    return _dominates_keys(_keyed(a, specs), _keyed(b, specs))


def pareto_front(population: Sequence[Individual], specs) -> list:
    """Indices of individuals not dominated by any other."""
    keys = [_keyed(ind, specs) for ind in population]
    return [
        i for i, ki in enumerate(keys)
        if not any(_dominates_keys(kj, ki) for j, kj in enumerate(keys) if j != i)
    ]


# evaluation -----------------------------------------------------------------

@dataclass(frozen=True)
class EvalContext:
    M: int
    N: int
    death_rule: DeathRule
    synchronous: bool
    target_mask: np.ndarray
    specs: tuple

    @classmethod
    def from_config(cls, config: EvolutionConfig) -> "EvalContext":
        return cls(config.M, config.N, DeathRule(config.death_rule), config.synchronous,
                   config.target.mask, tuple(config.objectives))


def evaluate_genome(genome: Genome, ctx: EvalContext) -> tuple:
    """Returns ``(objective values, loss over the full rollout)``."""
    trace = rollout(genome, ctx.M, ctx.N, True, ctx.death_rule, ctx.synchronous)
    values = tuple(evaluate_objective(spec, trace, ctx.target_mask) for spec in ctx.specs)
    full = loss(trace, ctx.target_mask, 0, ctx.N)
    return values, full


_worker_ctx: Optional[EvalContext] = None


def _init_worker(ctx: EvalContext) -> None:
    global _worker_ctx
    _worker_ctx = ctx


def _evaluate_in_worker(genome: Genome) -> tuple:
    return evaluate_genome(genome, _worker_ctx)


class Evaluator:
    """Evaluates genomes serially or on a process pool; results never depend on worker count."""

    def __init__(self, ctx: EvalContext, workers: int = 1):
        self.ctx = ctx
        self.workers = max(1, int(workers))
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(self.workers, initializer=_init_worker, initargs=(self.ctx,))
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __call__(self, individuals: Sequence[Individual]) -> None:
        todo = [ind for ind in individuals if not ind.evaluated]
        if not todo:
            return
        genomes = [ind.genome for ind in todo]
        if self._pool is None:
            results = [evaluate_genome(g, self.ctx) for g in genomes]
        else:
            chunk = max(1, len(genomes) // (self.workers * 4))
            results = list(self._pool.map(_evaluate_in_worker, genomes, chunksize=chunk))
        for ind, (values, full) in zip(todo, results):
            ind.objectives = values
            ind.loss = full
            ind.evaluated = True


# AFPO -------------------------------------------------------------------------

@dataclass
class GenerationReport:
    newcomer_id: int
    removed: list = field(default_factory=list)
    escapes: list = field(default_factory=list)


def contract(population: list, size: int, specs, rng, max_retries: int = 1000) -> list:
    """Remove individuals by random pairwise dominance tournaments until ``size`` remain.

    Returns a list of ``(removed id, reason)``; reason is "dominated", "tie"
    or "escape" (no dominated pair found within ``max_retries`` draws).
    """
    removed = []
    keys = [_keyed(ind, specs) for ind in population]
    while len(population) > size:
        for _ in range(max_retries):
            i, j = (int(v) for v in rng.choice(len(population), 2, replace=False))
            if _dominates_keys(keys[i], keys[j]):
                victim, reason = j, "dominated"
            elif _dominates_keys(keys[j], keys[i]):
                victim, reason = i, "dominated"
            elif keys[i] == keys[j]:
                victim, reason = (i, j)[int(rng.integers(2))], "tie"
            else:
                continue
            break
        else:
            front = set(pareto_front(population, specs))
            others = [i for i in range(len(population)) if i not in front]
            if others:
                oldest = max(population[i].age for i in others)
                pool = [i for i in others if population[i].age == oldest]
            else:
                pool = list(range(len(population)))
            victim, reason = pool[int(rng.integers(len(pool)))], "escape"
            logger.debug("contraction escape hatch removed genome %d", population[victim].id)
        removed.append((population[victim].id, reason))
        del population[victim]
        del keys[victim]
    return removed


def afpo_generation(
    population: List[Individual],
    config: EvolutionConfig,
    rng: np.random.Generator,
    ids: IdSource,
    evaluate: Callable,
) -> tuple:
    """One AFPO generation. Returns ``(new population, GenerationReport)``."""
    children = [
        Individual(mutate(ind.genome, rng, ids(), config.mutation_sigma), age=ind.age)
        for ind in population
    ]
    newcomer = Individual(random_genome(rng, ids()), age=0)
    pool = list(population) + children + [newcomer]
    evaluate(pool)
    removed = contract(pool, config.population_size, config.objectives, rng, config.max_retries)
    for ind in pool:
        ind.age += 1
    report = GenerationReport(newcomer.id, removed, [r for r in removed if r[1] == "escape"])
    return pool, report


def seed_population(champions: Sequence[Genome], config: EvolutionConfig, rng, ids: IdSource) -> list:
    """Champions verbatim (fresh ids, age 0) plus round-robin single mutants up to P."""
    if not champions:
        raise ValueError("seed_population needs at least one champion")
    P = config.population_size
    roots = [Individual(Genome(g.weights, g.bias, ids()), age=0) for g in champions[:P]]
    population = list(roots)
    i = 0
    while len(population) < P:
        parent = roots[i % len(roots)].genome
        population.append(Individual(mutate(parent, rng, ids(), config.mutation_sigma), age=0))
        i += 1
    return population


# run loop -----------------------------------------------------------------------

LOG_COLUMNS = ("generation", "best_loss", "mean_loss", "best_obj3", "mean_obj3", "best_age", "pop_size")


def _best_key(ind: Individual) -> tuple:
    return (ind.loss, ind.age, ind.id)


def champion_of(population: Sequence[Individual]) -> Individual:
    return min(population, key=_best_key)


def log_row(generation: int, population: Sequence[Individual], specs) -> dict:
    best = champion_of(population)
    row = {
        "generation": generation,
        "best_loss": best.loss,
        "mean_loss": float(np.mean([ind.loss for ind in population])),
        "best_obj3": None,
        "mean_obj3": None,
        "best_age": best.age,
        "pop_size": len(population),
    }
    if len(specs) == 2:
        vals = [ind.objectives[1] for ind in population]
        pick = max if specs[1].direction is Direction.MAXIMIZE else min
        row["best_obj3"] = pick(vals)
        row["mean_obj3"] = float(np.mean(vals))
    return row


def format_log(rows: Sequence[dict]) -> str:
    lines = [",".join(LOG_COLUMNS)]
    for row in rows:
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in LOG_COLUMNS))
    return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    champion: Individual
    log: list
    population: list
    best_ever: Individual
    escapes: list


def _rng_state_to_json(state):
    if isinstance(state, dict):
        return {k: _rng_state_to_json(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__uint64__": [int(v) for v in state]}
    return state


def _rng_state_from_json(state):
    if isinstance(state, dict):
        if "__uint64__" in state:
            return np.array(state["__uint64__"], dtype=np.uint64)
        return {k: _rng_state_from_json(v) for k, v in state.items()}
    return state


def write_checkpoint(path, generation, population, rng, ids, log, best_ever, escapes) -> None:
    data = {
        "generation": generation,
        "next_id": ids.next,
        "rng_state": _rng_state_to_json(rng.bit_generator.state),
        "population": [ind.to_dict() for ind in population],
        "log": log,
        "best_ever": best_ever.to_dict(),
        "escapes": escapes,
    }
    Path(path).write_text(json.dumps(data))


def evolve(
    config: EvolutionConfig,
    initial: Optional[Sequence[Genome]] = None,
    resume_from=None,
    on_generation: Optional[Callable] = None,
) -> RunResult:
    """Run ``config.generations`` AFPO generations.

    ``initial`` seeds the population with champion genomes; ``resume_from``
    continues from a checkpoint file written by a run with the same config.
    ``on_generation(g, before, after, report)`` is called after each generation.
    """
    specs = config.objectives
    ctx = EvalContext.from_config(config)
    with Evaluator(ctx, config.workers) as evaluate:
        if resume_from is not None:
            data = json.loads(Path(resume_from).read_text())
            rng = make_rng(config.master_seed)
            rng.bit_generator.state = _rng_state_from_json(data["rng_state"])
            ids = IdSource(data["next_id"])
            population = [Individual.from_dict(d) for d in data["population"]]
            log = data["log"]
            best_ever = Individual.from_dict(data["best_ever"])
            escapes = [tuple(e) for e in data["escapes"]]
            start = data["generation"]
        else:
            rng = make_rng(config.master_seed)
            ids = IdSource()
            if initial:
                population = seed_population(initial, config, rng, ids)
            else:
                population = [Individual(random_genome(rng, ids()), age=0) for _ in range(config.population_size)]
            evaluate(population)
            log, escapes, start = [], [], 0
            best_ever = replace(champion_of(population))

        if config.generations == 0:
            # no search: mutants created while seeding do not count
            roots = [ind for ind in population if ind.genome.parent_id is None]
            champ = champion_of(roots or population)
            return RunResult(champ, log, population, champ, escapes)

        for g in range(start + 1, config.generations + 1):
            before = population
            population, report = afpo_generation(population, config, rng, ids, evaluate)
            escapes.extend((g, gid) for gid, _ in report.escapes)
            if report.escapes:
                logger.info("generation %d: %d contraction escapes", g, len(report.escapes))
            log.append(log_row(g, population, specs))
            cand = champion_of(population)
            if _best_key(cand) < _best_key(best_ever):
                best_ever = replace(cand)
            if on_generation is not None:
                on_generation(g, before, population, report)
            if config.checkpoint_every and g % config.checkpoint_every == 0 and config.checkpoint_dir:
                Path(config.checkpoint_dir).mkdir(parents=True, exist_ok=True)
                write_checkpoint(Path(config.checkpoint_dir) / f"checkpoint_{g:05d}.json",
                                 g, population, rng, ids, log, best_ever, escapes)

    return RunResult(champion_of(population), log, population, best_ever, escapes)
