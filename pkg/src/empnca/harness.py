"""Experiment runner: replicates, k sweeps, fine-tuning, simulation and analysis.

Everything a run writes is deterministic except ``manifest.json``, which holds
the resolved config plus a timestamp.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .config import MANIFEST_VERSION, AnalysisConfig, ExperimentConfig, make_config
from .errors import ConfigError, InvalidHorizonError
from .evolution import EvolutionConfig, evolve, format_log
from .metrics import (
    boundary_proportion,
    confidence_interval,
    connected_components,
    hamming,
    rank_sum_test,
    stability_slope,
    transiency,
)
from .nca import (
    DeathRule,
    Genome,
    RolloutTrace,
    load_genome,
    render_ascii,
    rollout,
    save_genome,
    write_frames,
)
from .objectives import empowerment, loss, loss_series
from .shapes import TargetShape, parse_target

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "variant", "k", "replicate", "seed", "champion_id", "champion_age",
    "loss", "objective_1", "objective_2", "best_ever_loss",
)
METRIC_COLUMNS = ("run_id", "variant", "k", "metric", "value")
WORKERS_ENV = "EMPNCA_WORKERS"


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(out_dir: Path, config: ExperimentConfig, **extra) -> None:
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config": config.model_dump(mode="json"),
        "created": datetime.now(timezone.utc).isoformat(),
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "ci_method": "normal approximation, mean +/- z(0.975) * sd / sqrt(n) over replicates",
        **extra,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_champions(path) -> List[Genome]:
    """A single genome file, or every ``champion.json`` below a directory (sorted by path)."""
    path = Path(path)
    if path.is_file():
        return [load_genome(path)]
    files = sorted(path.rglob("champion.json"))
    if not files:
        raise FileNotFoundError(f"no champion.json files under {path}")
    return [load_genome(f) for f in files]


# replicate jobs ---------------------------------------------------------------

def _evolution_config(cfg: ExperimentConfig, seed: int, workers: int, run_dir: Path, target=None):
    return EvolutionConfig(
        population_size=cfg.population_size,
        generations=cfg.generations,
        objectives=cfg.objectives(),
        target=target if target is not None else cfg.target_shape(),
        M=cfg.M,
        N=cfg.N,
        master_seed=seed,
        death_rule=DeathRule(cfg.death_rule),
        synchronous=cfg.synchronous,
        mutation_sigma=cfg.mutation_sigma,
        max_retries=cfg.max_retries,
        workers=workers,
        checkpoint_every=cfg.checkpoint_every,
        checkpoint_dir=run_dir / "checkpoints",
    )


def _run_replicate(job: dict) -> dict:
    cfg = ExperimentConfig(**job["config"])
    run_dir = Path(job["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.master_seed + job["replicate"]
    ecfg = _evolution_config(cfg, seed, job["workers"], run_dir)
    seeds = [Genome.from_dict(d) for d in job["seeds"]] if job["seeds"] else None
    result = evolve(ecfg, initial=seeds, resume_from=job.get("resume_from"))
    (run_dir / "log.csv").write_text(format_log(result.log))
    save_genome(result.champion.genome, run_dir / "champion.json")
    objs = list(result.champion.objectives) + [None, None]
    return {
        "variant": cfg.label,
        "k": cfg.k,
        "replicate": job["replicate"],
        "seed": seed,
        "champion_id": result.champion.id,
        "champion_age": result.champion.age,
        "loss": result.champion.loss,
        "objective_1": objs[0],
        "objective_2": objs[1],
        "best_ever_loss": result.best_ever.loss,
    }


def _run_jobs(jobs: List[dict], workers: int) -> List[dict]:
    """Run replicate jobs, concurrently when there are several; output order follows ``jobs``."""
    if workers > 1 and len(jobs) > 1:
        for job in jobs:
            job["workers"] = 1
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            rows = []
            for job, row in zip(jobs, pool.map(_run_replicate, jobs)):
                logger.info("finished %s", job["run_dir"])
                rows.append(row)
            return rows
    rows = []
    for job in jobs:
        job["workers"] = workers
        rows.append(_run_replicate(job))
        logger.info("finished %s", job["run_dir"])
    return rows


def _replicate_jobs(cfg: ExperimentConfig, out_dir: Path, seeds: Optional[List[Genome]]) -> List[dict]:
    seed_dicts = [g.to_dict() for g in seeds] if seeds else None
    return [
        {
            "config": cfg.model_dump(mode="json"),
            "replicate": r,
            "run_dir": str(out_dir / f"run_{r:03d}"),
            "seeds": seed_dicts,
        }
        for r in range(cfg.replicates)
    ]


def cmd_evolve(cfg: ExperimentConfig, workers: Optional[int] = None, out_dir=None) -> Path:
    """Independent replicates with seeds ``master_seed + r``."""
    workers = workers or default_workers()
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.target_shape()  # fail early on a bad target
    seeds = load_champions(cfg.seed_population_path) if cfg.seed_population_path else None
    write_manifest(out_dir, cfg)
    rows = _run_jobs(_replicate_jobs(cfg, out_dir, seeds), workers)
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
    return out_dir


def cmd_resume(run_dir) -> dict:
    """Continue one replicate from its latest checkpoint and rewrite its log and champion."""
    run_dir = Path(run_dir)
    checkpoints = sorted((run_dir / "checkpoints").glob("checkpoint_*.json"))
    if not checkpoints:
        raise FileNotFoundError(f"no checkpoints in {run_dir / 'checkpoints'}")
    manifest = _find_manifest(run_dir.parent, run_dir.parent)
    if manifest is None:
        raise FileNotFoundError(f"no manifest.json next to {run_dir}")
    replicate = int(run_dir.name.rsplit("_", 1)[1])
    job = {
        "config": manifest["config"],
        "replicate": replicate,
        "run_dir": str(run_dir),
        "seeds": None,
        "workers": default_workers(),
        "resume_from": str(checkpoints[-1]),
    }
    return _run_replicate(job)


# k sweep ----------------------------------------------------------------------------

TABLE_COLUMNS = (
    "variant", "k", "n", "mean_loss", "ci_low", "ci_high", "median_loss",
    "p_vs_bi_loss", "p_vs_tri_loss", "alpha", "sig_vs_bi_loss", "sig_vs_tri_loss",
)


def sweep_variants(base: ExperimentConfig, k_list: Sequence[int]) -> List[ExperimentConfig]:
    bad = [k for k in k_list if not 1 <= k <= base.N - 1]
    if bad:
        raise InvalidHorizonError(f"k values {bad} outside [1, {base.N - 1}]")
    data = base.model_dump(mode="json")
    data.pop("k", None)
    crop = data.pop("crop_last", None)
    variants = [make_config({**data, "variant": "bi_loss"}), make_config({**data, "variant": "tri_loss"})]
    variants += [make_config({**data, "variant": "tri_loss_empowerment", "k": k, "crop_last": crop}) for k in k_list]
    return variants


def sweep_table(rows: Sequence[dict], n_comparisons: int, alpha: float = 0.05) -> List[dict]:
    by_variant = {}
    for row in rows:
        by_variant.setdefault(row["variant"], []).append(row)
    level = alpha / n_comparisons
    controls = {c: [float(r["loss"]) for r in by_variant.get(c, [])] for c in ("bi_loss", "tri_loss")}
    table = []
    for variant, vrows in by_variant.items():
        losses = [float(r["loss"]) for r in vrows]
        mean, lo, hi = confidence_interval(losses)
        entry = {
            "variant": variant, "k": vrows[0]["k"], "n": len(losses),
            "mean_loss": mean, "ci_low": lo, "ci_high": hi,
            "median_loss": float(np.median(losses)), "alpha": level,
        }
        for c, ref in controls.items():
            if variant in ("bi_loss", "tri_loss") or len(losses) < 3 or len(ref) < 3:
                continue
            p = rank_sum_test(losses, ref).pvalue
            entry[f"p_vs_{c}"] = p
            entry[f"sig_vs_{c}"] = int(p < level)
        table.append(entry)
    return table


def cmd_sweep_k(base: ExperimentConfig, k_list: Sequence[int], workers: Optional[int] = None, out_dir=None) -> Path:
    """Every k plus both loss-only controls; one table row per variant."""
    workers = workers or default_workers()
    variants = sweep_variants(base, k_list)
    out_dir = Path(out_dir or base.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base.target_shape()
    n_comparisons = 2 * len(k_list)
    write_manifest(out_dir, base, k_list=list(k_list), bonferroni_comparisons=n_comparisons)
    seeds = load_champions(base.seed_population_path) if base.seed_population_path else None
    jobs = []
    for v in variants:
        vdir = out_dir / v.label
        vdir.mkdir(parents=True, exist_ok=True)
        write_manifest(vdir, v)
        jobs += _replicate_jobs(v, vdir, seeds)
    rows = _run_jobs(jobs, workers)
    for v in variants:
        write_csv(out_dir / v.label / "summary.csv", SUMMARY_COLUMNS, [r for r in rows if r["variant"] == v.label])
    write_csv(out_dir / "sweep_summary.csv", SUMMARY_COLUMNS, rows)
    write_csv(out_dir / "sweep_table.csv", TABLE_COLUMNS, sweep_table(rows, n_comparisons))
    return out_dir


# fine-tuning ---------------------------------------------------------------------------

FINETUNE_VARIANTS = ("bi_loss", "tri_loss_empowerment")


def cmd_finetune(
    champions_dir,
    new_target: str,
    variant: str,
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    out_dir=None,
    k: Optional[int] = None,
) -> Path:
    """Seed populations with pre-evolved champions and evolve them on ``new_target``."""
    if variant not in FINETUNE_VARIANTS:
        raise ConfigError(f"variant: fine-tuning supports {FINETUNE_VARIANTS}, got {variant!r}")
    champions = load_champions(champions_dir)
    data = cfg.model_dump(mode="json")
    data.update(variant=variant, target=new_target, seed_population_path=str(champions_dir))
    if variant == "tri_loss_empowerment":
        data["k"] = k or cfg.k or 1
    else:
        data["k"] = data["crop_last"] = None
    if "generations" not in cfg.model_fields_set:
        data["generations"] = 500
    ft = make_config(data)
    target = ft.target_shape()
    if target.M != ft.M:
        raise ConfigError(f"target: {target.M}x{target.M} target on a {ft.M}x{ft.M} grid")

    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, ft, champions_dir=str(champions_dir))

    seed_rows = []
    for i, g in enumerate(champions):
        trace = rollout(g, ft.M, ft.N, death_rule=ft.death_rule, synchronous=ft.synchronous)
        seed_rows.append({"index": i, "genome_id": g.id, "loss": loss(trace, target, 0, ft.N)})
    write_csv(out_dir / "seeds.csv", ("index", "genome_id", "loss"), seed_rows)

    rows = _run_jobs(_replicate_jobs(ft, out_dir, champions), workers or default_workers())
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
    return out_dir


# simulation -----------------------------------------------------------------------------

def cmd_simulate(
    genome_path,
    M: int = 25,
    N: int = 50,
    target: Optional[str] = None,
    frames_dir=None,
    trace_path=None,
    death_rule=DeathRule.OVERWRITE_ALWAYS,
    synchronous: bool = False,
    stream=None,
) -> dict:
    """Single rollout with optional frame and NDJSON trace export; prints the final grid."""
    genome = load_genome(genome_path)
    trace = rollout(genome, M, N, death_rule=death_rule, synchronous=synchronous)
    shape = parse_target(target, M) if target else None
    written = {}
    if frames_dir is not None:
        written["frames"] = write_frames(trace, frames_dir)
    if trace_path is not None:
        per_step = loss_series(trace.alive, shape.mask) if shape is not None else None
        lines = []
        for n in range(1, N + 1):
            executed = trace.executed[n - 1]
            record = {
                "step": n,
                "alive": int(trace.alive[n].sum()),
                "actions": {str(k): v for k, v in sorted(Counter(trace.actions[n - 1][executed].tolist()).items())},
                "sensors": {str(k): v for k, v in sorted(Counter(trace.sensors[n - 1][executed].tolist()).items())},
            }
            if per_step is not None:
                record["loss"] = float(per_step[n])
            lines.append(json.dumps(record))
        Path(trace_path).write_text("\n".join(lines) + "\n")
        written["trace"] = Path(trace_path)
    if stream is not None:
        print(render_ascii(trace.grid(N)), file=stream)
    written["rollout"] = trace
    return written


# analysis ---------------------------------------------------------------------------------

def _find_manifest(start: Path, root: Path) -> Optional[dict]:
    for d in [start, *start.parents]:
        m = d / "manifest.json"
        if m.exists():
            return json.loads(m.read_text())
        if d == root:
            break
    return None


def champion_metrics(genome: Genome, cfg: ExperimentConfig, target: TargetShape, acfg: AnalysisConfig) -> dict:
    N = cfg.N
    extra = N if acfg.extra_steps is None else acfg.extra_steps
    horizon = max(N + extra, 2 * N)
    trace = rollout(genome, cfg.M, horizon, death_rule=cfg.death_rule, synchronous=cfg.synchronous)
    series = loss_series(trace.alive, target.mask)
    short = trace_prefix(trace, N)
    out = {
        "final_loss": loss(short, target, 0, N),
        "instability": hamming(trace.alive[2 * N], trace.alive[N]),
        "transiency": transiency(short),
        "transiency_total": transiency(short, total=True),
        "connected_components": float(connected_components(trace.alive[N].astype(bool), acfg.connectivity)),
        "boundary_proportion": boundary_proportion(trace.alive[N].astype(bool)),
        "empowerment_k1": empowerment(short, 1),
    }
    if extra >= 1:
        pts = [(n, float(series[n])) for n in range(1, N + extra + 1)]
        out["stability_slope"] = stability_slope(pts, (N + 1, N + extra)) if extra >= 2 else 0.0
    if cfg.k is not None and cfg.k != 1:
        out[f"empowerment_k{cfg.k}"] = empowerment(short, cfg.k, cfg.crop_last)
    return out


def trace_prefix(trace: RolloutTrace, N: int) -> RolloutTrace:
    """The first N updates of a longer trace."""
    return RolloutTrace(trace.actions[:N], trace.sensors[:N], trace.alive[: N + 1], trace.signal[: N + 1])


def cmd_analyze(champions_dir, acfg: Optional[AnalysisConfig] = None, out_dir=None) -> Path:
    """Metric battery for every champion below ``champions_dir`` plus a pairwise rank-sum report."""
    acfg = acfg or AnalysisConfig()
    root = Path(champions_dir)
    out_dir = Path(out_dir or root)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in sorted(root.rglob("champion.json")):
        manifest = _find_manifest(path.parent, root)
        if manifest is None:
            raise FileNotFoundError(f"no manifest.json above {path}")
        cfg = make_config(manifest["config"])
        target = cfg.target_shape()
        run_id = path.parent.relative_to(root).as_posix()
        for metric, value in champion_metrics(load_genome(path), cfg, target, acfg).items():
            rows.append({"run_id": run_id, "variant": cfg.label, "k": cfg.k, "metric": metric, "value": float(value)})
    write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, rows)

    grouped = {}
    for r in rows:
        grouped.setdefault(r["metric"], {}).setdefault(r["variant"], []).append(r["value"])
    report = []
    for metric, by_variant in grouped.items():
        pairs = list(itertools.combinations(sorted(by_variant), 2))
        level = acfg.alpha / (acfg.comparisons or max(1, len(pairs)))
        for a, b in pairs:
            xa, xb = by_variant[a], by_variant[b]
            entry = {"metric": metric, "variant_a": a, "variant_b": b, "n_a": len(xa), "n_b": len(xb), "alpha": level}
            if len(xa) >= 3 and len(xb) >= 3:
                res = rank_sum_test(xa, xb)
                entry.update(u=res.u, p=res.pvalue, significant=int(res.pvalue < level))
            report.append(entry)
    write_csv(out_dir / "ranksum.csv",
              ("metric", "variant_a", "variant_b", "n_a", "n_b", "u", "p", "alpha", "significant"), report)
    return out_dir
