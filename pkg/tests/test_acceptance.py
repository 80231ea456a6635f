"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""
import contextlib
import time
import warnings

import numpy as np
import pytest

from empnca import harness
from empnca.config import load_config, make_config
from empnca.evolution import (
    EvolutionConfig,
    dominates,
    evolve,
)
from empnca.metrics import (
    boundary_proportion,
    connected_components,
    instability,
    rank_sum_test,
    transiency,
)
from empnca.nca import DeathRule, Genome, RolloutTrace, load_genome, rollout, save_genome
from empnca.objectives import Loss, build_pairs, loss, mutual_information
from empnca.shapes import load_target, save_target, square_target, triangle_target

from conftest import ACCEPTANCE_RESULTS, make_genome
from oracles import entropy_bits, mi_bruteforce, u_by_pairs

SQUARE = square_target(25, 12)


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"[criterion {number:2d}] FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0][:160]}"
        ACCEPTANCE_RESULTS[number] = line
        print(line)
        raise
    status = detail.pop("status", "PASS")
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"[criterion {number:2d}] {status}  {title} ({time.perf_counter() - start:.1f}s{', ' + extra if extra else ''})"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def test_criterion_01_mi_oracle_equivalence():
    with criterion(1, "MI matches brute-force histogram on 100 pair sets") as d:
        rng = np.random.default_rng(1)
        sets = [rng.integers(0, 256, (int(rng.integers(10, 10_001)), 2)) for _ in range(100)]
        start = time.perf_counter()
        fast = [mutual_information(p) for p in sets]
        elapsed = time.perf_counter() - start
        worst = max(abs(f - mi_bruteforce(p)) for f, p in zip(fast, sets))
        d["max_abs_err"] = f"{worst:.2e}"
        d["mi_runtime_s"] = f"{elapsed:.3f}"
        assert worst < 1e-9
        assert elapsed < 10


def test_criterion_02_mi_bounds():
    with criterion(2, "0 <= I <= min(H(A),H(S)) <= 8 and symmetry on 1000 pair sets") as d:
        rng = np.random.default_rng(2)
        worst_sym = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 5000))
            alpha = int(rng.integers(1, 257))
            pairs = rng.integers(0, alpha, (n, 2))
            if rng.random() < 0.3:
                # correlated pairs exercise the upper bound
                pairs[:, 1] = (pairs[:, 0] + rng.integers(0, 3, n)) % alpha
            mi = mutual_information(pairs)
            h = min(entropy_bits(pairs[:, 0].tolist()), entropy_bits(pairs[:, 1].tolist()))
            assert 0.0 <= mi <= h + 1e-9
            assert h <= 8.0 + 1e-12
            worst_sym = max(worst_sym, abs(mi - mutual_information(pairs[:, ::-1])))
        d["max_sym_err"] = f"{worst_sym:.1e}"
        assert worst_sym <= 1e-12


def test_criterion_03_pair_counts():
    with criterion(3, "pair counts 49 (k=1), 5 (k=45), 5 (k=1, crop_last=5)") as d:
        trace = rollout(Genome.zeros(), 25, 50)
        counts = (len(build_pairs(trace, 1)), len(build_pairs(trace, 45)), len(build_pairs(trace, 1, crop_last=5)))
        d["counts"] = counts
        assert counts == (49, 5, 5)


def test_criterion_04_loss_anchors():
    with criterion(4, "loss anchors 0.2304 / 0.2288 / 0") as d:
        dead = np.zeros((51, 25, 25), np.uint8)
        blank = np.full((50, 25, 25), -1, np.int16)
        all_dead = loss(RolloutTrace(blank, blank, dead, dead), SQUARE, 0, 50)
        frozen = loss(rollout(Genome.zeros(), 25, 50), SQUARE, 0, 50)
        held = np.broadcast_to(SQUARE.mask, (51, 25, 25)).astype(np.uint8)
        equal = loss(RolloutTrace(blank, blank, held, held), SQUARE, 0, 50)
        d["values"] = (all_dead, frozen, equal)
        assert abs(all_dead - 0.2304) <= 1e-12
        assert abs(frozen - 0.2288) <= 1e-12
        assert abs(equal) <= 1e-12


def test_criterion_05_determinism_under_parallelism(tmp_path):
    with criterion(5, "1 vs 8 workers give byte-identical logs and champions (P=20, G=20)") as d:
        start = time.perf_counter()
        for variant, reps in (("bi_loss", 1), ("tri_loss_empowerment", 1), ("bi_loss", 3)):
            cfg = make_config({"variant": variant, "population_size": 20, "generations": 20, "replicates": reps,
                               "master_seed": 11, **({"k": 1} if variant != "bi_loss" else {})})
            one = harness.cmd_evolve(cfg, workers=1, out_dir=tmp_path / f"{variant}{reps}_w1")
            eight = harness.cmd_evolve(cfg, workers=8, out_dir=tmp_path / f"{variant}{reps}_w8")
            for r in range(reps):
                for name in ("log.csv", "champion.json"):
                    assert (one / f"run_{r:03d}" / name).read_bytes() == (eight / f"run_{r:03d}" / name).read_bytes()
            assert (one / "summary.csv").read_bytes() == (eight / "summary.csv").read_bytes()
        elapsed = time.perf_counter() - start
        d["runs"] = 3
        assert elapsed < 6 * 60  # three 1-vs-8 comparisons, each well under 60 s


def _desk_config(objectives=None, seed=0, **kw):
    return EvolutionConfig(population_size=100, generations=200, objectives=objectives or [Loss(0, 50)],
                           target=SQUARE, M=25, N=50, master_seed=seed, **kw)


def test_criterion_06_afpo_invariants():
    with criterion(6, "AFPO invariants on every generation of a 200-generation desk run") as d:
        config = _desk_config()
        P = config.population_size
        ages = {}
        violations = {"size": 0, "injection": 0, "age": 0, "dominated": 0}
        dominated_pairs = []

        def check(g, before, after, report):
            nonlocal ages
            prev = ages if g > 1 else {ind.id: 0 for ind in before}
            if len(after) != P:
                violations["size"] += 1
            before_ids = set(prev)
            new = [ind for ind in after if ind.id not in before_ids]
            created = len(new) + sum(1 for gid, _ in report.removed if gid not in before_ids)
            # P mutated children plus exactly one random newcomer
            roots = [ind for ind in new if ind.genome.parent_id is None]
            if created != P + 1 or report.newcomer_id in before_ids or any(r.id != report.newcomer_id for r in roots):
                violations["injection"] += 1
            for ind in after:
                if ind.id in prev:
                    expected = prev[ind.id] + 1
                elif ind.id == report.newcomer_id:
                    expected = 1
                else:
                    expected = prev[ind.genome.parent_id] + 1
                if ind.age != expected:
                    violations["age"] += 1
            escaped = {gid for gid, _ in report.escapes}
            bad = sum(
                1 for b in after
                if b.id not in escaped and any(a is not b and dominates(a, b, config.objectives) for a in after)
            )
            if bad and not report.escapes:
                violations["dominated"] += 1
                dominated_pairs.append(bad)
            ages = {ind.id: ind.age for ind in after}

        result = evolve(config, on_generation=check)
        d["generations"] = len(result.log)
        d["escapes"] = len(result.escapes)
        d["violations"] = violations
        if dominated_pairs:
            d["max_dominated_survivors"] = max(dominated_pairs)
        assert len(result.log) == 200
        assert violations["size"] == violations["injection"] == violations["age"] == 0
        assert violations["dominated"] == 0, (
            f"{violations['dominated']} generations kept dominated survivors "
            f"(up to {max(dominated_pairs)} of {P})"
        )


def test_criterion_07_efficacy_floor():
    with criterion(7, "bi-loss desk run beats the frozen-seed loss 0.2288") as d:
        start = time.perf_counter()
        result = evolve(_desk_config(seed=0))
        d["champion_loss"] = result.champion.loss
        assert result.champion.loss < 0.2288
        assert time.perf_counter() - start < 15 * 60


def test_criterion_08_directional_trend(tmp_path):
    with criterion(8, "median loss TriLossEmpowerment(k=1) <= BiLoss, one-sided rank-sum p < 0.1 (trend)") as d:
        base = {"population_size": 100, "generations": 200, "replicates": 10, "master_seed": 0}
        bi = harness.cmd_evolve(make_config({**base, "variant": "bi_loss"}), out_dir=tmp_path / "bi")
        emp = harness.cmd_evolve(make_config({**base, "variant": "tri_loss_empowerment", "k": 1}),
                                 out_dir=tmp_path / "emp")
        bi_loss = [float(r["loss"]) for r in harness.read_csv(bi / "summary.csv")]
        emp_loss = [float(r["loss"]) for r in harness.read_csv(emp / "summary.csv")]
        med_bi, med_emp = float(np.median(bi_loss)), float(np.median(emp_loss))
        p = rank_sum_test(emp_loss, bi_loss, alternative="less").pvalue
        d.update(median_bi=f"{med_bi:.4f}", median_emp=f"{med_emp:.4f}", p_one_sided=f"{p:.3g}")
        if not (med_emp <= med_bi and p < 0.1):
            # trend classification: report, do not abort
            d["status"] = "FAIL (trend, reported only)"
            warnings.warn(f"directional trend not observed: medians {med_emp:.4f} vs {med_bi:.4f}, p={p:.3g}")


def test_criterion_09_metric_correctness():
    with criterion(9, "transiency 0 under LiteralReplicate, instability 0 at fixed points, component/boundary examples") as d:
        for seed in range(100):
            trace = rollout(make_genome(seed), 25, 50, death_rule=DeathRule.LITERAL_REPLICATE)
            assert transiency(trace) == 0.0
        fixed = 0
        for seed in range(200):
            g = make_genome(seed)
            trace = rollout(g, 25, 100)
            if all(np.array_equal(trace.alive[n], trace.alive[50]) for n in range(50, 101)):
                fixed += 1
                assert instability(g, 25, 50) == 0.0
        assert instability(Genome.zeros(), 25, 50) == 0.0
        d["fixed_point_genomes"] = fixed + 1
        diag = np.zeros((5, 5), bool)
        diag[1, 1] = diag[2, 2] = True
        corner = np.zeros((25, 25), bool)
        corner[0, 0] = True
        assert connected_components(square_target(25, 12).mask) == 1
        assert connected_components(np.zeros((25, 25), bool)) == 0
        assert connected_components(diag) == 2
        assert boundary_proportion(square_target(25, 12).mask) == 0.0
        assert boundary_proportion(np.ones((25, 25), bool)) == 0.1536
        assert boundary_proportion(corner) == 1.0


def test_criterion_10_rank_sum_oracle():
    with criterion(10, "U equals pair counting on 200 sample pairs; separated 20-vs-20 p < 1e-6") as d:
        rng = np.random.default_rng(10)
        for _ in range(200):
            a = rng.integers(0, 15, int(rng.integers(3, 40))).astype(float)
            b = rng.integers(0, 15, int(rng.integers(3, 40))).astype(float)
            assert rank_sum_test(a, b).u == u_by_pairs(a, b)
        p = rank_sum_test(range(1, 21), range(101, 121)).pvalue
        d["p_separated"] = f"{p:.2e}"
        assert p < 1e-6


def test_criterion_11_round_trip_persistence(tmp_path):
    with criterion(11, "genome/target files reload bit-identically; manifest replay reproduces summary") as d:
        for seed in range(50):
            g = make_genome(seed, id=seed)
            save_genome(g, tmp_path / "g.json")
            back = load_genome(tmp_path / "g.json")
            assert back.parameters().tobytes() == g.parameters().tobytes()
            assert (back.id, back.parent_id) == (g.id, g.parent_id)
        for shape in (square_target(25, 12), triangle_target(25, 13)):
            for suffix in (".txt", ".pbm"):
                save_target(shape, tmp_path / f"t{suffix}")
                assert load_target(tmp_path / f"t{suffix}").mask.tobytes() == shape.mask.tobytes()
        cfg = make_config({"variant": "tri_loss_empowerment", "k": 3, "population_size": 6, "generations": 3,
                           "replicates": 2, "master_seed": 4})
        first = harness.cmd_evolve(cfg, workers=1, out_dir=tmp_path / "first")
        replay = harness.cmd_evolve(load_config(first / "manifest.json"), workers=1, out_dir=tmp_path / "replay")
        assert (first / "summary.csv").read_bytes() == (replay / "summary.csv").read_bytes()
        d["summary_bytes"] = len((first / "summary.csv").read_bytes())


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
