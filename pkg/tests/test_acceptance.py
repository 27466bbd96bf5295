"""Acceptance gate: one test per criterion, each timed against its budget.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary (and inline under ``-s``).
"""

import time
from dataclasses import replace

import numpy as np

from retrosim.bias import ChoicePolicy
from retrosim.harness import RunConfig, emit_report, run_simulation
from retrosim.histories import (
    Is,
    Same,
    conditional_rate,
    enumerate_ensemble,
    hit_gap,
    hit_rate,
    no_signaling_gap,
    sequential_equivalence_distance,
)
from retrosim.linalg import Projector, random_density_matrix, random_projector, tensor_product
from retrosim.measurement import OutcomeFamily, born_probability, collapse, conditional_probability, family_probabilities
from retrosim.protocols import (
    avoidance_protocol,
    bem_protocols,
    detection_protocol,
    falsification_variant,
    habituation_protocol,
    priming_protocol,
    recall_protocol,
)

RESULTS: dict[int, tuple[bool, str]] = {}
ORTHODOX = ChoicePolicy.orthodox()


def record(number, title, ok, elapsed, budget, detail=""):
    within = budget is None or elapsed < budget
    passed = bool(ok and within)
    timing = f"{elapsed:.2f}s" + (f" < {budget:g}s" if budget is not None else "")
    if not within:
        timing += " OVER BUDGET"
    line = f"{title}: {detail} [{timing}]" if detail else f"{title} [{timing}]"
    RESULTS[number] = (passed, line)
    print(f"\ncriterion {number:2d} {'PASS' if passed else 'FAIL'}  {line}")
    assert ok, line
    assert within, line


def rate(spec, beta):
    return hit_rate(spec, enumerate_ensemble(spec, ChoicePolicy.biased(beta)))


def test_criterion_01_measurement_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_trace = worst_born = worst_family = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 9))
        rho, p = random_density_matrix(d, rng), random_projector(d, rng, rank=int(rng.integers(1, d)))
        after, _ = collapse(rho, p)
        worst_trace = max(worst_trace, abs(np.trace(after.data).real - 1))
        worst_born = max(worst_born, abs(np.trace(p.data @ rho.data @ p.data).real - born_probability(rho, p)))
        worst_family = max(worst_family, abs(family_probabilities(rho, OutcomeFamily.binary(p)).sum() - 1))
    ok = worst_trace < 1e-12 and worst_born < 1e-12 and worst_family < 1e-9
    detail = f"trace err {worst_trace:.1e}, sandwich err {worst_born:.1e}, family err {worst_family:.1e}"
    record(1, "measurement axioms", ok, time.perf_counter() - t0, 1.0, detail)


def test_criterion_02_independence_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst, n = 0.0, 0
    while n < 100:
        da, db = (int(x) for x in rng.integers(2, 5, size=2))
        rho_a, rho_b = random_density_matrix(da, rng), random_density_matrix(db, rng)
        pa, qb = random_projector(da, rng), random_projector(db, rng)
        if born_probability(rho_b, qb) < 1e-6:
            continue
        rho = tensor_product(rho_a, rho_b)
        p = Projector(np.kron(pa.data, np.eye(db)))
        q = Projector(np.kron(np.eye(da), qb.data))
        worst = max(worst, abs(conditional_probability(rho, p, q) - born_probability(rho, p)))
        n += 1
    record(2, "independence identity", worst < 1e-9, time.perf_counter() - t0, 1.0, f"max |cond - uncond| {worst:.1e}")


def test_criterion_03_orthodox_no_signaling():
    t0 = time.perf_counter()
    gaps = {}
    for name, spec in bem_protocols().items():
        gaps[name] = max(no_signaling_gap(spec, spec.early_variable, ORTHODOX), hit_gap(spec, ORTHODOX))
    worst = max(gaps.values())
    record(3, "orthodox no-signaling", len(gaps) == 9 and worst < 1e-12, time.perf_counter() - t0, 5.0, f"max gap {worst:.1e} over {len(gaps)} protocols")


def test_criterion_04_biased_detection():
    t0 = time.perf_counter()
    spec = detection_protocol()
    exact_err = 0.0
    coverage = {}
    for beta in (0.05, 0.1, 0.2, 0.5):
        ens = enumerate_ensemble(spec, ChoicePolicy.biased(beta))
        exact_err = max(
            exact_err,
            abs(conditional_rate(ens, Is("S", "E"), Same("P", "T")) - (1 + beta) / (2 + beta)),
            abs(conditional_rate(ens, Is("S", "N"), Same("P", "T")) - 0.5),
        )
        base = RunConfig(beta=beta, trials=200_000, confidence=0.99)
        covered = 0
        for seed in range(100):
            r = run_simulation(replace(base, master_seed=seed))
            covered += r.ci_low <= (1 + beta) / (2 + beta) <= r.ci_high
        coverage[beta] = covered
    ok = exact_err < 1e-12 and min(coverage.values()) >= 95
    cov = ", ".join(f"beta={b}: {c}/100" for b, c in coverage.items())
    record(4, "biased detection", ok, time.perf_counter() - t0, 30.0, f"exact err {exact_err:.1e}; coverage {cov}")


def test_criterion_05_avoidance_ordering():
    t0 = time.perf_counter()
    spec = avoidance_protocol()
    err = max(abs(rate(spec, b) - (1 + b) / 2) for b in (0.0, 0.1, 0.3))
    grid = [rate(spec, b) for b in np.linspace(0.0, 1.0, 21)]
    increasing = bool(np.all(np.diff(grid) > 0))
    record(5, "avoidance ordering", err < 1e-12 and increasing, time.perf_counter() - t0, 1.0, f"err {err:.1e}, increasing={increasing}")


def test_criterion_06_habituation_sign_reversal():
    t0 = time.perf_counter()
    negative = rate(habituation_protocol(-0.8, 0.5), 0.25)
    erotic = rate(habituation_protocol(0.8, 0.5), 0.25)
    neutral = rate(habituation_protocol(0.0, 0.5), 0.25)
    err = max(abs(negative - 0.9 / 1.7), abs(erotic - 1.1 / 2.3), abs(neutral - 0.5))
    ok = err < 1e-9 and negative > 0.5 > erotic
    detail = f"v0=-0.8: {negative:.6f}, v0=+0.8: {erotic:.6f}, v0=0: {neutral:.6f}"
    record(6, "habituation sign reversal", ok, time.perf_counter() - t0, 1.0, detail)


def test_criterion_07_recall_over_representation():
    t0 = time.perf_counter()
    spec = recall_protocol(4, 2, 2)

    def mean_overlap(beta):
        ens = enumerate_ensemble(spec, ChoicePolicy.biased(beta))
        return ens.expectation(lambda h: int(h["F"].split("=")[1]))

    biased, null = mean_overlap(0.3), mean_overlap(0.0)
    ok = abs(biased - 1.1) < 1e-12 and abs(null - 1.0) < 1e-12
    record(7, "recall over-representation", ok, time.perf_counter() - t0, 1.0, f"E[overlap] {biased:.12f} vs null {null:.12f}")


def test_criterion_08_priming_sign():
    t0 = time.perf_counter()
    retro, normal = priming_protocol("retro"), priming_protocol("normal")
    v_c = retro.params["congruent_valence"]
    delta = retro.reaction_time.congruency_delta_ms

    def mean_rt(spec, policy):
        return enumerate_ensemble(spec, policy).expectation(spec.reaction_time_ms)

    orthodox_rt = mean_rt(retro, ORTHODOX)
    drop_err = 0.0
    below = True
    for beta in (0.05, 0.2, 0.5):
        biased_rt = mean_rt(retro, ChoicePolicy.biased(beta))
        below &= biased_rt < orthodox_rt
        drop_err = max(drop_err, abs((orthodox_rt - biased_rt) - beta * v_c * delta / 2))
    equal_at_zero = mean_rt(retro, ChoicePolicy.biased(0.0)) == orthodox_rt
    mode_err = max(abs(rate(normal, b) - rate(retro, b)) for b in (0.05, 0.2, 0.5))
    ok = below and drop_err < 1e-9 and equal_at_zero and mode_err < 1e-12
    detail = f"drop err {drop_err:.1e}, beta=0 equal={equal_at_zero}, retro/normal err {mode_err:.1e}"
    record(8, "priming sign", ok, time.perf_counter() - t0, None, detail)


def test_criterion_09_falsification():
    t0 = time.perf_counter()
    worst = 0.0
    for spec in bem_protocols().values():
        ortho = enumerate_ensemble(spec, ORTHODOX).weights
        variant = falsification_variant(spec)
        for beta in (0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 1.0):
            worst = max(worst, float(np.max(np.abs(enumerate_ensemble(variant, ChoicePolicy.biased(beta)).weights - ortho))))
    record(9, "falsification restores orthodox", worst < 1e-12, time.perf_counter() - t0, None, f"max weight diff {worst:.1e}")


def test_criterion_10_equivalence_oracle():
    t0 = time.perf_counter()
    dists = {spec.name: sequential_equivalence_distance(spec) for spec in (detection_protocol(), avoidance_protocol())}
    worst = max(dists.values())
    record(10, "sequential equivalence", worst < 1e-9, time.perf_counter() - t0, None, f"max TV {worst:.1e}")


def test_criterion_11_harness_determinism():
    t0 = time.perf_counter()
    config = RunConfig(protocol="detection", beta=0.2, trials=300_000, master_seed=2024)
    a = emit_report(run_simulation(replace(config, workers=1, chunk_size=65_536)))
    b = emit_report(run_simulation(replace(config, workers=8, chunk_size=7_919)))
    record(11, "harness determinism", a == b, time.perf_counter() - t0, None, "bit-identical CSV" if a == b else "reports differ")
