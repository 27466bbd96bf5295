"""Seeded Monte Carlo runs, beta sweeps, verification and report I/O."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import NormalDist
from typing import Any, Mapping, Sequence

import numpy as np

from . import streams
from .bias import BIASED, ORTHODOX, ChoicePolicy, biased_weights, sample_outcome
from .errors import ConfigError, DegenerateInput, ProtocolMalformed, ZeroProbabilityOutcome
from .histories import (
    DEFAULT_CAP,
    HistoryEnsemble,
    enumerate_ensemble,
    hit_gap,
    hit_rate,
    no_signaling_gap,
    quantum_realization,
    sequential_law,
    total_variation,
)
from .linalg import Projector, random_density_matrix, random_projector, tensor_product
from .measurement import born_probability, branches, collapse, conditional_probability, effective_past, evolve
from .protocols import BUILDERS, VARIANTS, ProtocolSpec, build_protocol, falsification_variant

CSV_COLUMNS = (
    "protocol",
    "policy",
    "beta",
    "trials",
    "hits",
    "rate",
    "ci_low",
    "ci_high",
    "exact_rate",
    "no_signaling_gap",
    "seed",
)
FORMATS = ("csv", "json")


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    protocol: str = "detection"
    params: Mapping[str, Any] = field(default_factory=dict)
    variant: str = "base"
    policy: str = BIASED
    beta: float = 0.2
    trials: int = 10_000
    master_seed: int = 0
    confidence: float = 0.99
    format: str = "csv"
    enumeration_cap: int = DEFAULT_CAP
    workers: int = 1
    chunk_size: int = 1 << 16

    def __post_init__(self):
        if self.protocol not in BUILDERS:
            raise ConfigError(f"protocol: unknown protocol {self.protocol!r}; choose from {sorted(BUILDERS)}")
        if not isinstance(self.params, Mapping):
            raise ConfigError("params: must be an object")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: must be one of {VARIANTS}, got {self.variant!r}")
        if self.policy not in (ORTHODOX, BIASED):
            raise ConfigError(f"policy: must be 'orthodox' or 'biased', got {self.policy!r}")
        if not _is_number(self.beta) or not 0.0 <= float(self.beta) <= 1.0:
            raise ConfigError(f"beta: must lie in [0, 1], got {self.beta!r}")
        if not _is_int(self.trials) or self.trials < 1:
            raise ConfigError(f"trials: must be a positive integer, got {self.trials!r}")
        if not _is_int(self.master_seed) or not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed: must be a 64-bit unsigned integer, got {self.master_seed!r}")
        if not _is_number(self.confidence) or not 0.0 < float(self.confidence) < 1.0:
            raise ConfigError(f"confidence: must lie in (0, 1), got {self.confidence!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format: must be one of {FORMATS}, got {self.format!r}")
        for name in ("enumeration_cap", "workers", "chunk_size"):
            value = getattr(self, name)
            if not _is_int(value) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {value!r}")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "confidence", float(self.confidence))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        if "seed" in data:
            if "master_seed" in data:
                raise ConfigError("give either 'seed' or 'master_seed', not both")
            data["master_seed"] = data.pop("seed")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def choice_policy(self) -> ChoicePolicy:
        if self.policy == ORTHODOX:
            return ChoicePolicy.orthodox()
        return ChoicePolicy.biased(self.beta)

    @property
    def reported_beta(self) -> float:
        return self.beta if self.policy == BIASED else 0.0

    def build(self) -> ProtocolSpec:
        try:
            return build_protocol(self.protocol, self.params, self.variant)
        except DegenerateInput as exc:
            raise ConfigError(f"params: {exc}") from None


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.number)) and not isinstance(x, bool) and math.isfinite(x)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg}", exc.lineno, exc.colno) from None
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- reports -------------------------------------------------------------------

@dataclass(frozen=True)
class TrialReport:
    protocol: str
    policy: str
    beta: float
    trials: int
    hits: int
    rate: float
    ci_low: float
    ci_high: float
    exact_rate: float | None
    no_signaling_gap: float | None
    seed: int

    def __post_init__(self):
        if not 0 <= self.hits <= self.trials:
            raise ValueError("hits must lie in [0, trials]")
        if not self.ci_low <= self.rate <= self.ci_high:
            raise ValueError("rate must lie inside its confidence interval")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def emit_table(rows: Sequence[Mapping[str, Any]], columns: Sequence[str], fmt: str, path: str | Path | None = None) -> str:
    """Render rows as CSV (12 significant digits, LF endings) or JSON."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([{c: row.get(c) for c in columns} for row in rows], indent=2) + "\n"
    else:
        raise ConfigError(f"format: must be one of {FORMATS}, got {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def emit_report(reports: TrialReport | Sequence[TrialReport], fmt: str = "csv", path: str | Path | None = None) -> str:
    if isinstance(reports, TrialReport):
        reports = [reports]
    return emit_table([asdict(r) for r in reports], CSV_COLUMNS, fmt, path)


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


def load_report(path: str | Path) -> list[TrialReport]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON report: {exc.msg}", exc.lineno, exc.colno) from None
        return [TrialReport(**row) for row in rows]
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_COLUMNS:
        raise ConfigError(f"unexpected report header {header}")
    out = []
    for row in reader:
        rec = dict(zip(CSV_COLUMNS, row))
        out.append(
            TrialReport(
                protocol=rec["protocol"],
                policy=rec["policy"],
                beta=float(rec["beta"]),
                trials=int(rec["trials"]),
                hits=int(rec["hits"]),
                rate=float(rec["rate"]),
                ci_low=float(rec["ci_low"]),
                ci_high=float(rec["ci_high"]),
                exact_rate=_parse_float(rec["exact_rate"]),
                no_signaling_gap=_parse_float(rec["no_signaling_gap"]),
                seed=int(rec["seed"]),
            )
        )
    return out


# -- statistics ----------------------------------------------------------------

def wilson_interval(hits: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if not _is_int(trials) or trials < 1:
        raise ConfigError(f"trials must be a positive integer, got {trials!r}")
    if not _is_int(hits) or not 0 <= hits <= trials:
        raise ConfigError(f"hits must lie in [0, trials], got {hits!r}")
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence!r}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    n = float(trials)
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == trials else min(1.0, center + half)
    return lo, hi


# -- simulation ----------------------------------------------------------------

def _run_chunks(count_hits, trials: int, chunk_size: int, workers: int) -> int:
    parts = streams.chunks(trials, chunk_size)
    if workers <= 1 or len(parts) == 1:
        return sum(count_hits(start, n) for start, n in parts)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda part: count_hits(*part), parts))


def _ensemble_counter(protocol: ProtocolSpec, ensemble: HistoryEnsemble, seed: int):
    conditioned = ensemble.restrict(protocol.hit_condition)
    cdf = np.cumsum(conditioned.weights)
    last = int(np.flatnonzero(conditioned.weights)[-1])
    mask = np.array([all(p(h) for p in protocol.hit_event) for h in conditioned.histories], dtype=np.int64)

    def count(start: int, n: int) -> int:
        u = streams.trial_uniforms(seed, start, n)[:, 0]
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), last)
        return int(mask[idx].sum())

    return count


def _tree_counter(protocol: ProtocolSpec, seed: int):
    """Orthodox sequential sampling: one inverse-CDF draw per event along the path."""
    if protocol.hit_condition:
        raise ProtocolMalformed("sequential fallback sampling does not support conditioned hit statistics")
    depth = len(protocol.variables)

    def count(start: int, n: int) -> int:
        draws = streams.trial_uniforms(seed, start, n, depth)
        hits = 0
        for row in draws:
            node, path = protocol.root, {}
            for u in row:
                i = sample_outcome(node.branch_probabilities, float(u))
                path[node.variable] = node.outcomes[i]
                if not node.children:
                    break
                node = node.children[i]
            hits += all(p(path) for p in protocol.hit_event)
        return hits

    return count


def _recall_counter(params: Mapping[str, Any], seed: int):
    """Orthodox recall sampling without building the tree: uniform random subsets."""
    n_words = int(params.get("n_words", 4))
    n_recall = int(params.get("n_recall", 2))
    n_targets = int(params.get("n_targets", 2))
    threshold = n_recall // 2 + 1

    def count(start: int, n: int) -> int:
        u = streams.trial_uniforms(seed, start, n, 2 * n_words)
        recalled = np.argsort(u[:, :n_words], axis=1)[:, :n_recall]
        targets = np.argsort(u[:, n_words:], axis=1)[:, :n_targets]
        is_target = np.zeros((n, n_words), dtype=bool)
        np.put_along_axis(is_target, targets, True, axis=1)
        overlap = np.take_along_axis(is_target, recalled, axis=1).sum(axis=1)
        return int(np.count_nonzero(overlap >= threshold))

    return count


def run_simulation(config: RunConfig, workers: int | None = None) -> TrialReport:
    """Monte Carlo estimate of the protocol's hit rate, alongside exact values.

    Histories are drawn from the exact ensemble conditioned on the protocol's
    hit condition.  Above the enumeration cap only orthodox runs are
    possible, by sequential sampling.
    """
    workers = config.workers if workers is None else workers
    policy = config.choice_policy()
    orthodox_run = policy.effective_beta == 0.0
    exact = gap = None
    try:
        protocol = config.build()
    except ProtocolMalformed:
        if not (orthodox_run and config.protocol == "recall"):
            raise
        counter = _recall_counter(config.params, config.master_seed)
        name = f"recall_{config.variant}" if config.variant != "base" else "recall"
    else:
        name = protocol.name
        try:
            ensemble = enumerate_ensemble(protocol, policy, config.enumeration_cap)
        except ProtocolMalformed:
            if not orthodox_run:
                raise
            counter = _tree_counter(protocol, config.master_seed)
        else:
            counter = _ensemble_counter(protocol, ensemble, config.master_seed)
            exact = hit_rate(protocol, ensemble)
            try:
                gap = hit_gap(protocol, policy, cap=None)
            except ProtocolMalformed:
                gap = None  # the hit statistic is the final experience itself
    hits = _run_chunks(counter, config.trials, config.chunk_size, workers)
    lo, hi = wilson_interval(hits, config.trials, config.confidence)
    return TrialReport(
        protocol=name,
        policy=config.policy,
        beta=config.reported_beta,
        trials=config.trials,
        hits=hits,
        rate=hits / config.trials,
        ci_low=lo,
        ci_high=hi,
        exact_rate=exact,
        no_signaling_gap=gap,
        seed=config.master_seed,
    )


def sweep_beta(config: RunConfig, betas: Sequence[float], workers: int | None = None) -> list[TrialReport]:
    """One biased run per beta, all on the same master seed."""
    reports = []
    for beta in betas:
        reports.append(run_simulation(replace(config, policy=BIASED, beta=beta), workers))
    return reports


def enumerate_table(config: RunConfig) -> tuple[list[dict[str, Any]], list[str]]:
    """Exact ensemble as table rows: one per history."""
    protocol = config.build()
    ensemble = enumerate_ensemble(protocol, config.choice_policy(), config.enumeration_cap)
    columns = list(protocol.variables) + ["born_weight", "weight"]
    rows = [{**h.as_dict(), "born_weight": h.born_weight, "weight": h.weight} for h in ensemble]
    return rows, columns


# -- verification --------------------------------------------------------------

PASS = "pass"
FAIL = "fail"
EXPECTED_VIOLATION = "expected_violation"
SKIPPED = "skipped"

CHECK_COLUMNS = ("check", "status", "value", "tolerance", "detail")


@dataclass(frozen=True)
class Check:
    check: str
    status: str
    value: float | None
    tolerance: float | None
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    protocol: str
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def rows(self) -> list[dict[str, Any]]:
        return [asdict(c) for c in self.checks]


def _bound(name: str, value: float, tol: float, detail: str = "") -> Check:
    return Check(name, PASS if value < tol else FAIL, float(value), tol, detail)


def verify(config: RunConfig, samples: int = 100) -> VerificationReport:
    """Run every invariant suite against the configured protocol."""
    protocol = config.build()
    policy = config.choice_policy()
    orthodox = ChoicePolicy.orthodox()
    rng = np.random.default_rng(config.master_seed)
    cap = config.enumeration_cap
    checks: list[Check] = []

    # measurement identities on random states
    worst_born = worst_trace = 0.0
    for _ in range(samples):
        d = int(rng.integers(2, 9))
        rho = random_density_matrix(d, rng)
        p = random_projector(d, rng)
        worst_born = max(worst_born, abs(born_probability(rho, p) - np.trace(p.data @ rho.data @ p.data).real))
        try:
            after, _ = collapse(rho, p)
        except ZeroProbabilityOutcome:
            continue
        worst_trace = max(worst_trace, abs(np.trace(after.data).real - 1.0))
    checks.append(_bound("born_trace_identity", worst_born, 1e-12, "Tr(PrhoP) = Tr(Prho)"))
    checks.append(_bound("collapse_normalization", worst_trace, 1e-12))

    worst_indep = 0.0
    for _ in range(samples):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        rho = tensor_product(random_density_matrix(da, rng), random_density_matrix(db, rng))
        pa = random_projector(da, rng)
        qb = random_projector(db, rng)
        p = Projector(np.kron(pa.data, np.eye(db)))
        q = Projector(np.kron(np.eye(da), qb.data))
        if born_probability(rho, q) <= 1e-6:
            continue
        worst_indep = max(worst_indep, abs(conditional_probability(rho, p, q) - born_probability(rho, p)))
    checks.append(_bound("independence_identity", worst_indep, 1e-9, "Tr(PQrho)/Tr(Qrho) = Tr(Prho) for product states"))

    # histories
    ensemble = enumerate_ensemble(protocol, policy, cap)
    checks.append(_bound("ensemble_normalization", abs(ensemble.weights.sum() - 1.0), 1e-12))
    ortho = enumerate_ensemble(protocol, orthodox, cap)
    zero = enumerate_ensemble(protocol, ChoicePolicy.biased(0.0), cap)
    checks.append(_bound("beta0_equivalence", float(np.max(np.abs(ortho.weights - zero.weights))), 1e-12))

    born = np.array([h.born_weight for h in ensemble])
    valences = [protocol.valence_function(h.as_dict()) for h in ensemble]
    q = biased_weights(born, valences, policy.effective_beta)
    bad = float(np.any(q < 0) or np.any((born == 0) & (q != 0)))
    checks.append(_bound("bias_probability_vector", max(abs(q.sum() - 1.0), bad), 1e-12))

    try:
        dist = total_variation(ortho.as_dict(), sequential_law(protocol))
        checks.append(_bound("sequential_equivalence", dist, 1e-9, "path products vs sequential collapse"))
    except ProtocolMalformed as exc:
        checks.append(Check("sequential_equivalence", SKIPPED, None, 1e-9, str(exc)))

    try:
        ortho_gap = max(
            hit_gap(protocol, orthodox, cap),
            no_signaling_gap(protocol, protocol.early_variable, orthodox, cap=cap),
        )
        gap = hit_gap(protocol, policy, cap)
    except ProtocolMalformed as exc:
        for name in ("orthodox_no_signaling", "configured_no_signaling"):
            checks.append(Check(name, SKIPPED, None, 1e-12, str(exc)))
    else:
        checks.append(_bound("orthodox_no_signaling", ortho_gap, 1e-12, "R + R' = I cancellation"))
        neutral = all(v == 0.0 for v in valences)
        if policy.effective_beta == 0.0 or neutral:
            checks.append(_bound("configured_no_signaling", gap, 1e-12))
        else:
            status = EXPECTED_VIOLATION if gap > 1e-12 else PASS
            detail = f"biased policy shifts {protocol.describe_hit()}"
            checks.append(Check("configured_no_signaling", status, gap, 1e-12, detail))

    falsified = enumerate_ensemble(falsification_variant(protocol), policy, cap)
    checks.append(_bound("falsification_restores_orthodox", float(np.max(np.abs(falsified.weights - ortho.weights))), 1e-12))

    # effective past: back-propagate a collapsed final state, then forward again
    try:
        rho0, steps, _ = quantum_realization(protocol)
    except ProtocolMalformed as exc:
        checks.append(Check("effective_past_round_trip", SKIPPED, None, 1e-12, str(exc)))
    else:
        schedule = [u for u, _ in steps]
        _, _, _, final = next(branches(rho0, steps))
        back = effective_past(final, schedule, len(schedule))
        err = float(np.max(np.abs(evolve(back, schedule).data - final.data)))
        checks.append(_bound("effective_past_round_trip", err, 1e-12))

    return VerificationReport(protocol.name, tuple(checks))
