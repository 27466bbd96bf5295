"""Exact enumeration of outcome histories and the statistics built on them.

A protocol is an event tree walked in process-time order.  Each complete
path is a history whose orthodox weight is the product of its Born branch
probabilities.  A biased policy then reweights whole histories by the
valence of their terminal experience, which is how a later experience can
shift the statistics of earlier, already recorded choices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .bias import ChoicePolicy, biased_weights
from .errors import ProtocolMalformed, ZeroProbabilityOutcome
from .linalg import DensityMatrix, SubsystemLayout, UnitaryOp
from .measurement import EPS_ZERO, OutcomeFamily, history_weights

if TYPE_CHECKING:
    from .protocols import EventNode, ProtocolSpec

__all__ = [
    "Is",
    "Same",
    "Overlap",
    "History",
    "HistoryEnsemble",
    "enumerate_ensemble",
    "enumerate_truncated",
    "conditional_rate",
    "marginal",
    "no_signaling_gap",
    "hit_rate",
    "hit_gap",
    "quantum_realization",
    "sequential_law",
    "sequential_equivalence_distance",
    "total_variation",
    "count_leaves",
]

DEFAULT_CAP = 100_000


# -- predicates ---------------------------------------------------------------

@dataclass(frozen=True)
class Is:
    """``variable`` took one of ``outcomes``."""

    variable: str
    outcomes: frozenset[str]

    def __init__(self, variable: str, outcomes: str | Iterable[str]):
        if isinstance(outcomes, str):
            outcomes = (outcomes,)
        object.__setattr__(self, "variable", variable)
        object.__setattr__(self, "outcomes", frozenset(outcomes))

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.variable,)

    def __call__(self, history: History) -> bool:
        return history[self.variable] in self.outcomes

    def describe(self) -> str:
        if len(self.outcomes) == 1:
            return f"{self.variable}={next(iter(self.outcomes))}"
        return f"{self.variable} in {{{','.join(sorted(self.outcomes))}}}"


@dataclass(frozen=True)
class Same:
    """Two variables took the same outcome label."""

    a: str
    b: str

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.a, self.b)

    def __call__(self, history: History) -> bool:
        return history[self.a] == history[self.b]

    def describe(self) -> str:
        return f"{self.a}={self.b}"


@dataclass(frozen=True)
class Overlap:
    """Set-valued outcomes (``+``-joined items) share at least ``at_least`` items."""

    a: str
    b: str
    at_least: int

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.a, self.b)

    def __call__(self, history: History) -> bool:
        return overlap_size(history[self.a], history[self.b]) >= self.at_least

    def describe(self) -> str:
        return f"|{self.a}&{self.b}|>={self.at_least}"


def overlap_size(a: str, b: str) -> int:
    return len(set(a.split("+")) & set(b.split("+")))


PredicateLike = Union[Is, Same, Overlap, Sequence, Callable[["History"], bool], None]


def _as_test(pred: PredicateLike) -> Callable[[History], bool]:
    if pred is None:
        return lambda h: True
    if isinstance(pred, (list, tuple)):
        tests = [_as_test(p) for p in pred]
        return lambda h: all(t(h) for t in tests)
    return pred


def referenced_variables(pred: PredicateLike) -> set[str]:
    """Variables a predicate reads; plain callables are opaque and report none."""
    if pred is None:
        return set()
    if isinstance(pred, (list, tuple)):
        return set().union(*(referenced_variables(p) for p in pred))
    return set(getattr(pred, "variables", ()))


def describe(pred: PredicateLike) -> str:
    if pred is None or (isinstance(pred, (list, tuple)) and not pred):
        return "always"
    if isinstance(pred, (list, tuple)):
        return " & ".join(describe(p) for p in pred)
    return pred.describe() if hasattr(pred, "describe") else repr(pred)


# -- histories ----------------------------------------------------------------

@dataclass(frozen=True)
class History:
    outcomes: tuple[tuple[str, str], ...]
    weight: float
    born_weight: float = 0.0

    def __getitem__(self, variable: str) -> str:
        for var, label in self.outcomes:
            if var == variable:
                return label
        raise KeyError(variable)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(var for var, _ in self.outcomes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for _, label in self.outcomes)

    def as_dict(self) -> dict[str, str]:
        return dict(self.outcomes)


@dataclass(frozen=True)
class HistoryEnsemble:
    histories: tuple[History, ...]
    normalization: float = 1.0

    def __post_init__(self):
        total = sum(h.weight for h in self.histories)
        if abs(total - 1.0) > 1e-12:
            raise ProtocolMalformed(f"ensemble weights sum to {total!r}, not 1")
        seen = {h.labels for h in self.histories}
        if len(seen) != len(self.histories):
            raise ProtocolMalformed("ensemble contains repeated outcome sequences")

    def __len__(self) -> int:
        return len(self.histories)

    def __iter__(self) -> Iterator[History]:
        return iter(self.histories)

    @property
    def weights(self) -> np.ndarray:
        return np.array([h.weight for h in self.histories])

    def as_dict(self) -> dict[tuple[str, ...], float]:
        return {h.labels: h.weight for h in self.histories}

    def weight_of(self, pred: PredicateLike) -> float:
        test = _as_test(pred)
        return float(sum(h.weight for h in self.histories if test(h)))

    def expectation(self, fn: Callable[[History], float]) -> float:
        return float(sum(h.weight * fn(h) for h in self.histories))

    def restrict(self, pred: PredicateLike) -> HistoryEnsemble:
        """Condition on ``pred`` and renormalize."""
        test = _as_test(pred)
        kept = [h for h in self.histories if test(h)]
        total = sum(h.weight for h in kept)
        if total <= EPS_ZERO:
            raise ZeroProbabilityOutcome(f"condition {describe(pred)} has zero weight")
        kept = [History(h.outcomes, h.weight / total, h.born_weight) for h in kept]
        return HistoryEnsemble(tuple(kept), self.normalization)


def conditional_rate(ensemble: HistoryEnsemble, condition: PredicateLike, event: PredicateLike) -> float:
    """``weight(event and condition) / weight(condition)``."""
    cond = _as_test(condition)
    ev = _as_test(event)
    den = 0.0
    num = 0.0
    for h in ensemble.histories:
        if cond(h):
            den += h.weight
            if ev(h):
                num += h.weight
    if den <= EPS_ZERO:
        raise ZeroProbabilityOutcome(f"condition {describe(condition)} has zero weight")
    return num / den


def marginal(ensemble: HistoryEnsemble, variable: str) -> dict[str, float]:
    dist: dict[str, float] = {}
    for h in ensemble.histories:
        try:
            label = h[variable]
        except KeyError:
            raise ProtocolMalformed(f"variable {variable!r} is not recorded in every history") from None
        dist[label] = dist.get(label, 0.0) + h.weight
    return dist


# -- enumeration --------------------------------------------------------------

def _walk(node: EventNode, stop_at_experience: bool) -> Iterator[tuple[tuple[tuple[str, str], ...], float]]:
    from .protocols import EXPERIENCE

    stack = [(node, (), 1.0)]
    while stack:
        current, path, prob = stack.pop()
        if current.kind == EXPERIENCE and stop_at_experience:
            yield path, prob
            continue
        if not current.children:
            if current.kind != EXPERIENCE:
                raise ProtocolMalformed(f"path {path} ends at non-experience event {current.variable!r}")
            for label, p in zip(current.outcomes, current.branch_probabilities):
                if p * prob > 0.0:
                    yield path + ((current.variable, label),), prob * p
            continue
        # reversed so the stack pops children in declaration order
        for label, p, child in reversed(list(zip(current.outcomes, current.branch_probabilities, current.children))):
            if p > 0.0:
                stack.append((child, path + ((current.variable, label),), prob * p))


def count_leaves(node: EventNode) -> int:
    if not node.children:
        return sum(1 for p in node.branch_probabilities if p > 0.0)
    return sum(count_leaves(c) for c, p in zip(node.children, node.branch_probabilities) if p > 0.0)


def enumerate_ensemble(protocol: ProtocolSpec, policy: ChoicePolicy, cap: int | None = DEFAULT_CAP) -> HistoryEnsemble:
    """Exact history ensemble of ``protocol`` under ``policy``.

    With ``cap`` set, protocols with more leaf histories than ``cap`` raise
    :class:`ProtocolMalformed` instead of being enumerated.
    """
    if cap is not None:
        n = count_leaves(protocol.root)
        if n > cap:
            raise ProtocolMalformed(f"protocol {protocol.name!r} has {n} histories, above the enumeration cap {cap}")
    paths = list(_walk(protocol.root, stop_at_experience=False))
    if not paths:
        raise ProtocolMalformed(f"protocol {protocol.name!r} has no possible history")
    born = np.array([p for _, p in paths])
    born = born / born.sum()
    beta = policy.effective_beta
    if beta == 0.0:
        weights = born
        norm = 1.0
    else:
        valences = [protocol.valence_function(dict(path)) for path, _ in paths]
        weights = biased_weights(born, valences, beta)
        norm = float(np.sum(born * (1.0 + beta * np.asarray(valences))))
    histories = tuple(History(path, float(w), float(b)) for (path, _), w, b in zip(paths, weights, born))
    return HistoryEnsemble(histories, norm)


def enumerate_truncated(protocol: ProtocolSpec) -> HistoryEnsemble:
    """Orthodox ensemble of the protocol with its final experience removed."""
    acc: dict[tuple[tuple[str, str], ...], float] = {}
    for path, p in _walk(protocol.root, stop_at_experience=True):
        acc[path] = acc.get(path, 0.0) + p
    total = sum(acc.values())
    return HistoryEnsemble(tuple(History(path, w / total, w / total) for path, w in acc.items()))


def no_signaling_gap(
    protocol: ProtocolSpec,
    early_variable: str | None,
    policy: ChoicePolicy,
    *,
    event: PredicateLike = None,
    condition: PredicateLike = None,
    cap: int | None = DEFAULT_CAP,
) -> float:
    """How much the final experience moves an earlier statistic.

    Without ``event`` this is the largest absolute change of the marginal of
    ``early_variable``; with ``event`` it is the change of
    ``rate(event | condition)``.  Both compare the full ensemble against the
    protocol truncated before its final measurement.
    """
    final = protocol.experience_variable
    variable = early_variable or protocol.early_variable
    read = referenced_variables(event) | referenced_variables(condition) if event is not None else {variable}
    if final in read:
        raise ProtocolMalformed(f"statistic reads the final experience {final!r}, which truncation removes")
    full = enumerate_ensemble(protocol, policy, cap)
    truncated = enumerate_truncated(protocol)
    if event is not None:
        return abs(conditional_rate(full, condition, event) - conditional_rate(truncated, condition, event))
    a = marginal(full, variable)
    b = marginal(truncated, variable)
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def hit_rate(protocol: ProtocolSpec, ensemble: HistoryEnsemble) -> float:
    return conditional_rate(ensemble, protocol.hit_condition, protocol.hit_event)


def hit_gap(protocol: ProtocolSpec, policy: ChoicePolicy, cap: int | None = DEFAULT_CAP) -> float:
    """No-signaling gap of the protocol's designated hit statistic."""
    return no_signaling_gap(
        protocol, None, policy, event=protocol.hit_event, condition=protocol.hit_condition, cap=cap
    )


# -- quantum-state realization ------------------------------------------------

MAX_REALIZATION_DIM = 512


def _register_labels(protocol: ProtocolSpec) -> dict[str, list[str]]:
    labels: dict[str, list[str]] = {}
    stack = [protocol.root]
    while stack:
        node = stack.pop()
        seen = labels.setdefault(node.variable, [])
        for label in node.outcomes:
            if label not in seen:
                seen.append(label)
        stack.extend(reversed(node.children))
    return {v: labels[v] for v in protocol.variables}


def _nodes_at_depth(node: EventNode, depth: int, prefix=()) -> Iterator[tuple[tuple[str, ...], EventNode]]:
    if depth == 0:
        yield prefix, node
        return
    for label, child in zip(node.outcomes, node.children):
        yield from _nodes_at_depth(child, depth - 1, prefix + (label,))


def _preparation(amplitudes: np.ndarray) -> np.ndarray:
    """A real orthogonal matrix whose first column is ``amplitudes``."""
    d = amplitudes.size
    e0 = np.zeros(d)
    e0[0] = 1.0
    w = e0 - amplitudes
    if np.linalg.norm(w) < 1e-15:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)


def quantum_realization(protocol: ProtocolSpec) -> tuple[DensityMatrix, list[tuple[UnitaryOp, OutcomeFamily]], SubsystemLayout]:
    """Encode the event tree as registers, controlled preparations and basis measurements.

    Every variable gets a register initialised to ``|0>``.  At its process
    time a unitary, controlled on the already measured earlier registers,
    rotates the register into ``sum_i sqrt(p_i)|i>`` and the register is then
    measured in its basis.
    """
    labels = _register_labels(protocol)
    variables = list(protocol.variables)
    layout = SubsystemLayout(tuple((v, len(labels[v])) for v in variables))
    if layout.total > MAX_REALIZATION_DIM:
        raise ProtocolMalformed(f"realization dimension {layout.total} exceeds {MAX_REALIZATION_DIM}")
    dims = layout.dims
    rho0 = np.zeros((layout.total, layout.total))
    rho0[0, 0] = 1.0
    steps = []
    for k, var in enumerate(variables):
        u = np.eye(layout.total, dtype=complex)
        for prefix, node in _nodes_at_depth(protocol.root, k):
            amps = np.zeros(dims[k])
            for label, p in zip(node.outcomes, node.branch_probabilities):
                amps[labels[var].index(label)] = np.sqrt(p)
            amps /= np.linalg.norm(amps)
            local = _preparation(amps) - np.eye(dims[k])
            mats = []
            for j, d in enumerate(dims):
                if j < k:
                    proj = np.zeros((d, d))
                    i = labels[variables[j]].index(prefix[j])
                    proj[i, i] = 1.0
                    mats.append(proj)
                elif j == k:
                    mats.append(local)
                else:
                    mats.append(np.eye(d))
            term = mats[0]
            for m in mats[1:]:
                term = np.kron(term, m)
            u = u + term
        steps.append((UnitaryOp(u), OutcomeFamily.computational(layout, var, labels[var])))
    return DensityMatrix(rho0), steps, layout


def sequential_law(protocol: ProtocolSpec) -> dict[tuple[str, ...], float]:
    """History distribution obtained by sequential Born sampling and collapse."""
    rho0, steps, _ = quantum_realization(protocol)
    return history_weights(rho0, steps)


def total_variation(p: Mapping, q: Mapping) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def sequential_equivalence_distance(protocol: ProtocolSpec) -> float:
    """Total variation between the orthodox ensemble and the sequential quantum law."""
    ensemble = enumerate_ensemble(protocol, ChoicePolicy.orthodox(), cap=None)
    return total_variation(ensemble.as_dict(), sequential_law(protocol))
