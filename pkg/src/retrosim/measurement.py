"""Projective measurement: Born probabilities, Lüders collapse, effective pasts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    FamilyIncomplete,
    LayoutMismatch,
    NonCommutingCondition,
    NumericIntegrityError,
    ScheduleMismatch,
    ZeroProbabilityOutcome,
)
from .linalg import (
    TOL_STRUCT,
    DensityMatrix,
    Projector,
    SubsystemLayout,
    UnitaryOp,
    apply_unitary,
    complement,
)

# branches at or below this probability are impossible and get pruned
EPS_ZERO = 1e-12
# imaginary parts below this are rounding noise
TOL_IMAG = 1e-12

__all__ = [
    "EPS_ZERO",
    "OutcomeFamily",
    "MeasurementRecord",
    "born_probability",
    "collapse",
    "family_probabilities",
    "conditional_probability",
    "effective_past",
    "evolve",
    "branches",
    "history_weights",
]


def _same_dim(rho, op) -> None:
    if rho.dim != op.dim:
        raise LayoutMismatch(f"operator dimension {op.dim} does not match state dimension {rho.dim}")


def _real_probability(value: complex) -> float:
    if abs(value.imag) >= TOL_IMAG:
        raise NumericIntegrityError(f"probability has imaginary part {value.imag:.3g}")
    return min(1.0, max(0.0, float(value.real)))


@dataclass(frozen=True)
class OutcomeFamily:
    """Mutually orthogonal projectors summing to the identity."""

    outcomes: tuple[tuple[str, Projector], ...]

    def __post_init__(self):
        outcomes = tuple((str(label), p) for label, p in self.outcomes)
        if not outcomes:
            raise FamilyIncomplete("an outcome family needs at least one outcome")
        labels = [label for label, _ in outcomes]
        if len(set(labels)) != len(labels):
            raise FamilyIncomplete(f"duplicate outcome labels {labels}")
        dims = {p.dim for _, p in outcomes}
        if len(dims) != 1:
            raise LayoutMismatch(f"projectors of differing dimensions {sorted(dims)}")
        (dim,) = dims
        total = sum(p.data for _, p in outcomes)
        if np.max(np.abs(total - np.eye(dim))) >= TOL_STRUCT:
            raise FamilyIncomplete("projectors do not sum to the identity")
        for i, (a, pa) in enumerate(outcomes):
            for b, pb in outcomes[i + 1:]:
                if np.max(np.abs(pa.data @ pb.data)) >= TOL_STRUCT:
                    raise FamilyIncomplete(f"outcomes {a!r} and {b!r} are not orthogonal")
        object.__setattr__(self, "outcomes", outcomes)

    @classmethod
    def binary(cls, p: Projector, yes: str = "Yes", no: str = "No") -> OutcomeFamily:
        return cls(((yes, p), (no, complement(p))))

    @classmethod
    def computational(cls, layout: SubsystemLayout, label: str, names: Sequence[str]) -> OutcomeFamily:
        """Basis measurement of factor ``label``; ``names[i]`` labels basis state ``i``."""
        d = layout.dims[layout.index(label)]
        if len(names) != d:
            raise FamilyIncomplete(f"factor {label!r} has dimension {d} but {len(names)} names were given")
        outcomes = []
        for i, name in enumerate(names):
            local = np.zeros((d, d))
            local[i, i] = 1.0
            outcomes.append((name, Projector(layout.embed(local, label))))
        return cls(tuple(outcomes))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.outcomes)

    @property
    def dim(self) -> int:
        return self.outcomes[0][1].dim

    def __len__(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class MeasurementRecord:
    process_time: int
    question_label: str
    outcome_label: str
    born_probability: float
    applied_weight: float

    def __post_init__(self):
        if self.process_time < 0:
            raise ValueError("process_time must be nonnegative")
        if not 0.0 <= self.born_probability <= 1.0:
            raise ValueError(f"born_probability {self.born_probability} outside [0, 1]")
        if self.applied_weight < 0:
            raise ValueError("applied_weight must be nonnegative")


def born_probability(rho: DensityMatrix, p: Projector) -> float:
    """``Tr(P rho)``, clamped to [0, 1]."""
    _same_dim(rho, p)
    return _real_probability(complex(np.einsum("ij,ji->", p.data, rho.data)))


def collapse(rho: DensityMatrix, p: Projector) -> tuple[DensityMatrix, float]:
    """Lüders update ``P rho P / Tr(P rho P)`` together with the outcome probability.

    Raises :class:`ZeroProbabilityOutcome` when the outcome is impossible.
    """
    prob = born_probability(rho, p)
    if prob <= EPS_ZERO:
        raise ZeroProbabilityOutcome(f"outcome has probability {prob:.3g}")
    out = p.data @ rho.data @ p.data
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out / np.trace(out).real), prob


def family_probabilities(rho: DensityMatrix, fam: OutcomeFamily) -> np.ndarray:
    if not isinstance(fam, OutcomeFamily):
        raise FamilyIncomplete("expected an OutcomeFamily")
    return np.array([born_probability(rho, p) for _, p in fam.outcomes])


def conditional_probability(rho: DensityMatrix, p: Projector, q: Projector) -> float:
    """``Tr(P Q rho) / Tr(Q rho)`` for commuting ``P`` and ``Q``."""
    _same_dim(rho, p)
    _same_dim(rho, q)
    pq = p.data @ q.data
    if np.max(np.abs(pq - q.data @ p.data)) >= TOL_STRUCT:
        raise NonCommutingCondition("conditional probability is only defined for commuting questions")
    denom = born_probability(rho, q)
    if denom <= EPS_ZERO:
        raise ZeroProbabilityOutcome("conditioning event has zero probability")
    num = _real_probability(complex(np.einsum("ij,ji->", pq, rho.data)))
    return min(1.0, num / denom)


def evolve(rho: DensityMatrix, schedule: Sequence[UnitaryOp]) -> DensityMatrix:
    """Forward-evolve through ``schedule`` in order."""
    for u in schedule:
        rho = apply_unitary(rho, u, "forward")
    return rho


def effective_past(rho_after: DensityMatrix, schedule: Sequence[UnitaryOp], steps_back: int) -> DensityMatrix:
    """Back-propagate ``rho_after`` through the last ``steps_back`` schedule entries.

    Forward evolution of the result through the same entries returns
    ``rho_after``.
    """
    if not 0 <= steps_back <= len(schedule):
        raise ScheduleMismatch(f"steps_back={steps_back} outside [0, {len(schedule)}]")
    rho = rho_after
    for u in reversed(schedule[len(schedule) - steps_back:]):
        rho = apply_unitary(rho, u, "backward")
    return rho


Step = tuple["UnitaryOp | None", OutcomeFamily]


def branches(
    rho: DensityMatrix, steps: Sequence[Step]
) -> Iterator[tuple[tuple[str, ...], float, list[MeasurementRecord], DensityMatrix]]:
    """Walk every outcome sequence of ``steps`` by repeated collapse.

    Each step optionally evolves the state by a unitary and then measures an
    outcome family.  Impossible branches are pruned.  Yields
    ``(labels, probability, records, final_state)``.
    """

    def walk(state, n, labels, prob, records):
        if n == len(steps):
            yield tuple(labels), prob, records, state
            return
        u, fam = steps[n]
        if u is not None:
            state = apply_unitary(state, u, "forward")
        for name, proj in fam.outcomes:
            try:
                after, p = collapse(state, proj)
            except ZeroProbabilityOutcome:
                continue
            rec = MeasurementRecord(n, f"step{n}", name, p, p)
            yield from walk(after, n + 1, labels + [name], prob * p, records + [rec])

    yield from walk(rho, 0, [], 1.0, [])


def history_weights(rho: DensityMatrix, steps: Sequence[Step]) -> dict[tuple[str, ...], float]:
    """Probability of every outcome sequence under sequential collapse."""
    return {labels: prob for labels, prob, _, _ in branches(rho, steps)}
