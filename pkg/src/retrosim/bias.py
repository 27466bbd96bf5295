"""Nature's choice policies: the orthodox Born rule and a valence-biased tilt.

The biased rule reweights Born probabilities ``p_i`` by ``1 + beta * v_i``,
where ``v_i`` in [-1, 1] is the valence of outcome ``i`` (positive for
pleasing experiences), and renormalizes.  At ``beta = 0`` it is the Born rule;
a zero-probability outcome stays impossible for every ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateInput, LayoutMismatch

ORTHODOX = "orthodox"
BIASED = "biased"

__all__ = [
    "ORTHODOX",
    "BIASED",
    "ChoicePolicy",
    "check_beta",
    "check_valence",
    "biased_weights",
    "sample_outcome",
    "policy_weights",
]


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 <= beta <= 1.0:
        raise DegenerateInput(f"beta must lie in [0, 1], got {beta}")
    return beta


def check_valence(value: float) -> float:
    value = float(value)
    if not -1.0 <= value <= 1.0:
        raise DegenerateInput(f"valence must lie in [-1, 1], got {value}")
    return value


@dataclass(frozen=True)
class ChoicePolicy:
    """How Nature picks among outcomes.

    ``valence_map`` is only consulted by :func:`policy_weights`; protocol
    enumeration takes valences from the protocol's own valence function.
    """

    kind: str = ORTHODOX
    beta: float = 0.0
    valence_map: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (ORTHODOX, BIASED):
            raise DegenerateInput(f"unknown policy kind {self.kind!r}")
        beta = check_beta(self.beta)
        if self.kind == ORTHODOX and beta != 0.0:
            raise DegenerateInput("the orthodox policy has no bias parameter")
        vmap = {str(k): check_valence(v) for k, v in dict(self.valence_map).items()}
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "valence_map", MappingProxyType(vmap))

    @classmethod
    def orthodox(cls) -> ChoicePolicy:
        return cls(ORTHODOX)

    @classmethod
    def biased(cls, beta: float, valence_map: Mapping[str, float] | None = None) -> ChoicePolicy:
        return cls(BIASED, beta, valence_map or {})

    @property
    def effective_beta(self) -> float:
        return self.beta if self.kind == BIASED else 0.0

    def valence(self, label: str) -> float:
        # unlisted outcomes are neutral
        return self.valence_map.get(label, 0.0)

    def __hash__(self):
        return hash((self.kind, self.beta, tuple(sorted(self.valence_map.items()))))

    def __eq__(self, other):
        if not isinstance(other, ChoicePolicy):
            return NotImplemented
        return (self.kind, self.beta, dict(self.valence_map)) == (other.kind, other.beta, dict(other.valence_map))


def biased_weights(born: Sequence[float], valences: Sequence[float], beta: float) -> np.ndarray:
    """Return ``q_i = p_i (1 + beta v_i) / sum_j p_j (1 + beta v_j)``."""
    p = np.asarray(born, dtype=float)
    v = np.asarray(valences, dtype=float)
    if p.shape != v.shape or p.ndim != 1:
        raise LayoutMismatch(f"born {p.shape} and valences {v.shape} must be equal-length vectors")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DegenerateInput("born probabilities must be nonnegative and sum to 1")
    if np.any(np.abs(v) > 1.0):
        raise DegenerateInput("valences must lie in [-1, 1]")
    beta = check_beta(beta)
    if beta == 0.0:
        return p.copy()
    w = p * (1.0 + beta * v)
    total = w.sum()
    if total <= 0.0:
        raise DegenerateInput("all biased weights vanish")
    return w / total


def sample_outcome(weights: Sequence[float], draw: float) -> int:
    """Inverse-CDF pick: the smallest ``i`` whose cumulative weight exceeds ``draw``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DegenerateInput("weights must be a nonnegative vector summing to 1")
    if not 0.0 <= draw < 1.0:
        raise DegenerateInput(f"draw must lie in [0, 1), got {draw}")
    idx = int(np.searchsorted(np.cumsum(w), draw, side="right"))
    if idx >= w.size:
        # cumulative sum fell short of 1 by rounding; take the last possible outcome
        idx = int(np.flatnonzero(w)[-1])
    return idx


def policy_weights(policy: ChoicePolicy, born: Sequence[float], labels: Sequence[str]) -> np.ndarray:
    born = np.asarray(born, dtype=float)
    if len(labels) != born.size:
        raise LayoutMismatch("one label per outcome is required")
    if policy.kind == ORTHODOX:
        return born.copy()
    return biased_weights(born, [policy.valence(label) for label in labels], policy.beta)
