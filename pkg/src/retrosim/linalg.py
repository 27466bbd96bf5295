"""Dense complex linear algebra for small Hilbert spaces.

Every matrix type here wraps a read-only ``numpy`` array and checks its
structural invariants once, at construction.  Operations never mutate their
arguments, so states can be snapshotted freely along a history.

Tensor index convention: factor 0 of a :class:`SubsystemLayout` is the
slowest-varying index, matching ``numpy.kron(a, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput, InvalidState, LayoutMismatch

# structural checks (Hermiticity, idempotence, unitarity, PSD)
TOL_STRUCT = 1e-9
# trace normalization
TOL_TRACE = 1e-12

__all__ = [
    "TOL_STRUCT",
    "TOL_TRACE",
    "ComplexMatrix",
    "DensityMatrix",
    "Projector",
    "UnitaryOp",
    "SubsystemLayout",
    "make_pure_state",
    "matrix_trace",
    "tensor_product",
    "partial_trace",
    "complement",
    "apply_unitary",
    "basis_projector",
    "identity_projector",
    "random_density_matrix",
    "random_projector",
    "random_unitary",
]


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


class ComplexMatrix:
    """An immutable square complex matrix."""

    __slots__ = ("_data",)

    def __init__(self, entries):
        data = np.array(entries, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] == 0:
            raise LayoutMismatch(f"expected a non-empty square matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidState("matrix has non-finite entries")
        data.setflags(write=False)
        self._data = data
        self._validate()

    def _validate(self) -> None:
        pass

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __matmul__(self, other) -> ComplexMatrix:
        other = other.data if isinstance(other, ComplexMatrix) else np.asarray(other)
        if other.shape != self._data.shape:
            raise LayoutMismatch(f"dimension mismatch: {self.dim} vs {other.shape}")
        return ComplexMatrix(self._data @ other)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = other.data if isinstance(other, ComplexMatrix) else np.asarray(other)
        return other.shape == self._data.shape and _max_abs(self._data - other) <= atol

    def hermiticity_error(self) -> float:
        return _max_abs(self._data - self._data.conj().T)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class DensityMatrix(ComplexMatrix):
    """Hermitian, positive semidefinite, unit-trace state."""

    __slots__ = ()

    def _validate(self) -> None:
        if self.hermiticity_error() >= TOL_STRUCT:
            raise InvalidState(f"density matrix not Hermitian (deviation {self.hermiticity_error():.3g})")
        tr = np.trace(self._data)
        if abs(tr - 1.0) >= TOL_TRACE:
            raise InvalidState(f"density matrix trace is {tr}, expected 1")
        lo = float(np.linalg.eigvalsh(self._data).min())
        if lo <= -TOL_STRUCT:
            raise InvalidState(f"density matrix has negative eigenvalue {lo:.3g}")

    @classmethod
    def from_diagonal(cls, probs: Sequence[float]) -> DensityMatrix:
        return cls(np.diag(np.asarray(probs, dtype=float)))

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        return cls(np.eye(dim) / dim)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._data)


class Projector(ComplexMatrix):
    """Hermitian idempotent operator: a yes/no question."""

    __slots__ = ()

    def _validate(self) -> None:
        if self.hermiticity_error() >= TOL_STRUCT:
            raise InvalidState("projector not Hermitian")
        err = _max_abs(self._data @ self._data - self._data)
        if err >= TOL_STRUCT:
            raise InvalidState(f"projector not idempotent (|PP-P| = {err:.3g})")

    @classmethod
    def onto(cls, vectors, dim: int | None = None) -> Projector:
        """Orthogonal projector onto the span of ``vectors`` (rows)."""
        v = np.atleast_2d(np.asarray(vectors, dtype=np.complex128))
        if dim is not None and v.shape[1] != dim:
            raise LayoutMismatch(f"vectors have length {v.shape[1]}, expected {dim}")
        q, r = np.linalg.qr(v.T)
        rank = int(np.sum(np.abs(np.diag(r)) > 1e-12))
        if rank < v.shape[0]:
            raise DegenerateInput("vectors are linearly dependent or zero")
        return cls(q @ q.conj().T)

    @property
    def rank(self) -> int:
        return int(round(np.trace(self._data).real))


class UnitaryOp(ComplexMatrix):
    __slots__ = ()

    def _validate(self) -> None:
        err = _max_abs(self._data.conj().T @ self._data - np.eye(self.dim))
        if err >= TOL_STRUCT:
            raise InvalidState(f"operator not unitary (|U*U - I| = {err:.3g})")

    @classmethod
    def identity(cls, dim: int) -> UnitaryOp:
        return cls(np.eye(dim))

    def dagger(self) -> UnitaryOp:
        return UnitaryOp(self._data.conj().T)


@dataclass(frozen=True)
class SubsystemLayout:
    """Labelled tensor factors, e.g. ``(("participant", 2), ("rng1", 2))``."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(d)) for label, d in self.factors)
        if not factors:
            raise DegenerateInput("layout needs at least one factor")
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutMismatch(f"duplicate subsystem labels in {labels}")
        if any(d < 1 for _, d in factors):
            raise LayoutMismatch("factor dimensions must be positive")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, **dims: int) -> SubsystemLayout:
        return cls(tuple(dims.items()))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def total(self) -> int:
        return prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutMismatch(f"unknown subsystem {label!r}; layout has {self.labels}") from None

    def embed(self, op, label: str) -> np.ndarray:
        """Lift a local operator on ``label`` to the full space (identity elsewhere)."""
        local = np.asarray(op, dtype=np.complex128)
        k = self.index(label)
        if local.shape != (self.dims[k], self.dims[k]):
            raise LayoutMismatch(f"operator shape {local.shape} does not fit factor {label!r}")
        mats = [local if i == k else np.eye(d) for i, d in enumerate(self.dims)]
        return reduce(np.kron, mats)


def make_pure_state(amplitudes) -> DensityMatrix:
    psi = np.asarray(amplitudes, dtype=np.complex128).ravel()
    if psi.size == 0 or not np.all(np.isfinite(psi)):
        raise DegenerateInput("amplitudes must be a non-empty finite vector")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise DegenerateInput("cannot build a state from the zero vector")
    psi = psi / norm
    rho = np.outer(psi, psi.conj())
    # remove rounding asymmetry so the Hermiticity check is exact
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def matrix_trace(m) -> complex:
    """Sum of the diagonal elements."""
    data = np.asarray(m)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise LayoutMismatch(f"trace needs a square matrix, got shape {data.shape}")
    return complex(np.trace(data))


def tensor_product(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Kronecker product; keeps the operand type when both operands share it."""
    data = np.kron(a.data, b.data)
    cls = type(a) if type(a) is type(b) else ComplexMatrix
    return cls(data)


def partial_trace(rho: DensityMatrix, layout: SubsystemLayout, keep: Iterable[str]) -> DensityMatrix:
    """Reduced state on the ``keep`` factors, in layout order."""
    keep = set(keep)
    if not keep:
        raise DegenerateInput("keep set is empty")
    if layout.total != rho.dim:
        raise LayoutMismatch(f"layout dimension {layout.total} does not match state dimension {rho.dim}")
    kept = sorted(layout.index(label) for label in keep)
    n = len(layout.dims)
    if len(kept) == n:
        return rho

    tensor = rho.data.reshape(layout.dims + layout.dims)
    rows = list(range(n))
    cols = [i if i not in kept else n + i for i in range(n)]
    out = [i for i in kept] + [n + i for i in kept]
    reduced = np.einsum(tensor, rows + cols, out)
    d = prod(layout.dims[i] for i in kept)
    reduced = reduced.reshape(d, d)
    return DensityMatrix(reduced / np.trace(reduced).real)


def complement(p: Projector) -> Projector:
    """``I - P``: the "No" answer to the question ``P``."""
    return Projector(np.eye(p.dim) - p.data)


def apply_unitary(rho: DensityMatrix, u: UnitaryOp, direction: str = "forward") -> DensityMatrix:
    """Evolve ``rho`` to ``U rho U*`` (forward) or ``U* rho U`` (backward)."""
    if u.dim != rho.dim:
        raise LayoutMismatch(f"unitary dimension {u.dim} does not match state dimension {rho.dim}")
    if direction == "forward":
        out = u.data @ rho.data @ u.data.conj().T
    elif direction == "backward":
        out = u.data.conj().T @ rho.data @ u.data
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', not {direction!r}")
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out / np.trace(out).real)


def basis_projector(dim: int, indices) -> Projector:
    """Projector onto computational basis states ``indices``."""
    diag = np.zeros(dim)
    diag[np.atleast_1d(indices)] = 1.0
    return Projector(np.diag(diag))


def identity_projector(dim: int) -> Projector:
    return Projector(np.eye(dim))


# Random instances, used by property tests and by ``verify``.

def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryOp:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return UnitaryOp(q * (d / np.abs(d)))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def random_projector(dim: int, rng: np.random.Generator, rank: int | None = None) -> Projector:
    if rank is None:
        rank = int(rng.integers(1, dim + 1))
    if rank == 0:
        return Projector(np.zeros((dim, dim)))
    q = random_unitary(dim, rng).data[:, :rank]
    p = q @ q.conj().T
    return Projector(0.5 * (p + p.conj().T))
