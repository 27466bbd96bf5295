import numpy as np
import pytest
from numpy.testing import assert_allclose

from retrosim.errors import (
    FamilyIncomplete,
    LayoutMismatch,
    NonCommutingCondition,
    ScheduleMismatch,
    ZeroProbabilityOutcome,
)
from retrosim.linalg import (
    DensityMatrix,
    Projector,
    SubsystemLayout,
    UnitaryOp,
    basis_projector,
    random_density_matrix,
    random_projector,
    random_unitary,
    tensor_product,
)
from retrosim.measurement import (
    MeasurementRecord,
    OutcomeFamily,
    born_probability,
    collapse,
    conditional_probability,
    effective_past,
    evolve,
    family_probabilities,
    history_weights,
)

DIAG73 = DensityMatrix.from_diagonal([0.7, 0.3])


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


class TestBornProbability:
    def test_maximally_mixed(self):
        p = Projector.onto([[1, 1j]])
        assert born_probability(DensityMatrix.maximally_mixed(2), p) == pytest.approx(0.5, abs=1e-15)

    def test_identity(self, rng):
        assert born_probability(random_density_matrix(4, rng), Projector(np.eye(4))) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        assert born_probability(DIAG73, basis_projector(2, 1)) == pytest.approx(0.3, abs=1e-15)

    def test_sandwich_identity(self, rng):
        for _ in range(100):
            d = int(rng.integers(2, 9))
            rho, p = random_density_matrix(d, rng), random_projector(d, rng)
            sandwich = np.trace(p.data @ rho.data @ p.data).real
            assert abs(born_probability(rho, p) - sandwich) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(LayoutMismatch):
            born_probability(DIAG73, Projector(np.eye(3)))


class TestCollapse:
    def test_diagonal(self):
        state, prob = collapse(DIAG73, basis_projector(2, 0))
        assert prob == pytest.approx(0.7, abs=1e-15)
        assert_allclose(state.data, np.diag([1, 0]), atol=1e-15)

    def test_identity_projector(self, rng):
        rho = random_density_matrix(3, rng)
        state, prob = collapse(rho, Projector(np.eye(3)))
        assert prob == pytest.approx(1.0, abs=1e-12)
        assert state.allclose(rho, 1e-12)

    def test_orthogonal_outcome_is_impossible(self):
        with pytest.raises(ZeroProbabilityOutcome):
            collapse(DensityMatrix.from_diagonal([1, 0]), basis_projector(2, 1))

    def test_normalized_and_idempotent(self, rng):
        for _ in range(100):
            d = int(rng.integers(2, 9))
            rho, p = random_density_matrix(d, rng), random_projector(d, rng)
            once, _ = collapse(rho, p)
            assert abs(np.trace(once.data) - 1) < 1e-12
            twice, prob = collapse(once, p)
            assert prob == pytest.approx(1.0, abs=1e-12)
            assert twice.allclose(once, 1e-12)


class TestFamilies:
    def test_binary(self, rng):
        rho, p = random_density_matrix(3, rng), random_projector(3, rng, rank=1)
        probs = family_probabilities(rho, OutcomeFamily.binary(p))
        assert probs[0] == pytest.approx(born_probability(rho, p), abs=1e-15)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_qutrit_basis(self):
        layout = SubsystemLayout.of(q=3)
        fam = OutcomeFamily.computational(layout, "q", ["a", "b", "c"])
        probs = family_probabilities(DensityMatrix.from_diagonal([0.5, 0.3, 0.2]), fam)
        assert_allclose(probs, [0.5, 0.3, 0.2], atol=1e-15)

    def test_mixed_qubit(self):
        fam = OutcomeFamily.computational(SubsystemLayout.of(q=2), "q", ["0", "1"])
        assert_allclose(family_probabilities(DensityMatrix.maximally_mixed(2), fam), [0.5, 0.5])

    def test_embedded_register(self):
        layout = SubsystemLayout.of(a=2, b=3)
        fam = OutcomeFamily.computational(layout, "b", ["x", "y", "z"])
        rho = tensor_product(DensityMatrix.maximally_mixed(2), DensityMatrix.from_diagonal([0.2, 0.3, 0.5]))
        assert_allclose(family_probabilities(rho, fam), [0.2, 0.3, 0.5], atol=1e-15)

    def test_incomplete(self):
        with pytest.raises(FamilyIncomplete):
            OutcomeFamily((("a", basis_projector(3, 0)), ("b", basis_projector(3, 1))))

    def test_overlapping(self):
        with pytest.raises(FamilyIncomplete):
            OutcomeFamily((("a", basis_projector(2, [0, 1])), ("b", basis_projector(2, 1))))


class TestConditional:
    def test_product_state(self):
        rho = tensor_product(DIAG73, DensityMatrix.maximally_mixed(2))
        p = Projector(np.kron(np.diag([1, 0]), np.eye(2)))
        q = Projector(np.kron(np.eye(2), np.diag([1, 0])))
        assert conditional_probability(rho, p, q) == pytest.approx(0.7, abs=1e-12)

    def test_vacuous_condition(self, rng):
        rho, p = random_density_matrix(4, rng), basis_projector(4, [0, 2])
        assert conditional_probability(rho, p, Projector(np.eye(4))) == pytest.approx(born_probability(rho, p), abs=1e-12)

    def test_self_condition(self, rng):
        rho = random_density_matrix(3, rng)
        p = basis_projector(3, 1)
        assert conditional_probability(rho, p, p) == pytest.approx(1.0, abs=1e-12)

    def test_non_commuting(self):
        plus = Projector.onto([[1, 1]])
        with pytest.raises(NonCommutingCondition):
            conditional_probability(DensityMatrix.maximally_mixed(2), basis_projector(2, 0), plus)

    def test_zero_condition(self):
        with pytest.raises(ZeroProbabilityOutcome):
            conditional_probability(DensityMatrix.from_diagonal([1, 0]), basis_projector(2, 0), basis_projector(2, 1))

    def test_independence_on_random_product_states(self, rng):
        for _ in range(100):
            da, db = (int(x) for x in rng.integers(2, 5, size=2))
            rho_a, rho_b = random_density_matrix(da, rng), random_density_matrix(db, rng)
            pa, qb = random_projector(da, rng), random_projector(db, rng)
            if born_probability(rho_b, qb) < 1e-6:
                continue
            rho = tensor_product(rho_a, rho_b)
            p = Projector(np.kron(pa.data, np.eye(db)))
            q = Projector(np.kron(np.eye(da), qb.data))
            assert abs(conditional_probability(rho, p, q) - born_probability(rho_a, pa)) < 1e-9


class TestEffectivePast:
    def test_zero_steps(self, rng):
        rho = random_density_matrix(3, rng)
        assert effective_past(rho, [random_unitary(3, rng)], 0) is rho

    def test_identity_schedule(self, rng):
        rho = random_density_matrix(3, rng)
        out = effective_past(rho, [UnitaryOp.identity(3)] * 3, 3)
        assert out.allclose(rho, 1e-15)

    def test_round_trip(self, rng):
        schedule = [random_unitary(4, rng), random_unitary(4, rng)]
        rho = random_density_matrix(4, rng)
        past = effective_past(rho, schedule, 2)
        assert evolve(past, schedule).allclose(rho, 1e-12)

    def test_partial_steps(self, rng):
        schedule = [random_unitary(2, rng) for _ in range(3)]
        rho = random_density_matrix(2, rng)
        past = effective_past(rho, schedule, 2)
        assert evolve(past, schedule[1:]).allclose(rho, 1e-12)

    def test_out_of_range(self, rng):
        with pytest.raises(ScheduleMismatch):
            effective_past(random_density_matrix(2, rng), [UnitaryOp.identity(2)], 2)


def test_later_interaction_leaves_early_probability_intact(rng):
    """Measuring P, then interacting and measuring R, keeps P's marginal."""
    for _ in range(100):
        da, db = (int(x) for x in rng.integers(2, 4, size=2))
        layout = SubsystemLayout.of(a=da, b=db)
        rho = tensor_product(random_density_matrix(da, rng), random_density_matrix(db, rng))
        p_local = random_projector(da, rng)
        p = Projector(layout.embed(p_local.data, "a"))
        before = born_probability(rho, p)
        r = random_projector(da * db, rng)
        steps = [(None, OutcomeFamily.binary(p)), (random_unitary(da * db, rng), OutcomeFamily.binary(r, "R", "R'"))]
        weights = history_weights(rho, steps)
        after = sum(w for labels, w in weights.items() if labels[0] == "Yes")
        assert abs(before - after) < 1e-9


def test_measurement_record_invariants():
    rec = MeasurementRecord(0, "P", "L", 0.5, 0.5)
    assert rec.applied_weight == rec.born_probability
    with pytest.raises(ValueError):
        MeasurementRecord(0, "P", "L", 1.5, 0.5)
    with pytest.raises(ValueError):
        MeasurementRecord(-1, "P", "L", 0.5, 0.5)
