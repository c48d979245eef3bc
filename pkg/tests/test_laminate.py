import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackseq import (
    AngleSet,
    Balanced,
    Contiguity,
    DihedralElement,
    Disorientation,
    DomainError,
    LaminationPoint,
    MinCount,
    PlyWeights,
    SsrProblem,
    StackingSequence,
    dihedral_elements,
    euclidean_distance,
    is_valid,
    lamination_parameters,
    loss,
    orbit_representative,
    problem_from_dict,
    problem_to_dict,
    rmse,
    symmetry_orbit,
    target_transform,
    total_penalty,
    total_value,
    transform_target,
    violation_counts,
)
from stackseq.laminate import constraint_from_dict, constraint_to_dict, penalty_value

from .conftest import reachable_problem, zero_point

sequences = st.lists(st.integers(1, 4), min_size=1, max_size=12).map(
    lambda xs: StackingSequence(tuple(xs))
)


class TestAngleSet:
    def test_canonical(self):
        a = AngleSet.canonical()
        assert a.angles_deg == (0.0, 45.0, 90.0, -45.0)
        assert a.d == 4
        assert a.evenly_spaced

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            AngleSet((0.0, 120.0))
        with pytest.raises(DomainError):
            AngleSet((-90.0, 0.0))  # -90 is the excluded endpoint

    def test_rejects_duplicates_mod_180(self):
        with pytest.raises(DomainError):
            AngleSet((90.0, -90.0 + 1e-12))

    def test_feature_table(self):
        table = AngleSet.canonical().feature_table()
        expected = np.array(
            [
                [1.0, 0.0, 1.0, 0.0],
                [0.0, 1.0, -1.0, 0.0],
                [-1.0, 0.0, 1.0, 0.0],
                [0.0, -1.0, -1.0, 0.0],
            ]
        )
        np.testing.assert_allclose(table, expected, atol=1e-15)

    def test_uneven_spacing_detected(self):
        assert not AngleSet((0.0, 30.0, 90.0, -45.0)).evenly_spaced


class TestPlyWeights:
    def test_symmetric_d_block(self):
        w = PlyWeights.symmetric(4)
        np.testing.assert_allclose(w.for_block("D"), np.array([1, 7, 19, 37]) / 64)
        np.testing.assert_allclose(w.for_block("A"), np.full(4, 0.25))

    def test_abs_sums(self):
        for n in (1, 2, 3, 8, 9):
            ws = PlyWeights.symmetric(n)
            assert ws.abs_sum("A") == pytest.approx(1.0)
            assert ws.abs_sum("D") == pytest.approx(1.0)
            wg = PlyWeights.general(n)
            assert wg.abs_sum("A") == pytest.approx(1.0)
            assert wg.abs_sum("D") == pytest.approx(1.0)

    def test_general_b_block_odd_even(self):
        # midplane ply of an odd stack carries no B weight
        wg3 = PlyWeights.general(3)
        np.testing.assert_allclose(wg3.for_block("B"), [-4 / 9, 0.0, 4 / 9], atol=1e-15)
        assert wg3.abs_sum("B") == pytest.approx(8 / 9)
        wg2 = PlyWeights.general(2)
        np.testing.assert_allclose(wg2.for_block("B"), [-0.5, 0.5])
        assert wg2.abs_sum("B") == pytest.approx(1.0)


class TestLaminationParameters:
    def test_frozen_example_n4(self, angles):
        problem = SsrProblem(angles, 4, True, zero_point())
        point = lamination_parameters(problem, StackingSequence((1, 2, 3, 4)))
        np.testing.assert_allclose(point.values[0], np.zeros(4), atol=1e-15)
        np.testing.assert_allclose(
            point.values[1], [-0.28125, -0.46875, -0.375, 0.0], atol=1e-15
        )

    def test_all_zero_plies(self, angles):
        problem = SsrProblem(angles, 6, True, zero_point())
        seq = StackingSequence((1,) * 6)
        assert loss(problem, seq) == pytest.approx(4.0)
        assert rmse(problem, seq) == pytest.approx(math.sqrt(4.0 / 8.0))
        assert euclidean_distance(problem, seq) == pytest.approx(2.0)

    def test_general_b_component(self, angles):
        prob = SsrProblem(angles, 2, False, zero_point(symmetric=False))
        point = lamination_parameters(prob, StackingSequence((1, 2)))
        np.testing.assert_allclose(point.component("B", 1), -0.5)
        np.testing.assert_allclose(point.component("B", 2), 0.5)
        np.testing.assert_allclose(point.component("B", 3), -1.0)

    @given(sequences)
    @settings(max_examples=50, deadline=None)
    def test_components_bounded(self, seq):
        angles = AngleSet.canonical()
        problem = SsrProblem(angles, len(seq), True, zero_point())
        point = lamination_parameters(problem, seq)
        assert np.all(np.abs(point.values) <= 1.0 + 1e-12)

    def test_loss_zero_iff_target_hit(self, angles):
        problem, seq = reachable_problem(angles, 6, seed=3)
        assert loss(problem, seq) <= 1e-28
        other = StackingSequence((1,) * 6)
        if other != seq:
            assert loss(problem, other) > 0


class TestLaminationPoint:
    def test_validation(self):
        with pytest.raises(DomainError):
            LaminationPoint(("A", "D"), np.full((2, 4), 1.5))
        with pytest.raises(DomainError):
            LaminationPoint(("A",), np.zeros((2, 4)))

    def test_mapping_round_trip(self):
        point = LaminationPoint(("A", "D"), np.linspace(-0.5, 0.5, 8).reshape(2, 4))
        again = LaminationPoint.from_mapping(point.as_mapping())
        assert again.blocks == point.blocks
        np.testing.assert_allclose(again.values, point.values)


class TestConstraints:
    def test_disorientation_measure(self, angles):
        spec = Disorientation(45.0, 0.25)
        seq = StackingSequence((1, 3, 2, 4, 1))
        assert penalty_value(spec, seq, angles) == pytest.approx(0.5)
        assert spec.measure(seq.array, angles) == 2

    def test_disorientation_violating_pairs(self, angles):
        pairs = Disorientation(45.0, 1.0).violating_pairs(angles)
        assert pairs == {(1, 3), (3, 1), (2, 4), (4, 2)}

    def test_contiguity_measure(self, angles):
        spec = Contiguity(2, 1.0)
        assert spec.measure(np.array([1, 1, 1, 1])) == 2
        assert spec.measure(np.array([1, 1, 2, 2])) == 0
        assert spec.measure(np.array([1, 1])) == 0  # shorter than the window

    def test_balanced_measure(self, angles):
        spec = Balanced(2, 4, 1.0)
        assert spec.measure(np.array([2, 2, 2, 4, 1])) == 4
        assert spec.measure(np.array([2, 4, 1, 1])) == 0

    def test_min_count_measure(self, angles):
        spec = MinCount(1, 2, 1.0)
        assert spec.measure(np.array([2, 2, 2, 4, 1])) == 1
        assert spec.measure(np.array([1, 1, 2, 2])) == 0

    def test_batch_measures_keep_shape(self, angles):
        labels = np.array([[1, 3, 2, 4, 1]])
        for spec in (Disorientation(45.0, 1.0), Contiguity(2, 1.0), Balanced(2, 4, 1.0), MinCount(1, 2, 1.0)):
            out = spec.measure(labels, angles)
            assert out.shape == (1,)

    def test_dict_round_trip(self):
        for spec in (
            Disorientation(45.0, 0.25),
            Contiguity(3, 0.1),
            Balanced(2, 4, 1.0),
            MinCount(1, 3, 0.5),
        ):
            assert constraint_from_dict(constraint_to_dict(spec)) == spec

    def test_unknown_kind_rejected(self):
        with pytest.raises(DomainError):
            constraint_from_dict({"kind": "mystery", "gamma": 1.0})

    def test_validation(self):
        with pytest.raises(DomainError):
            Contiguity(0, 1.0)
        with pytest.raises(DomainError):
            Balanced(2, 2, 1.0)
        with pytest.raises(DomainError):
            Disorientation(-5.0, 1.0)
        with pytest.raises(DomainError):
            MinCount(1, 0, 1.0)


class TestProblemEvaluation:
    def test_total_value_decomposes(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 8, seed=9, constraints=all_penalties)
        rng = np.random.default_rng(2)
        for _ in range(20):
            seq = StackingSequence(tuple(int(s) for s in rng.integers(1, 5, 8)))
            assert total_value(problem, seq) == pytest.approx(
                loss(problem, seq) + total_penalty(problem, seq)
            )

    def test_violation_counts_and_validity(self, angles):
        problem = SsrProblem(
            angles, 5, True, zero_point(),
            (Disorientation(45.0, 0.25), MinCount(1, 2, 0.25)),
        )
        counts = violation_counts(problem, StackingSequence((1, 3, 2, 4, 1)))
        assert counts == {"disorientation": 2, "min_count": 0}
        assert not is_valid(problem, StackingSequence((1, 3, 2, 4, 1)))
        assert is_valid(problem, StackingSequence((1, 1, 2, 3, 3)))

    def test_duplicate_kinds_get_suffixes(self, angles):
        problem = SsrProblem(
            angles, 4, True, zero_point(),
            (MinCount(1, 1, 0.1), MinCount(2, 1, 0.1)),
        )
        counts = violation_counts(problem, StackingSequence((3, 3, 3, 3)))
        assert set(counts) == {"min_count", "min_count#1"}

    def test_constraint_label_validation(self, angles):
        with pytest.raises(DomainError):
            SsrProblem(angles, 4, True, zero_point(), (Balanced(2, 5, 1.0),))
        with pytest.raises(DomainError):
            SsrProblem(angles, 4, True, zero_point(), (MinCount(1, 5, 1.0),))

    def test_problem_dict_round_trip(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 6, seed=4, constraints=all_penalties)
        again = problem_from_dict(problem_to_dict(problem))
        assert again.n_plies == problem.n_plies
        assert again.constraints == problem.constraints
        np.testing.assert_allclose(again.target.values, problem.target.values)


class TestDihedral:
    def test_group_size(self):
        assert len(dihedral_elements(4)) == 8

    def test_constant_orbit(self):
        orbit = symmetry_orbit(StackingSequence((1, 1)), 4)
        assert orbit == {
            StackingSequence((1, 1)),
            StackingSequence((2, 2)),
            StackingSequence((3, 3)),
            StackingSequence((4, 4)),
        }

    def test_representative_is_orbit_min(self):
        seq = StackingSequence((3, 1, 4))
        rep = orbit_representative(seq, 4)
        orbit = symmetry_orbit(seq, 4)
        assert rep == min(orbit, key=lambda s: tuple(s))
        # every member maps to the same representative
        for member in orbit:
            assert orbit_representative(member, 4) == rep

    def test_transform_matrix_orthogonal(self, angles):
        for element in dihedral_elements(4):
            m = target_transform(element, angles)
            np.testing.assert_allclose(m @ m.T, np.eye(4), atol=1e-12)

    def test_loss_invariance(self, angles):
        rng = np.random.default_rng(8)
        for _ in range(10):
            problem, _ = reachable_problem(angles, 5, seed=int(rng.integers(1 << 30)))
            seq = StackingSequence(tuple(int(s) for s in rng.integers(1, 5, 5)))
            base = loss(problem, seq)
            for element in dihedral_elements(4):
                moved = SsrProblem(
                    angles, 5, True,
                    transform_target(element, angles, problem.target),
                )
                assert loss(moved, element.apply(seq, 4)) == pytest.approx(
                    base, abs=1e-12
                )

    def test_label_action(self):
        element = DihedralElement(shift=1, reflect=False)
        assert [element.apply_label(s, 4) for s in (1, 2, 3, 4)] == [2, 3, 4, 1]
        mirror = DihedralElement(shift=0, reflect=True)
        # 0-based i maps to -i mod d
        assert [mirror.apply_label(s, 4) for s in (1, 2, 3, 4)] == [1, 4, 3, 2]
