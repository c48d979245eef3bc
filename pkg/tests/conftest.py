import numpy as np
import pytest

from stackseq import (
    AngleSet,
    Balanced,
    Contiguity,
    Disorientation,
    LaminationPoint,
    MinCount,
    SsrProblem,
    StackingSequence,
    lamination_parameters,
)


@pytest.fixture(scope="session")
def angles():
    return AngleSet.canonical()


@pytest.fixture(scope="session")
def all_penalties():
    return (
        Disorientation(45.0, 0.25),
        Contiguity(2, 0.25),
        Balanced(2, 4, 0.25),
        MinCount(1, 2, 0.25),
    )


def zero_point(symmetric: bool = True) -> LaminationPoint:
    blocks = ("A", "D") if symmetric else ("A", "B", "D")
    return LaminationPoint(blocks, np.zeros((len(blocks), 4)))


def reachable_problem(
    angles: AngleSet,
    n_plies: int,
    seed: int,
    constraints=(),
    symmetric: bool = True,
) -> tuple[SsrProblem, StackingSequence]:
    """Problem whose target is hit exactly by a known random sequence."""
    rng = np.random.default_rng(seed)
    seq = StackingSequence(tuple(int(s) for s in rng.integers(1, angles.d + 1, n_plies)))
    probe = SsrProblem(angles, n_plies, symmetric, zero_point(symmetric))
    target = lamination_parameters(probe, seq)
    return SsrProblem(angles, n_plies, symmetric, target, constraints), seq


@pytest.fixture()
def small_problem(angles, all_penalties):
    problem, _ = reachable_problem(angles, 6, seed=17, constraints=all_penalties)
    return problem
