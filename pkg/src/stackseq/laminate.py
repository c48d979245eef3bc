"""Domain model for laminate stacking sequences.

A laminate is an ordered stack of fiber plies, each oriented at one of a
small set of allowed angles.  Its stiffness-relevant content is summarized
by lamination parameters: trigonometric moments of the ply angles weighted
by through-thickness position.  This module provides

* the discrete design variable (integer label sequences over an angle set),
* the lamination-parameter map for symmetric and general stacks,
* the mean-square loss against target parameters,
* manufacturing-constraint penalties (disorientation, contiguity, balance,
  minimum ply share), and
* the dihedral symmetry group of evenly spaced angle sets together with the
  induced transform on lamination parameters.

Angles are degrees in the half-open interval (-90, 90] at the interface;
trigonometry happens in radians internally.  Ply labels are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

import numpy as np

from .errors import DomainError, UnsupportedAngleSetError

ANGLE_TOL_DEG = 1e-9


def _circular_distance_deg(a: float, b: float) -> float:
    """Distance between two ply angles on the 180-degree orientation circle."""
    delta = abs(a - b) % 180.0
    return min(delta, 180.0 - delta)


@dataclass(frozen=True)
class AngleSet:
    """Allowed ply orientations, in degrees.

    Labels are 1-based positions into ``angles_deg``: label ``s`` means
    angle ``angles_deg[s - 1]``.

    Parameters
    ----------
    angles_deg:
        Pairwise distinct angles, each in (-90, 90].
    """

    angles_deg: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles_deg)
        object.__setattr__(self, "angles_deg", angles)
        if len(angles) < 2:
            raise DomainError("an angle set needs at least two angles")
        for a in angles:
            if not (-90.0 < a <= 90.0 + ANGLE_TOL_DEG) or not math.isfinite(a):
                raise DomainError(f"angle {a} outside (-90, 90]")
        for i, a in enumerate(angles):
            for b in angles[i + 1 :]:
                if _circular_distance_deg(a, b) < ANGLE_TOL_DEG:
                    raise DomainError(f"angles {a} and {b} coincide")

    @classmethod
    def canonical(cls) -> "AngleSet":
        """The conventional four-angle set 0, +45, 90, -45 degrees."""
        return cls((0.0, 45.0, 90.0, -45.0))

    @property
    def d(self) -> int:
        """Number of allowed orientations (the local physical dimension)."""
        return len(self.angles_deg)

    @property
    def angles_rad(self) -> tuple[float, ...]:
        return tuple(math.radians(a) for a in self.angles_deg)

    @property
    def evenly_spaced(self) -> bool:
        """True if consecutive labels step by 180/d degrees on the circle.

        Even spacing in label order is what makes label rotation
        ``s -> s + c`` act as a rigid rotation of all ply angles.
        """
        step = 180.0 / self.d
        angles = self.angles_deg
        for i in range(self.d):
            a, b = angles[i], angles[(i + 1) % self.d]
            if abs(((b - a) % 180.0) - step) > ANGLE_TOL_DEG:
                return False
        return True

    def angle_of(self, label: int) -> float:
        if not 1 <= label <= self.d:
            raise DomainError(f"label {label} outside 1..{self.d}")
        return self.angles_deg[label - 1]

    def feature_table(self) -> np.ndarray:
        """Per-label trigonometric features, shape ``(d, 4)``.

        Columns are cos(2t), sin(2t), cos(4t), sin(4t) for ply angle t.
        """
        theta = np.radians(np.asarray(self.angles_deg))
        table = np.column_stack(
            [np.cos(2 * theta), np.sin(2 * theta), np.cos(4 * theta), np.sin(4 * theta)]
        )
        table.setflags(write=False)
        return table


def ply_functions(angle_set: AngleSet, label: int) -> tuple[float, float, float, float]:
    """The four trigonometric ply functions evaluated at one label."""
    theta = math.radians(angle_set.angle_of(label))
    return (
        math.cos(2 * theta),
        math.sin(2 * theta),
        math.cos(4 * theta),
        math.sin(4 * theta),
    )


@dataclass(frozen=True)
class StackingSequence:
    """An ordered stack of ply labels, innermost ply first."""

    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise DomainError("a stacking sequence needs at least one ply")
        if any(s < 1 for s in labels):
            raise DomainError("ply labels are 1-based positive integers")

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "StackingSequence":
        return cls(tuple(int(s) for s in labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[int]:
        return iter(self.labels)

    def __getitem__(self, i):
        return self.labels[i]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    def angles_deg(self, angle_set: AngleSet) -> tuple[float, ...]:
        return tuple(angle_set.angle_of(s) for s in self.labels)


BLOCKS_SYMMETRIC = ("A", "D")
BLOCKS_GENERAL = ("A", "B", "D")


@dataclass(frozen=True, eq=False)
class PlyWeights:
    """Through-thickness weights of each ply in each stiffness block.

    ``values[i, n]`` is the weight of ply ``n + 1`` in block ``blocks[i]``.
    For the in-plane (A) and bending (D) blocks the absolute weights sum to
    one.  The coupling (B) block of a general stack sums to one for even ply
    counts; for odd counts the midplane ply carries zero B weight and the
    absolute sum is (N^2 - 1) / N^2.
    """

    blocks: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.blocks):
            raise DomainError("weights must be one row per block")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        for name, row in zip(self.blocks, values):
            total = float(np.sum(np.abs(row)))
            if name in ("A", "D") and abs(total - 1.0) > 1e-12:
                raise DomainError(f"|{name}| weights sum to {total}, expected 1")

    @classmethod
    def symmetric(cls, n_plies: int) -> "PlyWeights":
        """Weights for a symmetric stack of ``2 * n_plies`` physical plies.

        Only half the stack is free; ply n sits between normalized heights
        n - 1 and n above the midplane.  The coupling block vanishes by
        symmetry and is omitted.
        """
        n = np.arange(1, n_plies + 1, dtype=float)
        alpha_a = np.full(n_plies, 1.0 / n_plies)
        alpha_d = (n**3 - (n - 1) ** 3) / n_plies**3
        return cls(BLOCKS_SYMMETRIC, np.vstack([alpha_a, alpha_d]))

    @classmethod
    def general(cls, n_plies: int) -> "PlyWeights":
        """Weights for an unconstrained stack with midplane at N/2."""
        z = -n_plies / 2.0 + np.arange(0, n_plies + 1, dtype=float)
        alpha_a = (z[1:] - z[:-1]) / n_plies
        alpha_b = 2.0 * (z[1:] ** 2 - z[:-1] ** 2) / n_plies**2
        alpha_d = 4.0 * (z[1:] ** 3 - z[:-1] ** 3) / n_plies**3
        return cls(BLOCKS_GENERAL, np.vstack([alpha_a, alpha_b, alpha_d]))

    @property
    def n_plies(self) -> int:
        return self.values.shape[1]

    def for_block(self, block: str) -> np.ndarray:
        try:
            i = self.blocks.index(block)
        except ValueError:
            raise DomainError(f"no block {block!r} in {self.blocks}") from None
        return self.values[i]

    def abs_sum(self, block: str) -> float:
        return float(np.sum(np.abs(self.for_block(block))))


@dataclass(frozen=True, eq=False)
class LaminationPoint:
    """A point in lamination-parameter space.

    ``values[i, l - 1]`` is component ``l`` (1-based, one per ply function)
    of block ``blocks[i]``.  All components lie in [-1, 1].
    """

    blocks: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.blocks), 4):
            raise DomainError(
                f"expected shape ({len(self.blocks)}, 4), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("lamination parameters must be finite")
        if np.any(np.abs(values) > 1.0 + 1e-9):
            raise DomainError("lamination parameters lie in [-1, 1]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_vector(cls, blocks: tuple[str, ...], vector) -> "LaminationPoint":
        arr = np.asarray(vector, dtype=float).reshape(len(blocks), 4)
        return cls(tuple(blocks), arr)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "LaminationPoint":
        blocks = tuple(sorted({x for x, _ in mapping}, key="ABD".index))
        values = np.zeros((len(blocks), 4))
        for (x, l), v in mapping.items():
            values[blocks.index(x), l - 1] = v
        return cls(blocks, values)

    @property
    def vector(self) -> np.ndarray:
        return self.values.reshape(-1)

    def component(self, block: str, l: int) -> float:
        if not 1 <= l <= 4:
            raise DomainError(f"component index {l} outside 1..4")
        try:
            i = self.blocks.index(block)
        except ValueError:
            raise DomainError(f"no block {block!r} in {self.blocks}") from None
        return float(self.values[i, l - 1])

    def as_mapping(self) -> dict[tuple[str, int], float]:
        return {
            (x, l): float(self.values[i, l - 1])
            for i, x in enumerate(self.blocks)
            for l in range(1, 5)
        }


# ---------------------------------------------------------------------------
# Manufacturing constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Disorientation:
    """Adjacent plies may differ by at most ``max_delta_deg`` on the circle."""

    max_delta_deg: float
    gamma: float

    def __post_init__(self):
        if self.max_delta_deg <= 0:
            raise DomainError("max_delta_deg must be positive")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")

    kind = "disorientation"

    def violating_pairs(self, angle_set: AngleSet) -> frozenset[tuple[int, int]]:
        """Ordered label pairs whose angle difference exceeds the limit."""
        pairs = set()
        for a in range(1, angle_set.d + 1):
            for b in range(1, angle_set.d + 1):
                dist = _circular_distance_deg(angle_set.angle_of(a), angle_set.angle_of(b))
                if dist > self.max_delta_deg + ANGLE_TOL_DEG:
                    pairs.add((a, b))
        return frozenset(pairs)

    def measure(self, labels: np.ndarray, angle_set: AngleSet):
        labels = np.asarray(labels)
        batched = labels.ndim == 2
        labels = np.atleast_2d(labels)
        table = self.violation_table(angle_set)
        counts = table[labels[:, :-1] - 1, labels[:, 1:] - 1].sum(axis=1)
        return counts if batched else int(counts[0])

    def violation_table(self, angle_set: AngleSet) -> np.ndarray:
        """Boolean (d, d) lookup: entry [a-1, b-1] marks a violating pair."""
        d = angle_set.d
        table = np.zeros((d, d), dtype=np.int64)
        for a, b in self.violating_pairs(angle_set):
            table[a - 1, b - 1] = 1
        return table


@dataclass(frozen=True)
class Contiguity:
    """At most ``max_same`` consecutive plies may share an orientation."""

    max_same: int
    gamma: float

    def __post_init__(self):
        if self.max_same < 1:
            raise DomainError("max_same must be at least 1")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")

    kind = "contiguity"

    @property
    def window(self) -> int:
        """Length of an offending run window (max_same + 1)."""
        return self.max_same + 1

    def measure(self, labels: np.ndarray, angle_set: AngleSet | None = None):
        labels = np.asarray(labels)
        batched = labels.ndim == 2
        labels = np.atleast_2d(labels)
        n = labels.shape[1]
        k = self.window
        counts = np.zeros(labels.shape[0], dtype=np.int64)
        if n >= k:
            eq = labels[:, 1:] == labels[:, :-1]
            for i in range(n - k + 1):
                counts += np.logical_and.reduce(eq[:, i : i + k - 1], axis=1)
        return counts if batched else int(counts[0])


@dataclass(frozen=True)
class Balanced:
    """Two orientations must appear equally often; penalty is the squared gap."""

    state_a: int
    state_b: int
    gamma: float

    def __post_init__(self):
        if self.state_a < 1 or self.state_b < 1 or self.state_a == self.state_b:
            raise DomainError("balanced constraint needs two distinct labels")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")

    kind = "balanced"

    def measure(self, labels: np.ndarray, angle_set: AngleSet | None = None):
        labels = np.asarray(labels)
        batched = labels.ndim == 2
        labels = np.atleast_2d(labels)
        gap = (labels == self.state_a).sum(axis=1) - (labels == self.state_b).sum(axis=1)
        counts = gap**2
        return counts if batched else int(counts[0])


@dataclass(frozen=True)
class MinCount:
    """At least ``min_plies`` plies of one orientation; linear shortfall penalty."""

    state: int
    min_plies: int
    gamma: float

    def __post_init__(self):
        if self.state < 1:
            raise DomainError("state is a 1-based label")
        if self.min_plies < 1:
            raise DomainError("min_plies must be at least 1")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")

    kind = "min_count"

    def measure(self, labels: np.ndarray, angle_set: AngleSet | None = None):
        labels = np.asarray(labels)
        batched = labels.ndim == 2
        labels = np.atleast_2d(labels)
        shortfall = self.min_plies - (labels == self.state).sum(axis=1)
        counts = np.maximum(shortfall, 0)
        return counts if batched else int(counts[0])


ConstraintSpec = Union[Disorientation, Contiguity, Balanced, MinCount]

_CONSTRAINT_KINDS = {
    "disorientation": Disorientation,
    "contiguity": Contiguity,
    "balanced": Balanced,
    "min_count": MinCount,
}


def constraint_from_dict(data: dict) -> ConstraintSpec:
    """Build a constraint from its JSON form, e.g. from a CLI config."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _CONSTRAINT_KINDS:
        raise DomainError(f"unknown constraint kind {kind!r}")
    try:
        return _CONSTRAINT_KINDS[kind](**data)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind}: {exc}") from None


def constraint_to_dict(spec: ConstraintSpec) -> dict:
    out = {"kind": spec.kind}
    for name in spec.__dataclass_fields__:
        out[name] = getattr(spec, name)
    return out


def penalty_value(spec: ConstraintSpec, seq: StackingSequence, angle_set: AngleSet) -> float:
    """Penalty contribution of one constraint: gamma times its raw measure."""
    return spec.gamma * float(spec.measure(seq.array, angle_set))


# ---------------------------------------------------------------------------
# Problem definition and evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SsrProblem:
    """A stacking-sequence retrieval instance.

    Fields
    ------
    angle_set:
        Allowed ply orientations.
    n_plies:
        Number of free plies N (half the stack in symmetric mode).
    symmetric:
        Symmetric stacks use blocks (A, D); general stacks use (A, B, D).
    target:
        Target lamination point, blocks matching the mode.
    constraints:
        Manufacturing constraints, each carrying its own penalty weight.
    weights:
        Ply weights; derived from the mode unless supplied.
    """

    angle_set: AngleSet
    n_plies: int
    symmetric: bool
    target: LaminationPoint
    constraints: tuple[ConstraintSpec, ...] = ()
    weights: PlyWeights = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n_plies < 1:
            raise DomainError("n_plies must be at least 1")
        expected = BLOCKS_SYMMETRIC if self.symmetric else BLOCKS_GENERAL
        if self.weights is None:
            maker = PlyWeights.symmetric if self.symmetric else PlyWeights.general
            object.__setattr__(self, "weights", maker(self.n_plies))
        if self.weights.blocks != expected:
            raise DomainError(f"weights blocks {self.weights.blocks} != {expected}")
        if self.weights.n_plies != self.n_plies:
            raise DomainError("weights length differs from n_plies")
        if self.target.blocks != expected:
            raise DomainError(f"target blocks {self.target.blocks} != {expected}")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        d = self.angle_set.d
        for spec in self.constraints:
            for attr in ("state", "state_a", "state_b"):
                label = getattr(spec, attr, None)
                if label is not None and label > d:
                    raise DomainError(f"{spec.kind} label {label} exceeds d={d}")
            if isinstance(spec, MinCount) and spec.min_plies > self.n_plies:
                raise DomainError("min_plies exceeds the ply count")

    @property
    def d(self) -> int:
        return self.angle_set.d

    @property
    def blocks(self) -> tuple[str, ...]:
        return self.target.blocks

    @property
    def n_components(self) -> int:
        """Number of targeted lamination-parameter components."""
        return 4 * len(self.blocks)

    def validate_sequence(self, seq: StackingSequence) -> None:
        if len(seq) != self.n_plies:
            raise DomainError(f"sequence has {len(seq)} plies, expected {self.n_plies}")
        if any(s > self.d for s in seq):
            raise DomainError(f"labels exceed d={self.d}")


def lamination_parameters(problem: SsrProblem, seq: StackingSequence) -> LaminationPoint:
    """Map a stack to its lamination-parameter point."""
    problem.validate_sequence(seq)
    features = problem.angle_set.feature_table()[seq.array - 1]  # (N, 4)
    values = problem.weights.values @ features  # (n_blocks, 4)
    return LaminationPoint(problem.blocks, values)


def loss(problem: SsrProblem, seq: StackingSequence) -> float:
    """Squared Euclidean distance to the target in parameter space."""
    point = lamination_parameters(problem, seq)
    return float(np.sum((point.values - problem.target.values) ** 2))


def euclidean_distance(problem: SsrProblem, seq: StackingSequence) -> float:
    return math.sqrt(loss(problem, seq))


def rmse(problem: SsrProblem, seq: StackingSequence) -> float:
    """Root-mean-square error per targeted component (default reporting scale)."""
    return math.sqrt(loss(problem, seq) / problem.n_components)


def total_penalty(problem: SsrProblem, seq: StackingSequence) -> float:
    problem.validate_sequence(seq)
    return sum(penalty_value(spec, seq, problem.angle_set) for spec in problem.constraints)


def total_value(problem: SsrProblem, seq: StackingSequence) -> float:
    """Loss plus all constraint penalties: the objective the solver minimizes."""
    return loss(problem, seq) + total_penalty(problem, seq)


def violation_counts(problem: SsrProblem, seq: StackingSequence) -> dict[str, int]:
    """Raw (unweighted) violation measure per constraint, keyed by kind."""
    problem.validate_sequence(seq)
    out: dict[str, int] = {}
    for i, spec in enumerate(problem.constraints):
        key = spec.kind if spec.kind not in out else f"{spec.kind}#{i}"
        out[key] = int(spec.measure(seq.array, problem.angle_set))
    return out


def is_valid(problem: SsrProblem, seq: StackingSequence) -> bool:
    return all(v == 0 for v in violation_counts(problem, seq).values())


# ---------------------------------------------------------------------------
# Dihedral symmetry of evenly spaced angle sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DihedralElement:
    """One element of the order-2d dihedral group acting on ply labels.

    The action on a 0-based label index i is ``shift + i`` for rotations and
    ``shift - i`` for reflections, mod d.
    """

    shift: int
    reflect: bool

    def apply_label(self, label: int, d: int) -> int:
        i = label - 1
        j = (self.shift - i) % d if self.reflect else (self.shift + i) % d
        return j + 1

    def apply(self, seq: StackingSequence, d: int) -> StackingSequence:
        return StackingSequence(tuple(self.apply_label(s, d) for s in seq))


def dihedral_elements(d: int) -> tuple[DihedralElement, ...]:
    """All 2d label symmetries: d rotations and d reflections."""
    return tuple(
        DihedralElement(shift, reflect)
        for reflect in (False, True)
        for shift in range(d)
    )


def symmetry_orbit(seq: StackingSequence, d: int) -> frozenset[StackingSequence]:
    """Orbit of a sequence under the dihedral label group."""
    if any(s > d for s in seq):
        raise DomainError(f"labels exceed d={d}")
    return frozenset(g.apply(seq, d) for g in dihedral_elements(d))


def orbit_representative(seq: StackingSequence, d: int) -> StackingSequence:
    """Canonical (lexicographically smallest) member of the orbit."""
    return min(symmetry_orbit(seq, d), key=lambda s: s.labels)


def target_transform(element: DihedralElement, angle_set: AngleSet) -> np.ndarray:
    """Orthogonal 4x4 matrix acting on each block of a lamination point.

    For an evenly spaced angle set, the label action of ``element`` moves
    every ply angle by t -> eps * t + chi with eps = -1 for reflections.
    The induced map on the feature vector (cos 2t, sin 2t, cos 4t, sin 4t)
    is block rotation by 2*chi and 4*chi composed with sign flips of the
    sine components when eps = -1.
    """
    if not angle_set.evenly_spaced:
        raise UnsupportedAngleSetError("symmetry transforms need even spacing")
    d = angle_set.d
    step = math.radians(180.0 / d)
    theta1 = math.radians(angle_set.angle_of(1))
    eps = -1.0 if element.reflect else 1.0
    chi = element.shift * step + theta1 * (1.0 - eps)
    out = np.zeros((4, 4))
    for block, mult in ((0, 2.0), (2, 4.0)):
        c, s = math.cos(mult * chi), math.sin(mult * chi)
        out[block : block + 2, block : block + 2] = [[c, -eps * s], [s, eps * c]]
    return out


def transform_target(
    element: DihedralElement, angle_set: AngleSet, point: LaminationPoint
) -> LaminationPoint:
    """Apply a dihedral element's parameter-space transform to a point."""
    matrix = target_transform(element, angle_set)
    return LaminationPoint(point.blocks, point.values @ matrix.T)


# ---------------------------------------------------------------------------
# JSON forms
# ---------------------------------------------------------------------------


def target_to_dict(point: LaminationPoint) -> dict:
    """JSON form of a lamination point: block letter to four components."""
    return {
        block: [float(v) for v in point.values[i]]
        for i, block in enumerate(point.blocks)
    }


def target_from_dict(data: dict) -> LaminationPoint:
    if not data or any(b not in "ABD" for b in data):
        raise DomainError(f"target blocks must be among A, B, D, got {sorted(data)}")
    blocks = tuple(sorted(data, key="ABD".index))
    return LaminationPoint(blocks, np.array([data[b] for b in blocks], dtype=float))


def problem_to_dict(problem: SsrProblem) -> dict:
    return {
        "angles": list(problem.angle_set.angles_deg),
        "n_plies": problem.n_plies,
        "symmetric": problem.symmetric,
        "target": target_to_dict(problem.target),
        "constraints": [constraint_to_dict(c) for c in problem.constraints],
    }


def problem_from_dict(data: dict, target: LaminationPoint | None = None) -> SsrProblem:
    """Build a problem from its JSON form.

    ``target`` overrides any target in ``data``; with neither present the
    zero point stands in, which suits workflows that attach targets later.
    """
    angles = data.get("angles")
    angle_set = AngleSet(tuple(angles)) if angles is not None else AngleSet.canonical()
    symmetric = bool(data.get("symmetric", True))
    blocks = BLOCKS_SYMMETRIC if symmetric else BLOCKS_GENERAL
    if target is None:
        if data.get("target") is not None:
            target = target_from_dict(data["target"])
        else:
            target = LaminationPoint(blocks, np.zeros((len(blocks), 4)))
    constraints = tuple(constraint_from_dict(c) for c in data.get("constraints", ()))
    return SsrProblem(
        angle_set=angle_set,
        n_plies=int(data["n_plies"]),
        symmetric=symmetric,
        target=target,
        constraints=constraints,
    )
