"""Qubit encoding of four-orientation stacking problems.

Each ply maps to two qubits via a Gray-style code (1 -> 00, 2 -> 01,
3 -> 11, 4 -> 10), ply n occupying qubits 2n-2 and 2n-1.  Diagonal
operators in the label basis expand over products of Pauli Z on those
qubits: a single-ply projector splits into four Z-monomials with
coefficients +-1/4, so the quadratic loss produces terms of weight at
most 4 and an adjacent-pair penalty stays within the same supports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError
from .laminate import Disorientation, SsrProblem, StackingSequence
from .oracle import all_sequences

#: bit pair (q1, q2) for each label 1..4
ENCODING_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.int64)

_COEFF_TOL = 1e-14


def encode(seq: StackingSequence | tuple[int, ...]) -> str:
    """Bitstring of a sequence, first ply's qubits first."""
    labels = tuple(seq)
    if any(not 1 <= s <= 4 for s in labels):
        raise EncodingError("encoding is defined for labels 1..4")
    return "".join(f"{ENCODING_BITS[s - 1][0]}{ENCODING_BITS[s - 1][1]}" for s in labels)


def decode(bits: str) -> StackingSequence:
    if len(bits) % 2 != 0 or any(b not in "01" for b in bits):
        raise EncodingError("bitstring length must be even and binary")
    lookup = {(int(b[0]), int(b[1])): s + 1 for s, b in enumerate(["00", "01", "11", "10"])}
    labels = []
    for i in range(0, len(bits), 2):
        labels.append(lookup[(int(bits[i]), int(bits[i + 1]))])
    return StackingSequence(tuple(labels))


@dataclass(frozen=True)
class PauliZTerm:
    """A product of Pauli Z over a qubit support, with a real coefficient."""

    support: frozenset[int]
    coefficient: float

    @property
    def weight(self) -> int:
        return len(self.support)


@dataclass
class PauliExpansion:
    """A diagonal Hamiltonian as offset plus Z-monomials.

    Terms have pairwise distinct nonempty supports, coefficients above
    1e-14 in magnitude, and canonical order (weight, then support).
    """

    n_qubits: int
    offset: float
    terms: list[PauliZTerm] = field(default_factory=list)

    def eigenvalue(self, bits: str | np.ndarray) -> float:
        """Value on a computational basis state given as bits."""
        arr = (
            np.array([int(b) for b in bits], dtype=np.int64)
            if isinstance(bits, str)
            else np.asarray(bits, dtype=np.int64)
        )
        if arr.shape != (self.n_qubits,):
            raise EncodingError(f"expected {self.n_qubits} bits")
        value = self.offset
        for term in self.terms:
            parity = sum(arr[q] for q in term.support) % 2
            value += term.coefficient * (1.0 if parity == 0 else -1.0)
        return value

    def dense_eigenvalues(self) -> np.ndarray:
        """Values over all label sequences in odometer order."""
        if self.n_qubits % 2 != 0:
            raise EncodingError("qubit count must be even (two per ply)")
        n_plies = self.n_qubits // 2
        labels = all_sequences(n_plies, 4)
        bits = ENCODING_BITS[labels - 1].reshape(labels.shape[0], -1)
        out = np.full(labels.shape[0], self.offset)
        for term in self.terms:
            parity = bits[:, sorted(term.support)].sum(axis=1) % 2
            out += term.coefficient * (1.0 - 2.0 * parity)
        return out

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "n_qubits": self.n_qubits,
            "offset": self.offset,
            "terms": [
                {"support": sorted(t.support), "coefficient": t.coefficient}
                for t in self.terms
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "PauliExpansion":
        if data.get("schema") != 1:
            raise EncodingError(f"unsupported expansion schema {data.get('schema')!r}")
        terms = [
            PauliZTerm(frozenset(t["support"]), float(t["coefficient"]))
            for t in data["terms"]
        ]
        return cls(int(data["n_qubits"]), float(data["offset"]), terms)


class _Accumulator:
    """Coefficient accumulation with support merging."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        self.coeffs: dict[frozenset[int], float] = {}

    def add(self, support: frozenset[int], coeff: float) -> None:
        if coeff == 0.0:
            return
        self.coeffs[support] = self.coeffs.get(support, 0.0) + coeff

    def finish(self) -> PauliExpansion:
        offset = self.coeffs.pop(frozenset(), 0.0)
        terms = [
            PauliZTerm(support, c)
            for support, c in self.coeffs.items()
            if abs(c) > _COEFF_TOL
        ]
        terms.sort(key=lambda t: (t.weight, tuple(sorted(t.support))))
        return PauliExpansion(self.n_qubits, offset, terms)


def _ply_transform() -> np.ndarray:
    """Matrix taking label values g(t) to Z coefficients on one ply.

    Row index (a, b) flattened as 2a + b selects which of the ply's two
    qubits carry a Z; row (0, 0) is the ply-local identity component.
    """
    t_mat = np.empty((4, 4))
    for a in range(2):
        for b in range(2):
            for label in range(4):
                q1, q2 = ENCODING_BITS[label]
                t_mat[2 * a + b, label] = 0.25 * (-1.0) ** (a * q1 + b * q2)
    return t_mat


_T = _ply_transform()


def _row_support(ply: int, row: int) -> frozenset[int]:
    """Qubit indices addressed by one row of the ply transform."""
    a, b = divmod(row, 2)
    support = []
    if a:
        support.append(2 * ply)
    if b:
        support.append(2 * ply + 1)
    return frozenset(support)


def _add_quadratic(acc: _Accumulator, h: np.ndarray) -> None:
    """Accumulate (sum_n h[n, s_n])^2 as Z-monomials."""
    n_plies = h.shape[0]
    lin = h @ _T.T  # (N, 4): per-ply Z coefficients of the linear form
    sq = (h**2) @ _T.T  # per-ply Z coefficients of the squared local values
    for n in range(n_plies):
        for row in range(4):
            acc.add(_row_support(n, row), sq[n, row])
    for n in range(n_plies):
        for n2 in range(n + 1, n_plies):
            for r1 in range(4):
                if lin[n, r1] == 0.0:
                    continue
                for r2 in range(4):
                    coeff = 2.0 * lin[n, r1] * lin[n2, r2]
                    acc.add(_row_support(n, r1) | _row_support(n2, r2), coeff)


def _add_pair_penalty(acc: _Accumulator, table: np.ndarray, n_plies: int, gamma: float) -> None:
    """Accumulate gamma * sum_n table[s_n, s_(n+1)] over adjacent plies."""
    c2 = gamma * (_T @ table @ _T.T)  # (4, 4) rows: ply n, cols: ply n+1
    for n in range(n_plies - 1):
        for r1 in range(4):
            for r2 in range(4):
                acc.add(_row_support(n, r1) | _row_support(n + 1, r2), c2[r1, r2])


def pauli_expand(problem: SsrProblem, include_disorientation: bool = True) -> PauliExpansion:
    """Z-monomial expansion of the loss, optionally with disorientation.

    The quadratic loss yields terms of weight at most 4.  Disorientation
    penalties act on adjacent ply pairs and stay within the supports the
    loss already uses.  Other constraint kinds are not encoded here and
    are simply left out of the expansion.
    """
    if problem.d != 4:
        raise EncodingError("the two-qubit code covers exactly four orientations")
    acc = _Accumulator(2 * problem.n_plies)
    table = problem.angle_set.feature_table()
    for block in problem.blocks:
        alpha = problem.weights.for_block(block)
        abs_sum = problem.weights.abs_sum(block)
        for l in range(1, 5):
            xi = problem.target.component(block, l)
            h = np.outer(alpha, table[:, l - 1]) - np.outer(
                np.abs(alpha), np.full(4, xi / abs_sum)
            )
            _add_quadratic(acc, h)
    if include_disorientation:
        for spec in problem.constraints:
            if isinstance(spec, Disorientation):
                viol = spec.violation_table(problem.angle_set).astype(float)
                _add_pair_penalty(acc, viol, problem.n_plies, spec.gamma)
    return acc.finish()


def term_census(expansion: PauliExpansion) -> dict[int, int]:
    """Achieved term counts keyed by weight (identity excluded)."""
    census: dict[int, int] = {}
    for term in expansion.terms:
        census[term.weight] = census.get(term.weight, 0) + 1
    return dict(sorted(census.items()))


def gate_cost(expansion: PauliExpansion) -> dict[str, int]:
    """Circuit cost of exponentiating the expansion term by term.

    Each weight-w monomial costs one rotation and 2(w - 1) CNOTs in the
    standard parity-chain construction (weight-1 terms need none).
    """
    rotations = len(expansion.terms)
    cnots = sum(2 * (t.weight - 1) for t in expansion.terms)
    return {"rotations": rotations, "cnots": cnots}
