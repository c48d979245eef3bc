"""Matrix product operators for stacking-sequence objectives.

Every operator here is diagonal in the ply-label basis, so a site tensor
is a bond matrix per physical label: shape ``(b_left, b_right, d)``.  The
value an operator assigns to a sequence is the chain product of the label-
selected bond matrices; boundary sites absorb the boundary vectors, so the
first tensor has ``b_left = 1`` and the last ``b_right = 1``.

Constructions:

* squared linear form  (sum_n h_n)^2  with bond dimension 3, used for the
  loss terms and the balance penalty,
* adjacent-pair penalty (disorientation), bond dimension d + 2,
* run-length penalty (contiguity), bond dimension d (k - 1) + 2 for
  window length k,
* counting shortfall penalty (minimum ply share), bond dimension N_t + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeMismatchError
from .laminate import (
    Balanced,
    ConstraintSpec,
    Contiguity,
    Disorientation,
    MinCount,
    SsrProblem,
    StackingSequence,
)


@dataclass(eq=False)
class DiagonalMpo:
    """An MPO diagonal in the label basis.

    ``sites[n]`` has shape ``(b_left, b_right, d)``; ``sites[n][:, :, s-1]``
    is the bond matrix selected by ply label ``s``.
    """

    sites: list[np.ndarray]
    tag: str = ""

    def __post_init__(self):
        if not self.sites:
            raise DomainError("an MPO needs at least one site")
        d = self.sites[0].shape[2]
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[1] != 1:
            raise ShapeMismatchError("boundary bond dimensions must be 1")
        for left, right in zip(self.sites, self.sites[1:]):
            if left.shape[1] != right.shape[0]:
                raise ShapeMismatchError("adjacent bond dimensions disagree")
            if right.shape[2] != d:
                raise ShapeMismatchError("physical dimension varies across sites")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def phys_dim(self) -> int:
        return self.sites[0].shape[2]

    @property
    def bond_dims(self) -> tuple[int, ...]:
        """Internal bond dimensions (length n_sites - 1)."""
        return tuple(w.shape[1] for w in self.sites[:-1])

    def chain_value(self, seq: StackingSequence | np.ndarray) -> float:
        labels = seq.array if isinstance(seq, StackingSequence) else np.asarray(seq)
        if labels.shape != (self.n_sites,):
            raise ShapeMismatchError(f"expected {self.n_sites} labels")
        vec = self.sites[0][:, :, labels[0] - 1]
        for w, s in zip(self.sites[1:], labels[1:]):
            vec = vec @ w[:, :, s - 1]
        return float(vec[0, 0])

    def chain_values(self, labels: np.ndarray) -> np.ndarray:
        """Chain products for a batch of sequences, shape ``(batch, N)``."""
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.shape[1] != self.n_sites:
            raise ShapeMismatchError(f"expected (batch, {self.n_sites}) labels")
        vec = self.sites[0][:, :, labels[:, 0] - 1].transpose(2, 0, 1)
        for n in range(1, self.n_sites):
            mats = self.sites[n][:, :, labels[:, n] - 1].transpose(2, 0, 1)
            vec = vec @ mats
        return vec[:, 0, 0]


@dataclass(eq=False)
class MpoSum:
    """A sum of diagonal MPOs kept as separate terms."""

    terms: list[DiagonalMpo] = field(default_factory=list)

    def __post_init__(self):
        if not self.terms:
            raise DomainError("an MPO sum needs at least one term")
        n, d = self.terms[0].n_sites, self.terms[0].phys_dim
        for t in self.terms:
            if t.n_sites != n or t.phys_dim != d:
                raise ShapeMismatchError("terms must share site count and d")

    @property
    def n_sites(self) -> int:
        return self.terms[0].n_sites

    @property
    def phys_dim(self) -> int:
        return self.terms[0].phys_dim

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(t.tag for t in self.terms)

    def term(self, tag: str) -> DiagonalMpo:
        for t in self.terms:
            if t.tag == tag:
                return t
        raise KeyError(tag)

    def value(self, seq: StackingSequence | np.ndarray) -> float:
        return sum(t.chain_value(seq) for t in self.terms)

    def chain_values(self, labels: np.ndarray) -> np.ndarray:
        out = self.terms[0].chain_values(labels)
        for t in self.terms[1:]:
            out = out + t.chain_values(labels)
        return out


def m_quadratic(x: float) -> np.ndarray:
    """Accumulation matrix for squared sums: M(x) M(y) = M(x + y).

    The top-right entry of a product of these is the square of the summed
    arguments.
    """
    r = math.sqrt(2.0) * x
    return np.array([[1.0, r, x * x], [0.0, 1.0, r], [0.0, 0.0, 1.0]])


def quadratic_sum_mpo(h: np.ndarray, tag: str = "") -> DiagonalMpo:
    """MPO for (sum_n h[n, s_n])^2 over per-site local values ``h``."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2:
        raise ShapeMismatchError("h must have shape (n_sites, d)")
    n_sites, d = h.shape
    full = np.empty((n_sites, 3, 3, d))
    for n in range(n_sites):
        for s in range(d):
            full[n, :, :, s] = m_quadratic(h[n, s])
    sites = [full[n] for n in range(n_sites)]
    sites[0] = sites[0][:1, :, :]
    sites[-1] = sites[-1][:, 2:, :]
    return DiagonalMpo(sites, tag=tag)


def loss_term_mpo(problem: SsrProblem, block: str, l: int) -> DiagonalMpo:
    """MPO for one squared lamination-parameter deviation.

    The target component is spread over plies in proportion to the absolute
    ply weight, so the chained sum telescopes to v - xi exactly even when
    the absolute weights do not sum to one (general-mode B block, odd N).
    """
    alpha = problem.weights.for_block(block)
    abs_sum = problem.weights.abs_sum(block)
    if abs_sum == 0.0:
        raise DomainError(f"block {block} has all-zero weights")
    f = problem.angle_set.feature_table()[:, l - 1]
    xi = problem.target.component(block, l)
    h = np.outer(alpha, f) - np.outer(np.abs(alpha), np.full_like(f, xi / abs_sum))
    return quadratic_sum_mpo(h, tag=f"{block}{l}")


def disorientation_mpo(
    d: int,
    gamma: float,
    violating_pairs: frozenset[tuple[int, int]] | set[tuple[int, int]],
    n_sites: int,
) -> DiagonalMpo:
    """MPO counting adjacent violating label pairs, weighted by gamma.

    Bond dimension d + 2: one carry slot, d slots remembering the previous
    label, one accumulator slot.
    """
    dim = d + 2
    full = np.zeros((dim, dim, d))
    for s in range(1, d + 1):
        m = full[:, :, s - 1]
        m[0, 0] = 1.0
        m[0, s] = 1.0
        m[dim - 1, dim - 1] = 1.0
    for a, b in violating_pairs:
        if not (1 <= a <= d and 1 <= b <= d):
            raise DomainError(f"pair ({a}, {b}) outside 1..{d}")
        full[a, dim - 1, b - 1] = gamma
    return _with_boundaries(full, n_sites, tag="disorientation")


def contiguity_mpo(d: int, window: int, gamma: float, n_sites: int) -> DiagonalMpo:
    """MPO counting length-``window`` runs of equal labels, weighted by gamma.

    Bond dimension d (window - 1) + 2.  Windows never materialize for
    n_sites < window, and the chain value is 0 there by construction.
    """
    if window < 2:
        raise DomainError("window must be at least 2")
    k = window
    dim = d * (k - 1) + 2
    full = np.zeros((dim, dim, d))
    for s in range(1, d + 1):
        m = full[:, :, s - 1]
        m[0, 0] = 1.0
        m[0, s] = 1.0  # start remembering a run of label s
        for r in range(d * (k - 2)):
            if r % d == s - 1:
                m[1 + r, 1 + d + r] = 1.0  # extend a matching run
        m[d * (k - 2) + s, dim - 1] = gamma  # run reached full window length
        m[dim - 1, dim - 1] = 1.0
    return _with_boundaries(full, n_sites, tag="contiguity")


def balanced_mpo(d: int, state_a: int, state_b: int, gamma: float, n_sites: int) -> DiagonalMpo:
    """MPO for gamma times the squared count difference of two labels."""
    if not (1 <= state_a <= d and 1 <= state_b <= d) or state_a == state_b:
        raise DomainError("balanced labels must be distinct and within 1..d")
    h = np.zeros((n_sites, d))
    h[:, state_a - 1] = 1.0
    h[:, state_b - 1] = -1.0
    mpo = quadratic_sum_mpo(h, tag="balanced")
    mpo.sites[-1] = mpo.sites[-1] * gamma
    return mpo


def min_count_mpo(d: int, state: int, min_plies: int, gamma: float, n_sites: int) -> DiagonalMpo:
    """MPO for gamma times the shortfall max(0, min_plies - count(state)).

    Square bond matrices of dimension min_plies + 1; occurrences of the
    tracked label shift a unary counter, and the right boundary vector turns
    the terminal counter state into the linear shortfall.
    """
    if not 1 <= state <= d:
        raise DomainError(f"state {state} outside 1..{d}")
    if min_plies < 1:
        raise DomainError("min_plies must be at least 1")
    dim = min_plies + 1
    shift = np.zeros((dim, dim))
    shift[0, 0] = 1.0
    shift[0, 1] = 1.0
    for i in range(1, dim - 1):
        shift[i, i + 1] = 1.0
    full = np.zeros((dim, dim, d))
    for s in range(d):
        full[:, :, s] = shift if s == state - 1 else np.eye(dim)
    right = np.full(dim, -gamma)
    right[0] = gamma * min_plies
    sites = [full.copy() for _ in range(n_sites)]
    sites[-1] = np.einsum("abs,b->as", sites[-1], right)[:, None, :]
    sites[0] = sites[0][:1, :, :]
    return DiagonalMpo(sites, tag="min_count")


def _with_boundaries(full: np.ndarray, n_sites: int, tag: str) -> DiagonalMpo:
    """Replicate a site matrix, then apply [1,0,..] / [..,0,1] boundaries."""
    if n_sites < 1:
        raise DomainError("n_sites must be at least 1")
    sites = [full.copy() for _ in range(n_sites)]
    sites[0] = sites[0][:1, :, :]
    sites[-1] = sites[-1][:, -1:, :]
    return DiagonalMpo(sites, tag=tag)


def penalty_mpo(problem: SsrProblem, spec: ConstraintSpec) -> DiagonalMpo:
    """MPO realization of one manufacturing-constraint penalty."""
    d, n = problem.d, problem.n_plies
    if isinstance(spec, Disorientation):
        return disorientation_mpo(d, spec.gamma, spec.violating_pairs(problem.angle_set), n)
    if isinstance(spec, Contiguity):
        return contiguity_mpo(d, spec.window, spec.gamma, n)
    if isinstance(spec, Balanced):
        return balanced_mpo(d, spec.state_a, spec.state_b, spec.gamma, n)
    if isinstance(spec, MinCount):
        return min_count_mpo(d, spec.state, spec.min_plies, spec.gamma, n)
    raise DomainError(f"no MPO construction for {type(spec).__name__}")


def loss_mpo_sum(problem: SsrProblem, include_penalties: bool = True) -> MpoSum:
    """All loss terms (and optionally penalty terms) as one MPO sum."""
    terms = [
        loss_term_mpo(problem, block, l)
        for block in problem.blocks
        for l in range(1, 5)
    ]
    if include_penalties:
        seen: dict[str, int] = {}
        for spec in problem.constraints:
            term = penalty_mpo(problem, spec)
            count = seen.get(term.tag, 0)
            seen[term.tag] = count + 1
            if count:
                term.tag = f"{term.tag}#{count + 1}"
            terms.append(term)
    return MpoSum(terms)


def block_stack(terms: list[DiagonalMpo] | MpoSum, tag: str = "stacked") -> DiagonalMpo:
    """Direct-sum several diagonal MPOs into one (testing utility).

    The chain value of the stacked MPO is the sum of the terms' values; the
    solver keeps terms separate instead and sums environments.
    """
    if isinstance(terms, MpoSum):
        terms = terms.terms
    if not terms:
        raise DomainError("nothing to stack")
    n = terms[0].n_sites
    d = terms[0].phys_dim
    if n == 1:
        return DiagonalMpo([sum(t.sites[0] for t in terms)], tag=tag)
    sites: list[np.ndarray] = []
    sites.append(np.concatenate([t.sites[0] for t in terms], axis=1))
    for i in range(1, n - 1):
        rows = sum(t.sites[i].shape[0] for t in terms)
        cols = sum(t.sites[i].shape[1] for t in terms)
        w = np.zeros((rows, cols, d))
        r = c = 0
        for t in terms:
            tr, tc = t.sites[i].shape[:2]
            w[r : r + tr, c : c + tc] = t.sites[i]
            r += tr
            c += tc
        sites.append(w)
    sites.append(np.concatenate([t.sites[-1] for t in terms], axis=0))
    return DiagonalMpo(sites, tag=tag)
