"""Matrix product states and operator environments.

Site tensors have axes ``(bond_left, physical, bond_right)``; boundary
bonds have dimension 1.  States track an orthogonality center: tensors left
of it are left-orthonormal, tensors right of it right-orthonormal, so the
state norm is the Frobenius norm of the center tensor.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NotCollapsedError, ShapeMismatchError, SizeGuardError
from .laminate import StackingSequence
from .mpo import DiagonalMpo, MpoSum, block_stack

DENSE_GUARD = 2**20


def transfer_left(env: np.ndarray, site: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a left environment.

    env: (a, b, a')      state bond, operator bond, state bond
    site: (a, s, c)
    w: (b, b', s)
    returns (c, b', c').
    """
    chi_l, _, _ = env.shape
    _, d, chi_r = site.shape
    bp = w.shape[1]
    x = np.tensordot(env, site, axes=([0], [0]))  # (b, a', s, c)
    x = x.transpose(2, 1, 3, 0).reshape(d, chi_l * chi_r, w.shape[0])
    x = np.matmul(x, w.transpose(2, 0, 1))  # (s, a'c, b')
    x = x.reshape(d, chi_l, chi_r, bp)
    return np.tensordot(x, site, axes=([1, 0], [0, 1]))  # (c, b', c')


def transfer_right(env: np.ndarray, site: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a right environment.

    env: (c, b', c'); site: (a, s, c); w: (b, b', s); returns (a, b, a').
    """
    chi_l, d, chi_r = site.shape
    b = w.shape[0]
    x = np.tensordot(site, env, axes=([2], [0]))  # (a, s, b', c')
    x = x.transpose(1, 0, 3, 2).reshape(d, chi_l * env.shape[2], w.shape[1])
    x = np.matmul(x, w.transpose(2, 1, 0))  # (s, ac', b)
    x = x.reshape(d, chi_l, env.shape[2], b)
    return np.tensordot(x, site, axes=([2, 0], [2, 1]))  # (a, b, a')


class Mps:
    """A matrix product state over ply labels."""

    def __init__(self, tensors: Sequence[np.ndarray], center: int = 0):
        tensors = [np.asarray(t, dtype=float) for t in tensors]
        if not tensors:
            raise DomainError("an MPS needs at least one site")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ShapeMismatchError("boundary bonds must have dimension 1")
        d = tensors[0].shape[1]
        for left, right in zip(tensors, tensors[1:]):
            if left.shape[2] != right.shape[0]:
                raise ShapeMismatchError("adjacent bond dimensions disagree")
            if right.shape[1] != d:
                raise ShapeMismatchError("physical dimension varies across sites")
        if not 0 <= center < len(tensors):
            raise DomainError("center outside the chain")
        self.tensors = tensors
        self.center = center

    # -- constructors ------------------------------------------------------

    @classmethod
    def random(cls, n_sites: int, phys_dim: int, chi: int, seed: int | None) -> "Mps":
        """Random state: i.i.d. standard-normal entries, canonicalized to
        site 0 and normalized.  Bitwise deterministic for a fixed seed."""
        if n_sites < 1 or phys_dim < 1 or chi < 1:
            raise DomainError("n_sites, phys_dim and chi must be positive")
        rng = np.random.default_rng(seed)
        dims = [
            min(chi, phys_dim ** min(i, 30), phys_dim ** min(n_sites - i, 30))
            for i in range(n_sites + 1)
        ]
        tensors = [
            rng.standard_normal((dims[i], phys_dim, dims[i + 1]))
            for i in range(n_sites)
        ]
        mps = cls(tensors, center=n_sites - 1)
        # renormalize after every gauge step: raw site norms compound
        # exponentially in n_sites and overflow doubles near 200 sites
        mps.normalize()
        while mps.center > 0:
            mps.move_center_left()
            mps.normalize()
        return mps

    @classmethod
    def basis_state(cls, seq: StackingSequence | Iterable[int], phys_dim: int) -> "Mps":
        labels = tuple(seq)
        if any(not 1 <= s <= phys_dim for s in labels):
            raise DomainError(f"labels outside 1..{phys_dim}")
        tensors = []
        for s in labels:
            t = np.zeros((1, phys_dim, 1))
            t[0, s - 1, 0] = 1.0
            tensors.append(t)
        return cls(tensors, center=0)

    # -- basic queries -----------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def phys_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[2] for t in self.tensors[:-1])

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims) if self.n_sites > 1 else 1

    def copy(self) -> "Mps":
        return Mps([t.copy() for t in self.tensors], center=self.center)

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))

    def normalize(self) -> None:
        n = self.norm()
        if n == 0.0:
            raise DomainError("cannot normalize the zero state")
        self.tensors[self.center] = self.tensors[self.center] / n

    # -- canonical form ----------------------------------------------------

    def move_center_right(self) -> None:
        c = self.center
        if c >= self.n_sites - 1:
            raise DomainError("center already at the right edge")
        chi_l, d, chi_r = self.tensors[c].shape
        q, r = np.linalg.qr(self.tensors[c].reshape(chi_l * d, chi_r))
        self.tensors[c] = q.reshape(chi_l, d, q.shape[1])
        self.tensors[c + 1] = np.tensordot(r, self.tensors[c + 1], axes=([1], [0]))
        self.center = c + 1

    def move_center_left(self) -> None:
        c = self.center
        if c == 0:
            raise DomainError("center already at the left edge")
        chi_l, d, chi_r = self.tensors[c].shape
        q, r = np.linalg.qr(self.tensors[c].reshape(chi_l, d * chi_r).T)
        self.tensors[c] = q.T.reshape(q.shape[1], d, chi_r)
        self.tensors[c - 1] = np.tensordot(self.tensors[c - 1], r.T, axes=([2], [0]))
        self.center = c - 1

    def canonicalize(self, center: int) -> None:
        """Gauge the state so ``center`` is the orthogonality center."""
        if not 0 <= center < self.n_sites:
            raise DomainError("center outside the chain")
        while self.center > center:
            self.move_center_left()
        while self.center < center:
            self.move_center_right()

    def orthonormality_defect(self) -> float:
        """Max deviation of off-center tensors from exact orthonormality."""
        worst = 0.0
        for i, t in enumerate(self.tensors):
            if i < self.center:
                m = t.reshape(-1, t.shape[2])
                worst = max(worst, float(np.max(np.abs(m.T @ m - np.eye(m.shape[1])))))
            elif i > self.center:
                m = t.reshape(t.shape[0], -1)
                worst = max(worst, float(np.max(np.abs(m @ m.T - np.eye(m.shape[0])))))
        return worst

    # -- conversions -------------------------------------------------------

    def dense_vector(self) -> np.ndarray:
        """Amplitudes over all label sequences, odometer-ordered (site 0
        most significant).  Guarded against large state spaces."""
        size = self.phys_dim**self.n_sites
        if size > DENSE_GUARD:
            raise SizeGuardError(f"state space {size} exceeds {DENSE_GUARD}")
        vec = self.tensors[0].reshape(self.phys_dim, -1)
        for t in self.tensors[1:]:
            vec = np.tensordot(vec, t, axes=([1], [0]))
            vec = vec.reshape(-1, t.shape[2])
        return vec.reshape(-1)

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "phys_dim": self.phys_dim,
            "center": self.center,
            "shapes": [list(t.shape) for t in self.tensors],
            "values": [t.reshape(-1).tolist() for t in self.tensors],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Mps":
        if data.get("schema") != 1:
            raise DomainError(f"unsupported MPS schema {data.get('schema')!r}")
        tensors = [
            np.asarray(vals, dtype=float).reshape(shape)
            for shape, vals in zip(data["shapes"], data["values"])
        ]
        return cls(tensors, center=int(data["center"]))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "Mps":
        return cls.from_json_dict(json.loads(text))


def random_mps(n_sites: int, phys_dim: int, chi: int, seed: int | None) -> Mps:
    return Mps.random(n_sites, phys_dim, chi, seed)


def basis_state_mps(seq: StackingSequence | Iterable[int], phys_dim: int) -> Mps:
    return Mps.basis_state(seq, phys_dim)


def extract_sequence(mps: Mps) -> StackingSequence:
    """Read off the ply labels of a collapsed (all bonds 1) state."""
    if any(chi != 1 for chi in mps.bond_dims):
        raise NotCollapsedError(f"bond dimensions {mps.bond_dims} are not all 1")
    labels = tuple(int(np.argmax(np.abs(t[0, :, 0]))) + 1 for t in mps.tensors)
    return StackingSequence(labels)


def expectation(mps: Mps, terms: MpoSum | DiagonalMpo) -> float:
    """Expectation value of an operator sum in a state, term by term."""
    mpos = terms.terms if isinstance(terms, MpoSum) else [terms]
    total = 0.0
    for mpo in mpos:
        if mpo.n_sites != mps.n_sites or mpo.phys_dim != mps.phys_dim:
            raise ShapeMismatchError("operator and state shapes disagree")
        env = np.ones((1, 1, 1))
        for site, w in zip(mps.tensors, mpo.sites):
            env = transfer_left(env, site, w)
        total += float(env[0, 0, 0])
    return total


class Environment:
    """Left/right operator environments of a state, all terms stacked.

    The terms of an MPO sum are stacked along the operator bond (a direct
    sum), so one environment array per bond carries every term; per-term
    environments are contiguous slices.  ``left[i]`` covers sites < i,
    ``right[i]`` covers sites >= i; both ends are scalar ones.
    """

    def __init__(self, mps: Mps, terms: MpoSum | DiagonalMpo):
        if isinstance(terms, DiagonalMpo):
            terms = MpoSum([terms])
        if terms.n_sites != mps.n_sites or terms.phys_dim != mps.phys_dim:
            raise ShapeMismatchError("operator and state shapes disagree")
        self.n_sites = mps.n_sites
        stacked = block_stack(terms)
        self.w_sites = stacked.sites
        slices = []
        start = 0
        for t in terms.terms:
            width = t.sites[0].shape[1] if t.n_sites > 1 else 1
            slices.append((start, start + width))
            start += width
        self.term_slices = tuple(slices)
        self.left: list[np.ndarray | None] = [None] * (self.n_sites + 1)
        self.right: list[np.ndarray | None] = [None] * (self.n_sites + 1)
        self.left[0] = np.ones((1, 1, 1))
        self.right[self.n_sites] = np.ones((1, 1, 1))
        self.rebuild(mps)

    def rebuild(self, mps: Mps) -> None:
        for i in range(self.n_sites):
            self.left[i + 1] = transfer_left(self.left[i], mps.tensors[i], self.w_sites[i])
        for i in range(self.n_sites - 1, -1, -1):
            self.right[i] = transfer_right(
                self.right[i + 1], mps.tensors[i], self.w_sites[i]
            )

    def refresh_left(self, mps: Mps, i: int) -> None:
        """Recompute ``left[i + 1]`` after site ``i`` changed."""
        self.left[i + 1] = transfer_left(self.left[i], mps.tensors[i], self.w_sites[i])

    def refresh_right(self, mps: Mps, i: int) -> None:
        """Recompute ``right[i]`` after site ``i`` changed."""
        self.right[i] = transfer_right(self.right[i + 1], mps.tensors[i], self.w_sites[i])

    def left_for_term(self, i: int, term: int) -> np.ndarray:
        if i == 0 or i == self.n_sites:
            return self.left[i]
        a, b = self.term_slices[term]
        return self.left[i][:, a:b, :]

    def right_for_term(self, i: int, term: int) -> np.ndarray:
        if i == 0 or i == self.n_sites:
            return self.right[i]
        a, b = self.term_slices[term]
        return self.right[i][:, a:b, :]

    def expectation_at(self, mps: Mps, i: int) -> float:
        """Operator expectation contracted through site ``i``."""
        moved = transfer_left(self.left[i], mps.tensors[i], self.w_sites[i])
        return float(np.sum(moved * self.right[i + 1]))


def rebuild_environments(mps: Mps, terms: MpoSum | DiagonalMpo, center: int | None = None) -> Environment:
    """Environments for a two-site update at (center, center + 1).

    All bonds are built; contraction identities hold in any gauge, so the
    result is valid for every center.
    """
    env = Environment(mps, terms)
    if center is not None and not 0 <= center < mps.n_sites:
        raise DomainError("center outside the chain")
    return env
