"""Dense tensor primitives: contraction, truncated SVD, smallest eigenpair.

Thin, contract-checked wrappers over numpy.  Tensors are plain ndarrays;
axis bookkeeping stays with the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, ShapeMismatchError


def contract(a: np.ndarray, b: np.ndarray, axes) -> np.ndarray:
    """Contract paired axes of two tensors.

    ``axes`` is ``(axes_a, axes_b)`` with equal lengths; paired extents must
    match.  Output carries the unpaired axes of ``a`` followed by those of
    ``b``, in original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a, axes_b = axes
    if np.isscalar(axes_a):
        axes_a, axes_b = (axes_a,), (axes_b,)
    axes_a = tuple(int(i) for i in axes_a)
    axes_b = tuple(int(i) for i in axes_b)
    if len(axes_a) != len(axes_b):
        raise ShapeMismatchError("axes lists differ in length")
    for ia, ib in zip(axes_a, axes_b):
        if a.shape[ia] != b.shape[ib]:
            raise ShapeMismatchError(
                f"axis {ia} of shape {a.shape} does not match axis {ib} of {b.shape}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class TruncationPolicy:
    """How to truncate a singular-value spectrum.

    max_rank:
        Hard cap on the kept rank (at least 1).
    cutoff:
        Relative threshold: values with s_i / s_1 < cutoff are dropped.
    renormalize:
        Rescale the kept values so their squared sum matches the full
        spectrum's (a unit-norm input stays unit-norm).
    """

    max_rank: int
    cutoff: float = 0.0
    renormalize: bool = False

    def __post_init__(self):
        if self.max_rank < 1:
            raise DomainError("max_rank must be at least 1")
        if not 0.0 <= self.cutoff <= 1.0:
            raise DomainError("cutoff is a relative threshold in [0, 1]")


class SvdTruncation(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    discarded_weight: float


def svd_truncate(
    tensor: np.ndarray, left_axes: Sequence[int], policy: TruncationPolicy
) -> SvdTruncation:
    """SVD a tensor split into (left_axes | rest) and truncate the spectrum.

    Returns ``u`` with the left axes' extents plus a rank axis, ``s`` of
    length ``rank``, ``vh`` with a rank axis plus the remaining extents, and
    the discarded weight (sum of squares of dropped singular values).
    """
    tensor = np.asarray(tensor, dtype=float)
    if not np.all(np.isfinite(tensor)):
        raise DomainError("tensor has non-finite entries")
    left_axes = tuple(int(i) for i in left_axes)
    right_axes = tuple(i for i in range(tensor.ndim) if i not in left_axes)
    if not left_axes or not right_axes:
        raise ShapeMismatchError("both axis groups must be nonempty")
    perm = tensor.transpose(left_axes + right_axes)
    left_shape = perm.shape[: len(left_axes)]
    right_shape = perm.shape[len(left_axes) :]
    matrix = perm.reshape(int(np.prod(left_shape)), int(np.prod(right_shape)))
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    keep = len(s)
    if policy.cutoff > 0.0 and s[0] > 0.0:
        keep = int(np.sum(s >= policy.cutoff * s[0]))
    keep = max(1, min(keep, policy.max_rank))
    discarded = float(np.sum(s[keep:] ** 2))
    s_kept = s[:keep].copy()
    if policy.renormalize:
        total = float(np.sum(s**2))
        kept = float(np.sum(s_kept**2))
        if kept > 0.0:
            s_kept *= np.sqrt(total / kept)
    return SvdTruncation(
        u[:, :keep].reshape(left_shape + (keep,)),
        s_kept,
        vh[:keep].reshape((keep,) + right_shape),
        discarded,
    )


def smallest_eigenpair(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    v0: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of a symmetric operator given matrix-free.

    Lanczos iteration with full reorthogonalization and Rayleigh-Ritz
    extraction over the accumulated basis.  On breakdown (the Krylov space
    closes before convergence) the basis is extended with a fresh random
    direction, so progress never stalls.  Deterministic for a fixed seed or
    generator and fixed starting vector.

    Convergence: ``|apply(v) - lam * v| <= tol * max(1, |lam|)``.  Raises
    ConvergenceError carrying the best iterate if the iteration budget runs
    out.
    """
    if dim < 1:
        raise DomainError("operator dimension must be positive")
    if rng is None:
        rng = np.random.default_rng(seed)
    if v0 is None:
        v0 = rng.standard_normal(dim)
    v0 = np.asarray(v0, dtype=float).reshape(dim)
    norm0 = np.linalg.norm(v0)
    if not np.isfinite(norm0) or norm0 == 0.0:
        raise DomainError("starting vector must be finite and nonzero")

    basis = np.empty((max(max_iter, 1), dim))
    images = np.empty_like(basis)
    proj = np.zeros((max(max_iter, 1), max(max_iter, 1)))
    basis[0] = v0 / norm0
    theta, ritz, residual = np.inf, basis[0], np.inf

    m = 0
    while m < max_iter:
        w = apply(basis[m])
        w = np.asarray(w, dtype=float).reshape(dim)
        if not np.all(np.isfinite(w)):
            raise DomainError("operator produced non-finite values")
        images[m] = w
        col = basis[: m + 1] @ w
        proj[: m + 1, m] = col
        proj[m, : m + 1] = col
        m += 1

        evals, evecs = np.linalg.eigh(proj[:m, :m])
        theta = float(evals[0])
        coeff = evecs[:, 0]
        ritz = coeff @ basis[:m]
        ritz_image = coeff @ images[:m]
        residual = float(np.linalg.norm(ritz_image - theta * ritz))
        if residual <= tol * max(1.0, abs(theta)) or m >= dim:
            return theta, ritz / np.linalg.norm(ritz)
        if m >= max_iter:
            break

        # Next Lanczos direction, reorthogonalized twice against the basis.
        r = w
        for _ in range(2):
            r = r - (basis[:m] @ r) @ basis[:m]
        beta = np.linalg.norm(r)
        scale = max(1.0, float(np.linalg.norm(w)))
        while beta <= 1e-13 * scale:
            # Invariant subspace reached; restart with a random direction.
            r = rng.standard_normal(dim)
            for _ in range(2):
                r = r - (basis[:m] @ r) @ basis[:m]
            beta = np.linalg.norm(r)
        basis[m] = r / beta

    raise ConvergenceError(
        f"no convergence in {max_iter} iterations (residual {residual:.3e})",
        eigenvalue=theta,
        vector=ritz / np.linalg.norm(ritz),
        residual=residual,
    )
