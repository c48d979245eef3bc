"""Two-site DMRG ground-state search for diagonal operator sums.

A sweep is one directed pass over all nearest-neighbor bonds.  At each bond
the two site tensors are merged, the smallest eigenpair of the effective
two-site operator is found (warm-started at the current block, so the local
eigenvalue never exceeds the incoming Rayleigh quotient), and the optimized
block is split by a truncated SVD.

Because every operator term is diagonal in the label basis, the effective
operator is block diagonal over the two physical labels: it is materialized
as d^2 dense blocks with two matrix products per update, and the eigensolver
applies it as one batched matrix multiply.

The collapse schedule drives the state to a readable basis state: the last
ceil(log2 chi_max) + 1 sweeps halve the bond cap down to 1, and the final
sweep additionally discards singular values below half the leading one.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConvergenceError, DomainError, ShapeMismatchError
from .laminate import SsrProblem, StackingSequence
from .mpo import MpoSum
from .mps import Environment, Mps, extract_sequence
from .tensor import TruncationPolicy, smallest_eigenpair, svd_truncate

logger = logging.getLogger(__name__)


class SweepDirection(str, Enum):
    OUTWARD = "outward"  # first ply toward last
    INWARD = "inward"  # last ply toward first
    ALTERNATING = "alternating"


@dataclass(frozen=True)
class DmrgPlan:
    """Sweep plan for one DMRG run.

    ``collapse`` reserves the final ceil(log2 chi_max) + 1 sweeps for the
    bond-cap halving schedule, so ``n_sweeps`` must exceed that length.
    ``seed`` only feeds eigensolver restarts; runs are deterministic.
    """

    n_sweeps: int
    direction: SweepDirection = SweepDirection.ALTERNATING
    chi_max: int = 8
    collapse: bool = True
    eig_tol: float = 1e-10
    eig_max_iter: int = 100
    svd_cutoff: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "direction", SweepDirection(self.direction))
        if self.n_sweeps < 1:
            raise DomainError("n_sweeps must be at least 1")
        if self.chi_max < 1:
            raise DomainError("chi_max must be at least 1")
        if not 0.0 <= self.svd_cutoff < 1.0:
            raise DomainError("svd_cutoff is a relative threshold in [0, 1)")
        if self.collapse and self.n_sweeps <= self.collapse_length:
            raise DomainError(
                f"collapse needs more than {self.collapse_length} sweeps "
                f"for chi_max={self.chi_max}"
            )

    @property
    def collapse_length(self) -> int:
        return math.ceil(math.log2(self.chi_max)) + 1 if self.chi_max > 1 else 1


def sweep_schedule(plan: DmrgPlan) -> list[tuple[int, float]]:
    """Per-sweep (bond cap, relative SVD cutoff)."""
    caps = [(plan.chi_max, plan.svd_cutoff)] * plan.n_sweeps
    if plan.collapse:
        k = plan.collapse_length
        halvings = [max(1, math.ceil(plan.chi_max / 2**j)) for j in range(1, k)]
        tail = [(c, plan.svd_cutoff) for c in halvings]
        tail.append((1, max(0.5, plan.svd_cutoff)))
        caps[plan.n_sweeps - k :] = tail
    return caps


def sweep_directions(plan: DmrgPlan) -> list[SweepDirection]:
    if plan.direction is SweepDirection.ALTERNATING:
        return [
            SweepDirection.OUTWARD if i % 2 == 0 else SweepDirection.INWARD
            for i in range(plan.n_sweeps)
        ]
    return [plan.direction] * plan.n_sweeps


@dataclass
class SweepTrace:
    """Per-sweep diagnostics; index 0 records the initial state.

    ``duration_s`` is wall clock and is excluded from the canonical
    serialization so identical runs compare byte for byte.
    """

    expectation: list[float] = field(default_factory=list)
    max_bond: list[int] = field(default_factory=list)
    duration_s: list[float] = field(default_factory=list)
    lambda_min: list[float] = field(default_factory=list)
    eig_gap_max: list[float] = field(default_factory=list)
    norm_error: list[float] = field(default_factory=list)

    def append(self, expectation, max_bond, duration_s, lambda_min, eig_gap_max, norm_error):
        self.expectation.append(float(expectation))
        self.max_bond.append(int(max_bond))
        self.duration_s.append(float(duration_s))
        self.lambda_min.append(float(lambda_min))
        self.eig_gap_max.append(float(eig_gap_max))
        self.norm_error.append(float(norm_error))

    @property
    def n_records(self) -> int:
        return len(self.expectation)

    def to_records(self, include_timing: bool = True) -> list[dict]:
        out = []
        for i in range(self.n_records):
            rec = {
                "schema": 1,
                "sweep": i,
                "expectation": self.expectation[i],
                "max_bond": self.max_bond[i],
                "lambda_min": None if math.isnan(self.lambda_min[i]) else self.lambda_min[i],
                "eig_gap_max": None if math.isnan(self.eig_gap_max[i]) else self.eig_gap_max[i],
                "norm_error": self.norm_error[i],
            }
            if include_timing:
                rec["duration_s"] = self.duration_s[i]
            out.append(rec)
        return out

    def to_jsonl(self, include_timing: bool = True) -> str:
        records = self.to_records(include_timing=include_timing)
        return "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"

    def canonical_jsonl(self) -> str:
        """Deterministic serialization: identical runs compare equal."""
        return self.to_jsonl(include_timing=False)

    @classmethod
    def from_records(cls, records: list[dict]) -> "SweepTrace":
        trace = cls()
        for rec in records:
            trace.append(
                rec["expectation"],
                rec["max_bond"],
                rec.get("duration_s", 0.0),
                math.nan if rec["lambda_min"] is None else rec["lambda_min"],
                math.nan if rec["eig_gap_max"] is None else rec["eig_gap_max"],
                rec["norm_error"],
            )
        return trace


@dataclass
class LocalUpdate:
    left_site: np.ndarray
    right_site: np.ndarray
    lambda_local: float
    rayleigh_incoming: float
    discarded_weight: float
    bond_dim: int


def effective_matrix(
    left_env: np.ndarray, right_env: np.ndarray, bond_op: np.ndarray
) -> np.ndarray:
    """Two-site effective operator as d^2 dense blocks.

    left_env: (al, b1, al'); right_env: (cr, b3, cr');
    bond_op: (s, t, b1, b3), the two site tensors' bond product.
    Returns (d^2, al*cr, al*cr), one symmetric block per label pair.
    """
    chi_l, b1 = left_env.shape[0], left_env.shape[1]
    chi_r, b3 = right_env.shape[0], right_env.shape[1]
    dd = bond_op.shape[0] * bond_op.shape[1]
    ar = bond_op.reshape(dd * b1, b3) @ right_env.transpose(1, 0, 2).reshape(b3, chi_r * chi_r)
    ar = ar.reshape(dd, b1, chi_r * chi_r).transpose(1, 0, 2).reshape(b1, dd * chi_r * chi_r)
    lm = left_env.transpose(1, 0, 2).reshape(b1, chi_l * chi_l)
    g = (lm.T @ ar).reshape(chi_l, chi_l, dd, chi_r, chi_r)
    g = g.transpose(2, 0, 3, 1, 4)
    return np.ascontiguousarray(g.reshape(dd, chi_l * chi_r, chi_l * chi_r))


def local_update(
    block: np.ndarray,
    left_env: np.ndarray,
    right_env: np.ndarray,
    bond_op: np.ndarray,
    chi_cap: int,
    cutoff: float,
    move_right: bool,
    eig_tol: float = 1e-10,
    eig_max_iter: int = 100,
    rng: np.random.Generator | None = None,
) -> LocalUpdate:
    """Optimize one two-site block and split it.

    ``block`` has axes (chi_l, s, t, chi_r) and should be unit norm (it is
    the merged orthogonality center).  If the eigensolver runs out of
    iterations its best iterate is used; by construction it is never worse
    than the incoming block.
    """
    chi_l, d, _, chi_r = block.shape
    m = chi_l * chi_r
    g = effective_matrix(left_env, right_env, bond_op)

    def apply(v: np.ndarray) -> np.ndarray:
        return np.matmul(g, v.reshape(d * d, m, 1)).reshape(-1)

    x0 = block.transpose(1, 2, 0, 3).reshape(-1)
    rayleigh = float(x0 @ apply(x0))
    try:
        lam, y = smallest_eigenpair(
            apply, d * d * m, tol=eig_tol, max_iter=eig_max_iter, rng=rng, v0=x0
        )
    except ConvergenceError as err:
        logger.debug("local eigensolve unconverged: %s", err)
        lam, y = err.eigenvalue, err.vector
    theta = y.reshape(d, d, chi_l, chi_r).transpose(2, 0, 1, 3)
    u, s, vh, discarded = svd_truncate(
        theta.reshape(chi_l * d, d * chi_r),
        (0,),
        TruncationPolicy(max_rank=chi_cap, cutoff=cutoff, renormalize=True),
    )
    rank = len(s)
    if move_right:
        left_site = u.reshape(chi_l, d, rank)
        right_site = (s[:, None] * vh).reshape(rank, d, chi_r)
    else:
        left_site = (u * s[None, :]).reshape(chi_l, d, rank)
        right_site = vh.reshape(rank, d, chi_r)
    return LocalUpdate(left_site, right_site, float(lam), rayleigh, discarded, rank)


@dataclass
class DmrgResult:
    mps: Mps
    sequence: StackingSequence | None
    trace: SweepTrace


def dmrg_run(problem: SsrProblem, terms: MpoSum, init: Mps, plan: DmrgPlan) -> DmrgResult:
    """Minimize an operator sum over MPS of bounded bond dimension.

    The trace gains one record per sweep plus one for the initial state.
    With a collapse schedule the final state is a product state and its
    label sequence is returned; otherwise ``sequence`` is None.
    """
    if terms.n_sites != init.n_sites or terms.phys_dim != init.phys_dim:
        raise ShapeMismatchError("operator and state shapes disagree")
    if problem is not None:
        if problem.n_plies != init.n_sites or problem.d != init.phys_dim:
            raise DomainError("problem size does not match the state")
    if init.n_sites < 2:
        raise DomainError("two-site DMRG needs at least two plies")

    n = init.n_sites
    mps = init.copy()
    rng = np.random.default_rng(plan.seed)
    schedule = sweep_schedule(plan)
    directions = sweep_directions(plan)

    start_of = {SweepDirection.OUTWARD: 0, SweepDirection.INWARD: n - 1}
    mps.canonicalize(start_of[directions[0]])
    mps.normalize()
    env = Environment(mps, terms)
    bond_ops = [
        np.ascontiguousarray(
            np.einsum("abs,bct->stac", env.w_sites[i], env.w_sites[i + 1], optimize=True)
        )
        for i in range(n - 1)
    ]

    trace = SweepTrace()
    trace.append(
        expectation=env.expectation_at(mps, mps.center),
        max_bond=mps.max_bond,
        duration_s=0.0,
        lambda_min=math.nan,
        eig_gap_max=math.nan,
        norm_error=abs(mps.norm() - 1.0),
    )

    for sweep_idx in range(plan.n_sweeps):
        t0 = time.perf_counter()
        direction = directions[sweep_idx]
        cap, cutoff = schedule[sweep_idx]
        outward = direction is SweepDirection.OUTWARD

        _walk_center(mps, env, start_of[direction])

        lam_min = math.inf
        gap_max = -math.inf
        bond_seen = mps.max_bond
        bonds = range(n - 1) if outward else range(n - 2, -1, -1)
        for i in bonds:
            block = np.tensordot(mps.tensors[i], mps.tensors[i + 1], axes=([2], [0]))
            upd = local_update(
                block,
                env.left[i],
                env.right[i + 2],
                bond_ops[i],
                chi_cap=cap,
                cutoff=cutoff,
                move_right=outward,
                eig_tol=plan.eig_tol,
                eig_max_iter=plan.eig_max_iter,
                rng=rng,
            )
            mps.tensors[i] = upd.left_site
            mps.tensors[i + 1] = upd.right_site
            if outward:
                mps.center = i + 1
                env.refresh_left(mps, i)
            else:
                mps.center = i
                env.refresh_right(mps, i + 1)
            lam_min = min(lam_min, upd.lambda_local)
            gap_max = max(gap_max, upd.lambda_local - upd.rayleigh_incoming)
            bond_seen = max(bond_seen, mps.max_bond)

        if plan.direction in (SweepDirection.OUTWARD, SweepDirection.INWARD):
            _walk_center(mps, env, start_of[plan.direction])

        trace.append(
            expectation=env.expectation_at(mps, mps.center),
            max_bond=bond_seen,
            duration_s=time.perf_counter() - t0,
            lambda_min=lam_min,
            eig_gap_max=gap_max,
            norm_error=abs(mps.norm() - 1.0),
        )

    sequence = None
    if all(chi == 1 for chi in mps.bond_dims):
        sequence = extract_sequence(mps)
    return DmrgResult(mps=mps, sequence=sequence, trace=trace)


def _walk_center(mps: Mps, env: Environment, target: int) -> None:
    """Gauge-move the center, keeping the vacated environments fresh."""
    while mps.center > target:
        mps.move_center_left()
        env.refresh_right(mps, mps.center + 1)
    while mps.center < target:
        mps.move_center_right()
        env.refresh_left(mps, mps.center - 1)
