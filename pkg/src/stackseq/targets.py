"""Target generation for retrieval experiments.

Targets are lamination points of known constraint-valid witness sequences,
so retrieval has a certified optimum.  Two generators are provided: orbit
representatives for exhaustively enumerable spaces, and a density-flattened
sample for large spaces (kernel density estimate over sampled valid
sequences, selection weighted toward low-density regions so targets spread
out over the reachable parameter set).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingError, SizeGuardError
from .laminate import (
    Disorientation,
    LaminationPoint,
    SsrProblem,
    StackingSequence,
    lamination_parameters,
    orbit_representative,
)
from .oracle import ENUMERATION_GUARD, enumerate_valid, space_size


@dataclass
class TargetSet:
    """A list of target points with optional witness sequences."""

    points: list[LaminationPoint]
    witnesses: list[StackingSequence | None]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "blocks": list(self.points[0].blocks) if self.points else [],
            "targets": [
                {
                    "values": p.values.tolist(),
                    "witness": list(w.labels) if w is not None else None,
                }
                for p, w in zip(self.points, self.witnesses)
            ],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TargetSet":
        if data.get("schema") != 1:
            raise SamplingError(f"unsupported target schema {data.get('schema')!r}")
        blocks = tuple(data["blocks"])
        points, witnesses = [], []
        for entry in data["targets"]:
            points.append(LaminationPoint(blocks, np.asarray(entry["values"])))
            w = entry.get("witness")
            witnesses.append(StackingSequence(tuple(w)) if w else None)
        return cls(points, witnesses, provenance=data.get("provenance", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "TargetSet":
        return cls.from_json_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Valid-sequence sampling
# ---------------------------------------------------------------------------


def _allowed_continuations(problem: SsrProblem) -> list[np.ndarray]:
    """Labels allowed after each previous label under disorientation rules."""
    d = problem.d
    banned = np.zeros((d, d), dtype=bool)
    for spec in problem.constraints:
        if isinstance(spec, Disorientation):
            banned |= spec.violation_table(problem.angle_set).astype(bool)
    return [np.flatnonzero(~banned[a]) + 1 for a in range(d)]


def random_valid_sequences(
    problem: SsrProblem, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample sequences by sequential uniform draw over allowed continuations.

    Only adjacency (disorientation) constraints shape the draw; the first
    ply is uniform over all labels.  Returns an ``(count, N)`` label array.
    """
    d, n = problem.d, problem.n_plies
    allowed = _allowed_continuations(problem)
    counts = np.array([len(a) for a in allowed])
    table = np.zeros((d, counts.max() if counts.max() else 1), dtype=np.int64)
    for a, row in enumerate(allowed):
        table[a, : len(row)] = row
    out = np.empty((count, n), dtype=np.int64)
    out[:, 0] = rng.integers(1, d + 1, size=count)
    for i in range(1, n):
        prev = out[:, i - 1] - 1
        c = counts[prev]
        if np.any(c == 0):
            raise SamplingError("dead end: a label admits no continuation")
        pick = (rng.random(count) * c).astype(np.int64)
        out[:, i] = table[prev, pick]
    return out


def random_valid_sequence(problem: SsrProblem, rng_or_seed) -> StackingSequence:
    rng = (
        rng_or_seed
        if isinstance(rng_or_seed, np.random.Generator)
        else np.random.default_rng(rng_or_seed)
    )
    labels = random_valid_sequences(problem, 1, rng)[0]
    return StackingSequence(tuple(int(s) for s in labels))


# ---------------------------------------------------------------------------
# Orbit-representative targets (enumerable spaces)
# ---------------------------------------------------------------------------


def inequivalent_targets(problem: SsrProblem, count: int, seed: int) -> TargetSet:
    """Targets from valid sequences in pairwise distinct dihedral orbits.

    The label space must be exhaustively enumerable.  Raises SamplingError
    (carrying the achievable count) if fewer orbits exist than requested.
    """
    if space_size(problem) > ENUMERATION_GUARD:
        raise SizeGuardError("label space too large; use kde_uniform_targets")
    orbits: dict[tuple[int, ...], StackingSequence] = {}
    for seq in enumerate_valid(problem):
        rep = orbit_representative(seq, problem.d)
        orbits.setdefault(rep.labels, rep)
    if len(orbits) < count:
        raise SamplingError(
            f"only {len(orbits)} orbits available, {count} requested",
            achieved=len(orbits),
        )
    reps = [orbits[key] for key in sorted(orbits)]
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(reps), size=count, replace=False)
    points, witnesses = [], []
    for i in sorted(int(j) for j in chosen):
        witness = reps[i]
        points.append(lamination_parameters(problem, witness))
        witnesses.append(witness)
    return TargetSet(
        points,
        witnesses,
        provenance={
            "method": "inequivalent_orbits",
            "seed": seed,
            "orbits_available": len(orbits),
        },
    )


# ---------------------------------------------------------------------------
# Density-flattened targets (large spaces)
# ---------------------------------------------------------------------------


def gaussian_product_kde(
    points: np.ndarray, queries: np.ndarray, bandwidth: np.ndarray
) -> np.ndarray:
    """Gaussian product-kernel density estimate.

    ``points`` is the sample cloud ``(m, D)``, ``bandwidth`` the per-
    dimension kernel widths ``(D,)``; returns densities at ``queries``.
    """
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float)
    h = np.asarray(bandwidth, dtype=float)
    if np.any(h <= 0):
        raise SamplingError("bandwidths must be positive")
    m, dim = points.shape
    scaled_p = points / h
    scaled_q = queries / h
    p_sq = np.sum(scaled_p**2, axis=1)
    norm = m * np.prod(h * np.sqrt(2.0 * np.pi))
    out = np.empty(queries.shape[0])
    chunk = max(1, (1 << 23) // max(m, 1))
    for start in range(0, queries.shape[0], chunk):
        q = scaled_q[start : start + chunk]
        d2 = np.sum(q**2, axis=1)[:, None] + p_sq[None, :] - 2.0 * (q @ scaled_p.T)
        np.maximum(d2, 0.0, out=d2)
        out[start : start + chunk] = np.exp(-0.5 * d2).sum(axis=1) / norm
    return out


def scott_bandwidth(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension Scott bandwidths and the indices of active dimensions.

    Dimensions with zero spread carry no information and are dropped from
    the kernel; the exponent uses the active dimension count.
    """
    points = np.asarray(points, dtype=float)
    sigma = points.std(axis=0)
    active = np.flatnonzero(sigma > 1e-12)
    if active.size == 0:
        raise SamplingError("degenerate sample: all points identical")
    m = points.shape[0]
    h = sigma[active] * m ** (-1.0 / (active.size + 4))
    return h, active


def kde_uniform_targets(
    problem: SsrProblem, n_samples: int, count: int, seed: int
) -> TargetSet:
    """Density-flattened targets from sampled valid sequences.

    Draws ``n_samples`` valid sequences, estimates the density of their
    lamination points with a Gaussian product kernel (per-dimension Scott
    bandwidth), and picks ``count`` distinct points without replacement
    with probability proportional to inverse density (exponential keys).
    """
    if count > n_samples:
        raise SamplingError(f"cannot pick {count} targets from {n_samples} samples")
    rng = np.random.default_rng(seed)
    labels = random_valid_sequences(problem, n_samples, rng)
    table = problem.angle_set.feature_table()
    feats = table[labels - 1]  # (m, N, 4)
    points = np.einsum("bnl,xn->bxl", feats, problem.weights.values).reshape(
        n_samples, -1
    )
    h, active = scott_bandwidth(points)
    density = gaussian_product_kde(points[:, active], points[:, active], h)

    unique_idx = np.unique(points.round(12), axis=0, return_index=True)[1]
    if unique_idx.size < count:
        raise SamplingError(
            f"only {unique_idx.size} distinct points sampled", achieved=int(unique_idx.size)
        )
    weights = 1.0 / density[unique_idx]
    keys = np.log(rng.random(unique_idx.size)) / weights
    order = np.argsort(-keys, kind="stable")[:count]
    chosen = np.sort(unique_idx[order])

    blocks = problem.blocks
    n_blocks = len(blocks)
    points_out = [
        LaminationPoint(blocks, points[i].reshape(n_blocks, 4)) for i in chosen
    ]
    witnesses = [
        StackingSequence(tuple(int(s) for s in labels[i])) for i in chosen
    ]
    return TargetSet(
        points_out,
        witnesses,
        provenance={
            "method": "kde_uniform",
            "seed": seed,
            "n_samples": n_samples,
            "bandwidth": h.tolist(),
            "active_dims": active.tolist(),
        },
    )
