import json
import math

import numpy as np
import pytest

from stackseq import (
    DmrgPlan,
    Environment,
    SweepDirection,
    SweepTrace,
    dmrg_run,
    exhaustive_min,
    expectation,
    loss,
    loss_mpo_sum,
    random_mps,
    sweep_directions,
    sweep_schedule,
    total_value,
)
from stackseq.dmrg import effective_matrix, local_update
from stackseq.errors import DomainError, ShapeMismatchError

from .conftest import reachable_problem


class TestPlan:
    def test_collapse_length(self):
        assert DmrgPlan(n_sweeps=10, chi_max=32).collapse_length == 6
        assert DmrgPlan(n_sweeps=5, chi_max=8).collapse_length == 4
        assert DmrgPlan(n_sweeps=2, chi_max=1).collapse_length == 1

    def test_collapse_needs_room(self):
        with pytest.raises(DomainError):
            DmrgPlan(n_sweeps=6, chi_max=32, collapse=True)
        DmrgPlan(n_sweeps=6, chi_max=32, collapse=False)

    def test_direction_coercion(self):
        plan = DmrgPlan(n_sweeps=3, direction="inward", collapse=False)
        assert plan.direction is SweepDirection.INWARD
        with pytest.raises(ValueError):
            DmrgPlan(n_sweeps=3, direction="sideways", collapse=False)

    def test_cutoff_range(self):
        with pytest.raises(DomainError):
            DmrgPlan(n_sweeps=3, collapse=False, svd_cutoff=1.0)


class TestSchedule:
    def test_collapse_tail(self):
        plan = DmrgPlan(n_sweeps=10, chi_max=32, collapse=True)
        sched = sweep_schedule(plan)
        assert sched[:4] == [(32, 0.0)] * 4
        assert [c for c, _ in sched[4:]] == [16, 8, 4, 2, 1, 1]
        assert sched[-1][1] == 0.5

    def test_final_cutoff_respects_plan(self):
        plan = DmrgPlan(n_sweeps=8, chi_max=4, collapse=True, svd_cutoff=0.7)
        assert sweep_schedule(plan)[-1] == (1, 0.7)

    def test_no_collapse(self):
        plan = DmrgPlan(n_sweeps=4, chi_max=8, collapse=False, svd_cutoff=0.1)
        assert sweep_schedule(plan) == [(8, 0.1)] * 4

    def test_directions(self):
        alt = DmrgPlan(n_sweeps=4, collapse=False)
        assert sweep_directions(alt) == [
            SweepDirection.OUTWARD,
            SweepDirection.INWARD,
            SweepDirection.OUTWARD,
            SweepDirection.INWARD,
        ]
        out = DmrgPlan(n_sweeps=3, direction="outward", collapse=False)
        assert sweep_directions(out) == [SweepDirection.OUTWARD] * 3


class TestLocalUpdate:
    @pytest.fixture()
    def pieces(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 4, seed=20, constraints=all_penalties)
        terms = loss_mpo_sum(problem)
        mps = random_mps(4, 4, 4, seed=21)
        mps.canonicalize(1)
        env = Environment(mps, terms)
        bond_op = np.einsum("abs,bct->stac", env.w_sites[1], env.w_sites[2])
        block = np.tensordot(mps.tensors[1], mps.tensors[2], axes=([2], [0]))
        return mps, env, bond_op, block

    def test_lambda_matches_dense_blocks(self, pieces):
        mps, env, bond_op, block = pieces
        g = effective_matrix(env.left[1], env.right[3], bond_op)
        want = min(float(np.linalg.eigvalsh(b)[0]) for b in g)
        upd = local_update(
            block, env.left[1], env.right[3], bond_op,
            chi_cap=16, cutoff=0.0, move_right=True,
            rng=np.random.default_rng(0),
        )
        assert upd.lambda_local == pytest.approx(want, abs=1e-8)

    def test_effective_blocks_are_symmetric(self, pieces):
        _, env, bond_op, _ = pieces
        g = effective_matrix(env.left[1], env.right[3], bond_op)
        assert g.shape[0] == 16
        np.testing.assert_allclose(g, np.swapaxes(g, 1, 2), atol=1e-12)

    def test_never_worse_than_incoming(self, pieces):
        mps, env, bond_op, block = pieces
        upd = local_update(
            block, env.left[1], env.right[3], bond_op,
            chi_cap=16, cutoff=0.0, move_right=False,
            rng=np.random.default_rng(1),
        )
        assert upd.lambda_local <= upd.rayleigh_incoming + 1e-9

    def test_gauge_of_split(self, pieces):
        mps, env, bond_op, block = pieces
        upd = local_update(
            block, env.left[1], env.right[3], bond_op,
            chi_cap=16, cutoff=0.0, move_right=True,
            rng=np.random.default_rng(2),
        )
        m = upd.left_site.reshape(-1, upd.bond_dim)
        np.testing.assert_allclose(m.T @ m, np.eye(upd.bond_dim), atol=1e-10)


class TestRun:
    def test_recovers_reachable_target(self, angles):
        problem, witness = reachable_problem(angles, 6, seed=22)
        terms = loss_mpo_sum(problem)
        best = math.inf
        for seed in range(3):
            init = random_mps(6, 4, 32, seed=seed)
            plan = DmrgPlan(n_sweeps=10, chi_max=32, collapse=True, seed=seed)
            res = dmrg_run(problem, terms, init, plan)
            assert res.sequence is not None
            best = min(best, loss(problem, res.sequence))
            if best <= 1e-8:
                break
        assert best <= 1e-8
        assert loss(problem, witness) <= 1e-12

    def test_matches_exhaustive_optimum(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 5, seed=23, constraints=all_penalties)
        terms = loss_mpo_sum(problem)
        oracle = exhaustive_min(problem)
        best = math.inf
        # rugged penalty landscape: a handful of restarts is expected here
        for seed in range(6):
            init = random_mps(5, 4, 16, seed=100 + seed)
            plan = DmrgPlan(n_sweeps=9, chi_max=16, collapse=True, seed=seed)
            res = dmrg_run(problem, terms, init, plan)
            best = min(best, total_value(problem, res.sequence))
            if best <= oracle.min_loss + 1e-9:
                break
        assert best == pytest.approx(oracle.min_loss, abs=1e-9)

    def test_trace_shape_and_invariants(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 6, seed=24, constraints=all_penalties)
        terms = loss_mpo_sum(problem)
        init = random_mps(6, 4, 8, seed=25)
        plan = DmrgPlan(n_sweeps=6, chi_max=8, collapse=True, seed=0)
        res = dmrg_run(problem, terms, init, plan)
        t = res.trace
        assert t.n_records == 7
        assert math.isnan(t.lambda_min[0])
        assert all(g <= 1e-9 for g in t.eig_gap_max[1:])
        assert all(e <= 1e-10 for e in t.norm_error)
        assert t.expectation[-1] <= t.expectation[0] + 1e-9

    def test_collapsed_state_is_product(self, angles, all_penalties):
        problem, _ = reachable_problem(angles, 6, seed=26, constraints=all_penalties)
        terms = loss_mpo_sum(problem)
        res = dmrg_run(
            problem, terms, random_mps(6, 4, 8, seed=27),
            DmrgPlan(n_sweeps=6, chi_max=8, collapse=True),
        )
        assert all(chi == 1 for chi in res.mps.bond_dims)
        assert res.sequence is not None
        assert expectation(res.mps, terms) == pytest.approx(
            total_value(problem, res.sequence), abs=1e-9
        )

    def test_unidirectional_gauge_return(self, angles):
        problem, _ = reachable_problem(angles, 5, seed=28)
        terms = loss_mpo_sum(problem)
        res = dmrg_run(
            problem, terms, random_mps(5, 4, 4, seed=29),
            DmrgPlan(n_sweeps=3, direction="outward", chi_max=4, collapse=False),
        )
        assert res.mps.center == 0
        assert res.sequence is None
        res = dmrg_run(
            problem, terms, random_mps(5, 4, 4, seed=29),
            DmrgPlan(n_sweeps=3, direction="inward", chi_max=4, collapse=False),
        )
        assert res.mps.center == 4

    def test_deterministic_given_seeds(self, angles):
        problem, _ = reachable_problem(angles, 5, seed=30)
        terms = loss_mpo_sum(problem)
        runs = [
            dmrg_run(
                problem, terms, random_mps(5, 4, 8, seed=31),
                DmrgPlan(n_sweeps=6, chi_max=8, collapse=True, seed=5),
            )
            for _ in range(2)
        ]
        assert runs[0].trace.canonical_jsonl() == runs[1].trace.canonical_jsonl()
        assert runs[0].sequence == runs[1].sequence

    def test_shape_mismatch_refused(self, angles):
        problem, _ = reachable_problem(angles, 5, seed=32)
        terms = loss_mpo_sum(problem)
        with pytest.raises(ShapeMismatchError):
            dmrg_run(problem, terms, random_mps(6, 4, 4, seed=0), DmrgPlan(3, collapse=False))

    def test_needs_two_sites(self, angles):
        problem, _ = reachable_problem(angles, 1, seed=33)
        terms = loss_mpo_sum(problem)
        with pytest.raises(DomainError):
            dmrg_run(problem, terms, random_mps(1, 4, 1, seed=0), DmrgPlan(3, collapse=False))


class TestTrace:
    def test_canonical_excludes_timing(self):
        t = SweepTrace()
        t.append(1.0, 4, 0.33, math.nan, math.nan, 0.0)
        t.append(0.5, 4, 0.21, 0.4, -1e-12, 1e-16)
        lines = t.canonical_jsonl().strip().split("\n")
        assert len(lines) == 2
        for line in lines:
            rec = json.loads(line)
            assert "duration_s" not in rec
            assert rec["schema"] == 1
        assert json.loads(lines[0])["lambda_min"] is None

    def test_records_round_trip(self):
        t = SweepTrace()
        t.append(1.0, 4, 0.33, math.nan, math.nan, 0.0)
        t.append(0.5, 8, 0.21, 0.4, -1e-12, 1e-16)
        back = SweepTrace.from_records(t.to_records())
        assert back.expectation == t.expectation
        assert back.max_bond == t.max_bond
        assert back.duration_s == t.duration_s
        assert math.isnan(back.lambda_min[0]) and back.lambda_min[1] == 0.4

    def test_timing_kept_in_full_records(self):
        t = SweepTrace()
        t.append(1.0, 4, 0.33, 0.9, 0.0, 0.0)
        rec = t.to_records()[0]
        assert rec["duration_s"] == pytest.approx(0.33)
        assert rec["sweep"] == 0
