import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cran_infer.convex import SolverOptions, solve
from cran_infer.convex.barrier import CompiledProgram
from cran_infer.metrics import (fronthaul_rate, fronthaul_matrix, gamma1,
                                received_discriminant_gain, received_gain_per_dimension)
from cran_infer.model import ChannelSet, FeatureStatistics, normalized_energy
from cran_infer.sca import (TRACE_HEADER, OptimizerError, ScaProblem, build_subproblem1, build_subproblem2,
                            complex_to_real_lift, initial_feasible_point, initial_iterate, interior_start,
                            lift_vector, linearize_gamma1, linearize_gamma2, run_algorithm1, transmit_scalars,
                            unlift_vector, write_trace)

from _instances import desk_instance, unit_config


def anchor_violation(sub):
    return CompiledProgram(sub.program).max_violation(sub.anchor)


class TestRealLift:
    def test_real_channel_is_block_diagonal(self):
        h = np.array([[[1.0, -2.0]], [[0.5, 3.0]]], dtype=complex)  # K=2, M=1, N=2
        lift = complex_to_real_lift(ChannelSet(h), np.ones(2))
        for k in range(2):
            hh = np.outer(h[k, 0].real, h[k, 0].real)
            G = lift.gain_matrices[k]
            np.testing.assert_array_equal(G[:2, :2], hh)
            np.testing.assert_array_equal(G[2:, 2:], hh)
            np.testing.assert_array_equal(G[:2, 2:], 0.0)

    def test_forms_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            K, M, N = rng.integers(1, 4, 3)
            h = rng.standard_normal((K, M, N)) + 1j * rng.standard_normal((K, M, N))
            m = rng.standard_normal(M * N) + 1j * rng.standard_normal(M * N)
            lift = complex_to_real_lift(ChannelSet(h), np.ones(M * N), m[None])
            direct = np.abs(ChannelSet(h).concatenated @ m.conj()) ** 2
            lifted = np.einsum("i,kij,j->k", lift.beamformers[0], lift.gain_matrices, lift.beamformers[0])
            np.testing.assert_allclose(lifted, direct, rtol=1e-12)
            for G in lift.gain_matrices:
                np.testing.assert_allclose(G, G.T, atol=1e-15 * np.abs(G).max())
                assert np.linalg.eigvalsh(G).min() >= -1e-12 * np.abs(G).max()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                    min_size=1, max_size=8))
    def test_vector_round_trip(self, values):
        m = np.array(values, dtype=complex)
        lifted = lift_vector(m)
        assert lifted.shape == (2 * len(m),)
        np.testing.assert_array_equal(unlift_vector(lifted), m)

    def test_quantization_block(self):
        q = np.array([0.5, 2.0, 3.0])
        lift = complex_to_real_lift(ChannelSet(np.ones((1, 1, 3), dtype=complex)), q)
        np.testing.assert_array_equal(lift.quantization, np.diag(np.concatenate([q, q])))


class TestGamma1Minorant:
    def test_anchor(self):
        minor = linearize_gamma1(0.7, [0.2, 0.5])
        np.testing.assert_allclose(minor(0.7, [0.2, 0.5]), gamma1(0.7, [0.2, 0.5]), rtol=1e-15)

    def test_hand_values(self):
        minor = linearize_gamma1(1.0, [1.0])
        assert minor(2.0, [2.0]) == pytest.approx(2.0) == gamma1(2.0, [2.0])
        assert minor(2.0, [1.0]) == pytest.approx(0.0)
        assert gamma1(2.0, [1.0]) == 0.5

    def test_lower_bound_random(self):
        rng = np.random.default_rng(1)
        worst = np.inf
        for _ in range(10_000):
            K = rng.integers(1, 6)
            minor = linearize_gamma1(rng.uniform(1e-3, 5), rng.uniform(0, 2, K))
            a, c = rng.uniform(1e-3, 5), rng.uniform(0, 2, K)
            worst = min(worst, gamma1(a, c) - minor(a, c))
        assert worst >= -1e-9

    def test_nonpositive_anchor(self):
        with pytest.raises(ValueError):
            linearize_gamma1(0.0, [1.0])


class TestGamma2Minorant:
    def test_anchor_and_bound(self):
        rng = np.random.default_rng(2)
        worst = np.inf
        for _ in range(10_000):
            n = rng.integers(1, 5)
            h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            H = complex_to_real_lift(ChannelSet(h[None, None, :]), np.ones(n)).gain_matrices[0]
            m_t = rng.standard_normal(2 * n)
            minor = linearize_gamma2(m_t, H)
            assert minor(m_t) == pytest.approx(m_t @ H @ m_t, rel=1e-12, abs=1e-14)
            m = rng.standard_normal(2 * n) * 3
            worst = min(worst, m @ H @ m - minor(m))
        assert worst >= -1e-9

    def test_zero_anchor(self):
        H = np.diag([1.0, 2.0])
        minor = linearize_gamma2(np.zeros(2), H)
        np.testing.assert_array_equal(minor.coef, 0.0)
        assert minor.const == 0.0


class TestSubproblems:
    def test_unit_shape(self):
        cfg = unit_config()
        stats = FeatureStatistics(np.array([[0.0], [1.0]]), np.array([1.0]))
        problem = ScaProblem(cfg, stats, ChannelSet(np.ones((1, 1, 1), dtype=complex)))
        sub = build_subproblem1(initial_iterate(problem), problem)
        assert sub.program.n == 1 + 1 + 1 + 2
        tags = sub.program.tags
        assert sorted(t for t in tags if t in ("power", "energy-aux", "energy", "lambda")) == \
            ["energy", "energy-aux", "lambda", "power"]
        assert {"alpha-floor", "beta-floor", "c-nonneg"} <= set(tags)

    @pytest.mark.parametrize("seed", range(5))
    def test_anchors_feasible_along_a_run(self, seed):
        cfg, ch, stats = desk_instance(100 + seed)
        problem = ScaProblem(cfg, stats, ch)
        it = initial_iterate(problem)
        for _ in range(3):
            for build in (build_subproblem1, build_subproblem2):
                sub = build(it, problem)
                assert anchor_violation(sub) <= 1e-9
                comp = CompiledProgram(sub.program)
                assert comp.strictly_feasible(sub.start)
                rep = solve(sub.program, warm_start=sub.start)
                assert rep.ok
                assert rep.objective >= sub.program.objective @ sub.anchor - 1e-9
                cand = sub.decode(rep.x)
                it = problem.refresh(cand.c, cand.m, cand.q)
                assert problem.feasible(it)

    def test_subproblem1_never_loses_on_fifty_instances(self):
        for seed in range(400, 450):
            cfg, ch, stats = desk_instance(seed)
            problem = ScaProblem(cfg, stats, ch)
            sub = build_subproblem1(initial_iterate(problem), problem)
            assert anchor_violation(sub) <= 1e-9
            rep = solve(sub.program, warm_start=sub.start)
            assert rep.ok
            assert rep.objective >= sub.program.objective @ sub.anchor - 1e-9

    def test_lambda_affine_in_q(self):
        cfg, ch, stats = desk_instance(7)
        problem = ScaProblem(cfg, stats, ch)
        it = initial_iterate(problem)
        rng = np.random.default_rng(7)

        def lam(q):
            S = it.c.sum(axis=0)
            var = S ** 2 * problem.feature_var + (it.c ** 2 * problem.sensing[:, None]).sum(0) + problem.noise(it.m, q)
            return var / problem.kappa

        q1, q2 = rng.uniform(0.1, 5, problem.n), rng.uniform(0.1, 5, problem.n)
        np.testing.assert_allclose(lam(0.3 * q1 + 0.7 * q2), 0.3 * lam(q1) + 0.7 * lam(q2), rtol=1e-13)
        # the emitted rows carry exactly that slope
        sub = build_subproblem2(it, problem)
        rec = [c for c, t in zip(sub.program.constraints, sub.program.tags) if t == "lambda"][0]
        a, _ = rec.rows()
        iq = sub.program.layout.indices("q")
        np.testing.assert_allclose(a[:, iq], 0.5 * np.abs(it.m) ** 2 / problem.kappa[:, None], rtol=1e-15)

    def test_more_capacity_helps_subproblem2(self):
        cfg, ch, stats = desk_instance(8, fronthaul_capacity=2.0)
        objs = []
        for C in (2.0, 4.0):
            problem = ScaProblem(cfg.replace(fronthaul_capacity=C), stats, ch)
            it = initial_iterate(ScaProblem(cfg, stats, ch))
            sub = build_subproblem2(it, problem)
            objs.append(solve(sub.program, warm_start=sub.start).objective)
        assert objs[1] >= objs[0] - 1e-9


class TestInitialPoint:
    @pytest.mark.parametrize("seed", range(5))
    def test_strictly_feasible(self, seed):
        cfg, ch, stats = desk_instance(200 + seed)
        problem = ScaProblem(cfg, stats, ch)
        it = initial_iterate(problem)
        v = problem.violations(it)
        assert v["power"] < 0 and v["energy"] < 0
        # q sits on the rate limit by construction (bisection from the inside)
        assert v["fronthaul"] <= 0

    def test_unit_instance(self):
        cfg = unit_config(max_precoding_power=0.5, energy_budget=2.0, awgn_power=1.0)
        stats = FeatureStatistics(np.array([[0.0], [1.0]]), np.array([1.0]))
        sol = initial_feasible_point(cfg, ChannelSet(np.ones((1, 1, 1), dtype=complex)), stats)
        np.testing.assert_allclose(sol.beamformers, [[1.0]])
        expected = min(np.sqrt(0.5), np.sqrt(normalized_energy(cfg))) / np.sqrt(2)
        np.testing.assert_allclose(sol.receive_strength, [[expected]], rtol=1e-14)

    def test_zero_sensing_still_feasible(self):
        cfg, ch, stats = desk_instance(9, sensing_noise_power=0.0)
        problem = ScaProblem(cfg, stats, ch)
        assert problem.feasible(initial_iterate(problem))

    def test_all_zero_channels(self):
        cfg, _, stats = desk_instance(10)
        with pytest.raises(ValueError):
            initial_feasible_point(cfg, ChannelSet(np.zeros((5, 2, 2), dtype=complex)), stats)


class TestAlgorithm:
    @pytest.mark.parametrize("seed", range(4))
    def test_run_properties(self, seed):
        cfg, ch, stats = desk_instance(300 + seed)
        sol, state = run_algorithm1(cfg, ch, stats)
        obj = state.objectives
        assert np.all(np.diff(obj) >= -1e-9)
        assert state.converged and state.iteration <= 50
        # alpha is the received gain of the returned design
        active = np.flatnonzero(sol.aux_gain > 0)
        np.testing.assert_allclose(sol.aux_gain[active], received_gain_per_dimension(sol, stats, cfg)[active],
                                   rtol=1e-5)
        np.testing.assert_allclose(received_discriminant_gain(sol, stats, cfg), obj[-1], rtol=1e-9)
        # zero-forcing: m^H h b = c
        b = transmit_scalars(sol, ch)
        np.testing.assert_allclose(sol.effective_gains(ch) * b, sol.receive_strength, atol=1e-10 * sol.receive_strength.max())
        # feasibility in physical units
        g2 = np.abs(sol.effective_gains(ch)) ** 2
        assert np.all(sol.receive_strength ** 2 <= cfg.max_precoding_power[:, None] * g2 * (1 + 1e-7))
        assert fronthaul_rate(sol.quantization_diag, fronthaul_matrix(cfg, ch)) <= cfg.fronthaul_capacity + 1e-7

    def test_half_iterations_monotone(self):
        cfg, ch, stats = desk_instance(310)
        _, state = run_algorithm1(cfg, ch, stats)
        halves = [r for r in state.trace if r.half > 0]
        assert [r.subproblem for r in halves[:2]] == ["sp1", "sp2"]
        assert all(b.objective >= a.objective - 1e-9 for a, b in zip(state.trace, state.trace[1:]))

    def test_single_device_closed_form(self):
        # one device and one antenna: the gain grows with c and falls with q, so
        # the optimum sits at full transmit power (or energy) and on the rate limit
        h = 0.8 * np.exp(0.3j)
        cfg = unit_config(max_precoding_power=0.5, energy_budget=0.3, awgn_power=0.2, sensing_noise_power=0.05,
                          fronthaul_capacity=2.0)
        stats = FeatureStatistics(np.array([[0.0], [1.5]]), np.array([0.7]))
        ch = ChannelSet(np.full((1, 1, 1), h))
        sol, _ = run_algorithm1(cfg, ch, stats, eps_stop=1e-8, max_iters=200)
        got = received_discriminant_gain(sol, stats, cfg)
        b2 = min(0.5, 0.3)
        A = 0.5 * abs(h) ** 2 + 0.2
        q = A / (2.0 ** 2.0 - 1.0)
        # with |m| = 1 the received strength is c = |b| |h|
        c2 = b2 * abs(h) ** 2
        best = 2.25 * c2 / (c2 * (0.7 + 0.05) + 0.5 * (0.2 + q))
        np.testing.assert_allclose(got, best, rtol=1e-3)
        assert got <= best * (1 + 1e-6)

    def test_solver_failure_carries_trace(self):
        cfg, ch, stats = desk_instance(11)
        with pytest.raises(OptimizerError) as info:
            run_algorithm1(cfg, ch, stats, options=SolverOptions(max_newton=1, max_outer=1))
        assert info.value.state.trace[0].subproblem == "init"

    def test_dimension_pinned_at_the_alpha_floor(self):
        # at a tiny energy budget one dimension is abandoned; the subproblem
        # starts must still find interior points next to the floor
        cfg, ch, stats = desk_instance(5000, energy_budget=3.727593720314938e-06)
        sol, state = run_algorithm1(cfg, ch, stats)
        assert state.converged
        assert sol.aux_gain.min() < 1e-7

    def test_interior_start_gives_up(self):
        cfg, ch, stats = desk_instance(15)
        problem = ScaProblem(cfg, stats, ch)
        sub = build_subproblem2(initial_iterate(problem), problem)
        assert interior_start(sub.program, lambda f: sub.anchor) is None
        assert interior_start(sub.program, lambda f: sub.start) is sub.start

    def test_bad_eps(self):
        cfg, ch, stats = desk_instance(12)
        with pytest.raises(ValueError):
            run_algorithm1(cfg, ch, stats, eps_stop=0.0)

    def test_trace_csv(self, tmp_path):
        cfg, ch, stats = desk_instance(13)
        _, state = run_algorithm1(cfg, ch, stats)
        buf = io.StringIO()
        write_trace(buf, state.trace)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert tuple(rows[0]) == TRACE_HEADER == ("iter", "half", "objective", "subproblem", "newton_steps",
                                                  "violation")
        assert len(rows) == len(state.trace) + 1
        write_trace(tmp_path / "t.csv", state.trace, scheme="proposed")
        assert (tmp_path / "t.csv").read_text().splitlines()[0].endswith(",scheme")

    def test_warm_start_from_own_solution(self):
        cfg, ch, stats = desk_instance(14)
        sol, state = run_algorithm1(cfg, ch, stats)
        _, again = run_algorithm1(cfg, ch, stats, start=sol)
        assert again.objectives[0] == pytest.approx(state.objectives[-1], rel=1e-12)
        assert again.objectives[-1] >= state.objectives[-1]
