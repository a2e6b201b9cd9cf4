import math

import numpy as np
import pytest

from rbsde import (
    BarrierSpec,
    DriverSpec,
    PicardConfig,
    ScenarioError,
    SolutionQuad,
    TerminalSpec,
    UnsupportedDriverError,
    backward_induction_oracle,
    build_tree,
    constant_barriers,
    contraction_constants,
    eval_barriers,
    make_uniform_grid,
    optional_projection,
    phi_iterate,
    picard_distance,
    remainder_path,
    residual_check,
    solve_picard,
    stochastic_integral,
    validate_scenario,
    warm_start,
)
from rbsde.experiments import ScenarioSpec


def scenario(N, lo, hi, driver, terminal, T=1.0):
    g = make_uniform_grid(T, N)
    return validate_scenario(build_tree(g), constant_barriers(g, lo, hi), driver, terminal)


RESISTANCE = DriverSpec("affine", (0.5, 0.05, 0.05, -0.05), L1=0.05, L2=0.05)


def resistance_scenario(N=10):
    return scenario(N, -0.4, 0.4, RESISTANCE, TerminalSpec("clamp", (-0.2, 0.2)))


# -- catalog entries ---------------------------------------------------------


def test_driver_catalog_and_lipschitz():
    assert DriverSpec("zero").exact_lipschitz() == (0.0, 0.0)
    assert DriverSpec("affine", (1, -0.3, 0.2, 0.7)).exact_lipschitz() == (0.3, 0.7)
    d = DriverSpec("bounded_nonlinear", (0.4,))
    assert (d.L1, d.L2) == (0.4, 0.4)
    assert d(0.0, 0.1, 0.2, 0.3) == pytest.approx(0.4 * math.tanh(0.6))
    assert DriverSpec("affine", (1, 2, 3, 4))(0.5, 1.0, 1.0, 1.0) == 10.0
    assert np.array_equal(DriverSpec("constant", (2,))(0.0, np.zeros(3), 0.0, 0.0), [2, 2, 2])
    assert DriverSpec.from_dict(d.to_dict()) == d


def test_driver_declared_constant_must_dominate():
    with pytest.raises(ValueError, match="L2"):
        DriverSpec("affine", (0, 0, 0, -0.5), L2=0.1)
    assert DriverSpec("affine", (0, 0, 0, -0.5), L2=1.0).L2 == 1.0
    with pytest.raises(ValueError):
        DriverSpec("affine", (0, 0))
    with pytest.raises(ValueError):
        DriverSpec("quadratic")


def test_terminal_catalog():
    t = build_tree(make_uniform_grid(1.0, 4))
    w = t.W[-1]
    assert np.array_equal(TerminalSpec("identity").evaluate(t), w)
    assert np.allclose(TerminalSpec("affine", (1, 2)).evaluate(t), 1 + 2 * w)
    assert np.allclose(TerminalSpec("clamp", (-0.5, 0.5)).evaluate(t), np.clip(w, -0.5, 0.5))
    assert np.allclose(TerminalSpec("sin", (2, 3)).evaluate(t), 2 * np.sin(3 * w))
    assert np.allclose(TerminalSpec("running_max").evaluate(t), t.W.max(axis=0))
    assert TerminalSpec("running_max", (0, 0.5)).evaluate(t).max() == 0.5
    with pytest.raises(ValueError):
        TerminalSpec("clamp", (1, 0))
    s = TerminalSpec("sin", (2, 3))
    assert TerminalSpec.from_dict(s.to_dict()) == s


def test_picard_config_validation():
    for bad in ({"tol": 0.0}, {"max_iter": 0}, {"alpha": -1.0}, {"gamma1": 0.0}, {"c_b": -1.0}):
        with pytest.raises(ValueError):
            PicardConfig(**bad)


# -- validate_scenario -------------------------------------------------------


def test_validate_examples():
    g = make_uniform_grid(1.0, 16)
    tree = build_tree(g)
    validate_scenario(tree, constant_barriers(g, -10, 10), DriverSpec("zero"), TerminalSpec("identity"))
    with pytest.raises(ScenarioError, match="outside"):
        validate_scenario(tree, constant_barriers(g, -1, 1), DriverSpec("zero"), TerminalSpec("constant", (5,)))
    b = eval_barriers(BarrierSpec("sinusoid", (-0.3, 0.1, 5)), BarrierSpec("affine", (0.4, -0.1)), g)
    lo, hi = b.lower.values[-1], b.upper.values[-1]
    validate_scenario(tree, b, DriverSpec("zero"), TerminalSpec("clamp", (lo + 0.01, hi - 0.01)))


def test_validate_checks_grid_and_shape():
    g = make_uniform_grid(1.0, 4)
    tree = build_tree(g)
    with pytest.raises(ScenarioError):
        validate_scenario(tree, constant_barriers(make_uniform_grid(1.0, 5), -1, 1), DriverSpec("zero"), np.zeros(16))
    with pytest.raises(ScenarioError):
        validate_scenario(tree, constant_barriers(g, -1, 1), DriverSpec("zero"), np.zeros(3))
    with pytest.raises(ScenarioError):
        validate_scenario(tree, constant_barriers(g, -1, 1), DriverSpec("zero"), np.full(16, np.nan))


# -- remainder_path ----------------------------------------------------------


def test_remainder_constant():
    scn = scenario(4, -1, 1, DriverSpec("zero"), TerminalSpec("constant", (0.3,)))
    x = remainder_path(scn, SolutionQuad.zeros(scn.tree), 5)
    assert np.array_equal(x.values, np.full(5, 0.3))


def test_remainder_telescopes_to_reversed_w():
    scn = scenario(5, -10, 10, DriverSpec("zero"), TerminalSpec("identity"))
    q = SolutionQuad.zeros(scn.tree)
    q.Z[:-1] = 1.0
    for w in (0, 7, 31):
        assert np.allclose(remainder_path(scn, q, w).values, scn.tree.W[::-1, w], atol=1e-14)


def test_remainder_affine_matches_loop():
    rng = np.random.default_rng(2)
    drv = DriverSpec("affine", (0.2, 0.3, -0.1, 0.4))
    scn = scenario(5, -10, 10, drv, TerminalSpec("sin", (1, 1)))
    t = scn.tree
    q = SolutionQuad(t.grid, *(optional_projection(t, rng.normal(size=t.shape)) for _ in range(2)),
                     np.cumsum(np.abs(rng.normal(size=t.shape)), axis=0), t.zeros())
    Kb = optional_projection(t, q.K)
    for w in (0, 13):
        m = []
        for k in range(t.N + 1):
            total = scn.xi[w]
            for i in range(k, t.N):
                f = 0.2 + 0.3 * q.Y[i, w] - 0.1 * q.Z[i, w] + 0.4 * Kb[i, w]
                total += f * t.dt - q.Z[i, w] * t.dW[i, w]
            m.append(total)
        assert np.allclose(remainder_path(scn, q, w).values, m[::-1], atol=1e-12)


# -- one Picard step and full solves ------------------------------------------


def test_phi_pure_martingale():
    scn = scenario(6, -10, 10, DriverSpec("zero"), TerminalSpec("identity"))
    q = phi_iterate(scn, SolutionQuad.zeros(scn.tree))
    assert np.allclose(q.Y, scn.tree.W, atol=1e-13)
    assert np.allclose(q.Z[:-1], 1.0)
    assert np.array_equal(q.Kl, scn.tree.zeros()) and np.array_equal(q.Ku, scn.tree.zeros())


def test_phi_deterministic_ode():
    scn = scenario(6, -10, 10, DriverSpec("constant", (0.7,)), TerminalSpec("constant", (0.0,)))
    q = phi_iterate(scn, SolutionQuad.zeros(scn.tree))
    t = scn.grid.times
    assert np.allclose(q.Y, 0.7 * (1.0 - t)[:, None], atol=1e-14)
    assert np.allclose(q.Z, 0.0, atol=1e-13) and np.allclose(q.K, 0.0)


def test_hand_two_step_example():
    # f = 0.5, barriers [-0.3, 0.3], xi = clamp(W_2): computed by hand on the four paths
    scn = scenario(2, -0.3, 0.3, DriverSpec("constant", (0.5,)), TerminalSpec("clamp", (-0.3, 0.3)))
    s = 1 / (2 * math.sqrt(0.5))
    for q in (solve_picard(scn)[0], backward_induction_oracle(scn)):
        assert np.allclose(q.Y, [[0.3] * 4, [0.1, 0.1, 0.3, 0.3], [-0.3, 0, 0, 0.3]], atol=1e-14)
        assert np.allclose(q.Ku, [[0] * 4, [0.15] * 4, [0.15, 0.15, 0.25, 0.25]], atol=1e-14)
        assert np.allclose(q.Kl, 0.0)
        assert np.allclose(q.Z[:2], [[0.2 * s] * 4, [0.3 * s] * 4], atol=1e-14)


def test_trivial_solve():
    scn = scenario(8, -10, 10, DriverSpec("zero"), TerminalSpec("identity"))
    q, rep = solve_picard(scn)
    assert rep.converged and rep.iterations <= 2
    assert np.allclose(q.Y, scn.tree.W) and np.allclose(q.Z[:-1], 1.0)
    r = residual_check(scn, q)
    assert max(r["identity"], r["containment"], r["flat_off"]) <= 1e-12


def test_resistance_fixed_point_certificate():
    scn = resistance_scenario()
    q, rep = solve_picard(scn)
    dt = scn.tree.dt
    assert rep.converged and rep.iterations <= 30
    assert rep.contracting
    r = rep.residuals
    assert r["identity"] <= 10 * dt * (1 + 0.05 + 0.05)
    assert r["containment"] == 0.0
    assert r["flat_off"] <= 1e-9 * max(1.0, r["regulator_variation"])
    assert r["regulator_decrease"] == 0.0 and r["terminal"] == 0.0
    # at the fixed point the raw reflected regulator is already adapted
    assert rep.adaptedness_gap <= 1e-8 and rep.raw_vs_projected_gap <= 1e-8
    assert rep.decomposition_gap <= 1e-12
    assert rep.geometric_r2 > 0.9
    # frozen reference values
    assert q.Y[0, 0] == pytest.approx(0.4, abs=1e-12)
    assert q.K[-1].mean() == pytest.approx(-0.12399631551018145, abs=1e-8)


def test_regulators_monotone_and_start_at_zero():
    scn = scenario(8, -0.25, 0.3, DriverSpec("bounded_nonlinear", (0.3,)), TerminalSpec("sin", (0.2, 2.0)))
    q, rep = solve_picard(scn)
    assert rep.converged
    assert np.all(np.diff(q.Kl, axis=0) >= 0) and np.all(np.diff(q.Ku, axis=0) >= 0)
    assert np.array_equal(q.Kl[0], np.zeros(scn.tree.n_paths))
    assert scn.tree.is_adapted(q.Y) and scn.tree.is_adapted(q.Kl)


def test_cold_and_warm_start_agree():
    scn = resistance_scenario()
    cold, _ = solve_picard(scn)
    warm, rep = solve_picard(scn, initial=warm_start(scn))
    assert rep.converged
    for a, b in ((cold.Y, warm.Y), (cold.Z, warm.Z), (cold.K, warm.K)):
        assert np.max(np.abs(a - b)) <= 1e-7


def test_large_resistance_flags_no_contraction():
    scn = scenario(10, -0.4, 0.4, DriverSpec("affine", (0.5, 0, 0, -10.0)), TerminalSpec("clamp", (-0.2, 0.2)))
    _, rep = solve_picard(scn)
    assert not rep.contracting
    assert max(rep.ratios[1:]) > 1.0
    c = rep.constants
    assert not c["recomputed_k_ok"] and not c["printed_l2_ok"]


def test_nonconvergence_is_reported():
    scn = resistance_scenario()
    _, rep = solve_picard(scn, PicardConfig(max_iter=2))
    assert not rep.converged and rep.iterations == 2
    assert not rep.contracting


def test_narrow_barriers_match_oracle():
    scn = scenario(8, -0.3, 0.3, DriverSpec("zero"), TerminalSpec("clamp", (-0.3, 0.3)))
    q, _ = solve_picard(scn)
    o = backward_induction_oracle(scn)
    assert np.max(np.abs(q.Y - o.Y)) <= 1e-12
    assert np.max(np.abs(q.K - o.K)) <= 1e-12


def test_oracle_gap_is_order_dt():
    spec = ScenarioSpec(1.0, BarrierSpec("constant", (-0.3,)), BarrierSpec("constant", (0.3,)),
                        DriverSpec("affine", (0.5, 0.05, 0.05, 0.0)), TerminalSpec("clamp", (-0.2, 0.2)))
    consts = []
    for N in (6, 8, 10, 12):
        scn = spec.build(N)
        err = np.max(np.abs(solve_picard(scn)[0].Y - backward_induction_oracle(scn).Y))
        consts.append(err / scn.tree.dt)
    assert all(c <= 1.5 * consts[0] for c in consts[1:])


# -- distance and constants ---------------------------------------------------


def test_picard_distance_closed_forms():
    t = build_tree(make_uniform_grid(2.0, 4))
    q1 = SolutionQuad.zeros(t)
    q2 = q1.copy()
    cfg = PicardConfig(alpha=0.0, beta=1.0)
    assert picard_distance(q1, q2, cfg) == 0.0
    q2.Y += 1.0
    assert picard_distance(q1, q2, cfg, squared=True) == pytest.approx(2.0)
    assert picard_distance(q1, q2, cfg) == pytest.approx(math.sqrt(2.0))


def test_picard_distance_matches_loop():
    rng = np.random.default_rng(6)
    t = build_tree(make_uniform_grid(1.0, 4))
    q1 = SolutionQuad(t.grid, *(rng.normal(size=t.shape) for _ in range(4)))
    q2 = SolutionQuad(t.grid, *(rng.normal(size=t.shape) for _ in range(4)))
    cfg = PicardConfig(alpha=1.3, beta=0.7)
    total, kmax = 0.0, 0.0
    for k in range(t.N + 1):
        ey = sum((q1.Y[k, w] - q2.Y[k, w]) ** 2 for w in range(t.n_paths)) / t.n_paths
        ez = sum((q1.Z[k, w] - q2.Z[k, w]) ** 2 for w in range(t.n_paths)) / t.n_paths
        ek = sum((q1.K[k, w] - q2.K[k, w]) ** 2 for w in range(t.n_paths)) / t.n_paths
        if k < t.N:
            total += math.exp(1.3 * t.grid.times[k]) * (ey + ez) * t.dt
        kmax = max(kmax, ek)
    assert picard_distance(q1, q2, cfg, squared=True) == pytest.approx(total + 0.7 * kmax, rel=1e-12)


def test_contraction_constants_degenerate_and_substituted():
    cfg = PicardConfig(beta=0.5, c_b=4.0)
    c = contraction_constants(0.0, 0.0, 1.0, cfg)
    assert c["coef_yz"] == pytest.approx(45 * 0.5 * 4.0)
    assert c["coef_k"] == 0.0
    L1, T = 0.1, 2.0
    c = contraction_constants(L1, 0.0, T, cfg)
    assert c["gamma1"] == pytest.approx(2 / L1)
    assert c["coef_yz"] == pytest.approx(L1**2 + 45 * 0.5 * (T * L1**2 + 4.0))
    assert c["alpha"] == 5.0


def test_contraction_flags():
    c = contraction_constants(0.05, 0.05, 1.0)
    # the published bound on L1 involves the square root of (1/2 - C_b) < 0
    assert math.isnan(c["printed_l1_bound"]) and not c["printed_l1_ok"]
    assert c["printed_l2_ok"] and c["recomputed_k_ok"]
    assert not c["recomputed_yz_ok"]
    assert c["printed_l2_bound"] == pytest.approx(math.sqrt(2.5 / (math.exp(5) + 224)))
    c = contraction_constants(0.05, 0.05, 1.0, PicardConfig(c_b=0.0))
    assert c["printed_l1_bound"] == pytest.approx(math.sqrt(0.5 / 45))


# -- oracle and residuals ------------------------------------------------------


def test_oracle_wide_barriers_is_conditional_expectation():
    scn = scenario(6, -10, 10, DriverSpec("zero"), TerminalSpec("sin", (1.0, 2.0)))
    o = backward_induction_oracle(scn)
    for k in range(7):
        assert np.allclose(o.Y[k], scn.tree.cond(scn.xi, k), atol=1e-14)
    assert np.allclose(o.K, 0.0)


def test_oracle_rejects_resistance():
    with pytest.raises(UnsupportedDriverError):
        backward_induction_oracle(resistance_scenario(4))


def test_residuals_of_oracle_and_corrupted_quads():
    scn = scenario(8, -0.3, 0.3, DriverSpec("affine", (0.5, 0.2, 0.1, 0.0)), TerminalSpec("clamp", (-0.2, 0.2)))
    o = backward_induction_oracle(scn)
    r = residual_check(scn, o)
    assert r["containment"] == 0.0 and r["flat_off"] == 0.0
    assert 0.0 < r["identity"] <= 10 * scn.tree.dt
    bad = o.copy()
    bad.Y = bad.Y + 1.0
    assert residual_check(scn, bad)["identity"] == pytest.approx(1.0, abs=0.1)


def test_z_is_martingale_integrand_at_fixed_point():
    scn = resistance_scenario(8)
    q, _ = solve_picard(scn)
    t = scn.tree
    F = RESISTANCE(t.grid.times[:, None], q.Y, q.Z, q.K)
    drift = np.vstack([np.zeros(t.n_paths), np.cumsum(F[:-1] * t.dt, axis=0)])
    M = q.Y + drift + q.K
    assert np.allclose(M - M[0], stochastic_integral(t, q.Z), atol=1e-9)
