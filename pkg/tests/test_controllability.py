"""Gramian assembly, duality, strategic rank tests, worked-example tables.

The frozen Gramian entries come from 160-digit tanh-sinh quadrature of the
squared-kernel integrand (series kernel evaluation with a precomputed
reciprocal-gamma table, actuator row from the hand closed form).
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ultradiff._quadrature import kernel_rule
from ultradiff.controllability import (GradientGramian,
                                       approx_controllability_verdict,
                                       apply_H, apply_H_adjoint,
                                       assemble_gramian, pinv_solve_symmetric,
                                       strategic_test, symmetric_square_root,
                                       worked_example_mode_means,
                                       worked_example_pairing_table)
from ultradiff.logtime import LogTimeWindow
from ultradiff.mittag_leffler import ml_on_negative_axis
from ultradiff.solver import ControlSignal, EnergyDivergenceError, forced_solution
from ultradiff.spectral import (Actuator, ActuatorSet, Region, RectDomain,
                                SpectralBasis, actuator_coefficients)

WINDOW = LogTimeWindow(1.0, 2.5)
DOMAIN_1D = RectDomain.interval(0.0, 1.0)
SQUARE = RectDomain.rectangle((-1.0, 1.0), (-1.0, 1.0))

# alpha=0.7, K=2 on [0,1], whole-domain region, one constant zone actuator
# on [0.15, 0.7]; W[p][q] = d_p d_q int tau^(2a-2) E_p E_q e^tau/b dtau
FROZEN_W = np.array([
    [0.0360294988032790624111151, 0.00655806249298791582498674],
    [0.00655806249298791582498674, 0.001490869526185069431461371],
])


def single_zone_setup():
    basis = SpectralBasis(DOMAIN_1D, 2)
    acts = ActuatorSet((Actuator(Region.box(DOMAIN_1D, (0.15, 0.7)),
                                 lambda p: np.ones(p.shape[0]), "zone"),))
    return basis, acts


def test_gramian_matches_frozen_quadrature():
    basis, acts = single_zone_setup()
    g = assemble_gramian(basis, Region.whole(DOMAIN_1D), acts, 0.7, WINDOW)
    assert_allclose(g.matrix, FROZEN_W, rtol=1e-8)


def test_gramian_is_symmetric_psd():
    basis, acts = single_zone_setup()
    g = assemble_gramian(basis, Region.box(DOMAIN_1D, (0.2, 0.9)), acts, 0.7, WINDOW)
    assert np.array_equal(g.matrix, g.matrix.T)
    pencil = g.pencil_eigenvalues
    assert pencil.min() >= -1e-12 * max(pencil.max(), 1.0)
    assert g.largest_eigenvalue >= g.smallest_eigenvalue
    with pytest.raises(ValueError, match="not symmetric"):
        GradientGramian(basis, Region.whole(DOMAIN_1D), acts, 0.7, WINDOW,
                        g.coefficient_matrix, g.gram,
                        np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_divergence_refusal_and_epsilon_validation():
    basis, acts = single_zone_setup()
    region = Region.whole(DOMAIN_1D)
    with pytest.raises(EnergyDivergenceError) as err:
        assemble_gramian(basis, region, acts, 0.5, WINDOW)
    assert err.value.alpha == 0.5
    g = assemble_gramian(basis, region, acts, 0.5, WINDOW, epsilon=1e-3)
    assert np.all(np.isfinite(g.matrix))
    assert g.epsilon_cutoff == 1e-3
    with pytest.raises(ValueError, match="epsilon cutoff"):
        assemble_gramian(basis, region, acts, 0.5, WINDOW, epsilon=WINDOW.length * 2)
    with pytest.raises(ValueError, match="alpha"):
        assemble_gramian(basis, region, acts, 1.3, WINDOW)


def test_gramian_state_identity():
    # driving the system with the adjoint kernel control lands exactly on W v
    basis, acts = single_zone_setup()
    g = assemble_gramian(basis, Region.whole(DOMAIN_1D), acts, 0.7, WINDOW)
    rng = np.random.default_rng(17)
    d = g.coefficient_matrix
    for _ in range(5):
        v = rng.standard_normal(len(basis.modes))

        def smooth(tau):
            tau = np.asarray(tau, dtype=float)
            E = ml_on_negative_axis(
                0.7, 0.7, (-basis.lams[:, None] * tau[None, :] ** 0.7).ravel()
            ).reshape(len(basis.modes), tau.size)
            return (d @ (E * v[:, None])) * (np.exp(tau) / WINDOW.b)

        u = ControlSignal.from_smooth_part(smooth, WINDOW, 0.7)
        state = forced_solution(acts, basis, u, 0.7, WINDOW, WINDOW.b)
        assert_allclose(state.coefficients, g.matrix @ v, rtol=1e-9)


def test_input_to_state_duality():
    # <H u, v> = int_a^b sum_i u_i(t) (H* v)_i(t) dt for 20 random pairs
    basis, acts = single_zone_setup()
    d = actuator_coefficients(acts, basis)
    rng = np.random.default_rng(23)
    taus, weights = kernel_rule(0.7, 0.7 - 1.0, length=WINDOW.length)
    E = ml_on_negative_axis(
        0.7, 0.7, (-basis.lams[:, None] * taus[None, :] ** 0.7).ravel()
    ).reshape(len(basis.modes), taus.size)
    for _ in range(20):
        a0, a1, a2 = rng.uniform(-1.0, 1.0, 3)
        fn = lambda tau: a0 + a1 * np.cos(tau) + a2 * tau ** 2
        u = ControlSignal.sample(fn, WINDOW, 0.7, clock="from-end")
        v = rng.standard_normal(len(basis.modes))
        lhs = float(apply_H(acts, basis, u, 0.7, WINDOW).coefficients @ v)
        channel = d @ (E * v[:, None])             # (m, n_taus)
        rhs = float(weights @ (u.evaluate_tau(taus) * channel).sum(axis=0))
        assert_allclose(lhs, rhs, rtol=1e-7, atol=1e-12)


def test_adjoint_observation_profile_and_refusal():
    basis, acts = single_zone_setup()
    d = actuator_coefficients(acts, basis)
    v = np.array([0.8, -0.3])
    alpha = 0.7
    t = 1.8
    tau = math.log(WINDOW.b / t)
    E = ml_on_negative_axis(alpha, alpha, -basis.lams * tau ** alpha)
    expected = (d @ (E * v)) * tau ** (alpha - 1.0) / t
    got = apply_H_adjoint(v, basis, alpha, WINDOW, t, actuators=acts)
    assert got.shape == (1,)
    assert_allclose(got, expected, rtol=1e-13)
    arr = apply_H_adjoint(v, basis, alpha, WINDOW, np.array([1.5, 1.8, 2.2]),
                          coefficient_matrix=d)
    assert arr.shape == (1, 3)
    with pytest.raises(ValueError, match="singular at t = b"):
        apply_H_adjoint(v, basis, alpha, WINDOW, WINDOW.b, actuators=acts)
    # no singular prefactor in the classical limit
    classical = apply_H_adjoint(v, basis, 1.0, WINDOW, WINDOW.b, actuators=acts)
    assert_allclose(classical, (d @ v) / WINDOW.b, rtol=1e-13)
    with pytest.raises(ValueError, match="actuators"):
        apply_H_adjoint(v, basis, alpha, WINDOW, 1.5)


def test_adding_actuators_never_shrinks_the_margin():
    basis = SpectralBasis(DOMAIN_1D, 3)
    region = Region.box(DOMAIN_1D, (0.1, 0.8))
    first = Actuator(Region.box(DOMAIN_1D, (0.1, 0.5)),
                     lambda p: np.ones(p.shape[0]), "a")
    second = Actuator(Region.box(DOMAIN_1D, (0.4, 0.95)),
                      lambda p: p[:, 0], "b")
    g1 = assemble_gramian(basis, region, ActuatorSet((first,)), 0.7, WINDOW)
    g2 = assemble_gramian(basis, region, ActuatorSet((first, second)), 0.7, WINDOW)
    assert np.all(g2.pencil_eigenvalues >= g1.pencil_eigenvalues - 1e-12)


def test_one_dimensional_rank_and_spectral_verdicts_agree():
    # ten deterministic random configurations; the exact rank criterion and
    # the Gramian margin must reach the same conclusion on each
    basis = SpectralBasis(DOMAIN_1D, 4)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        lo = rng.uniform(0.0, 0.45)
        hi = rng.uniform(lo + 0.25, 1.0)
        region = Region.box(DOMAIN_1D, (lo, hi))
        actuators = []
        for i in range(int(rng.integers(1, 4))):
            alo = rng.uniform(0.0, 0.55)
            ahi = rng.uniform(alo + 0.2, 1.0)
            c0, c1 = rng.uniform(0.4, 1.5), rng.uniform(-0.5, 0.5)
            actuators.append(Actuator(Region.box(DOMAIN_1D, (alo, ahi)),
                                      lambda p, c0=c0, c1=c1: c0 + c1 * p[:, 0],
                                      f"a{i}"))
        acts = ActuatorSet(tuple(actuators))
        report = strategic_test(basis, region, acts)
        verdict = approx_controllability_verdict(
            assemble_gramian(basis, region, acts, 0.7, WINDOW))
        assert report.criterion == "exact"
        assert report.strategic == verdict.controllable, f"seed {seed}"
        assert report.strategic  # these draws all couple every mode


def test_mode_orthogonal_actuator_fails_both_tests():
    # profile sin(2 pi x) couples only to the second mode, so modes 1, 3, 4
    # are invisible: the rank test and the Gramian must both say NOT
    basis = SpectralBasis(DOMAIN_1D, 4)
    region = Region.box(DOMAIN_1D, (0.2, 0.9))
    acts = ActuatorSet((Actuator(Region.whole(DOMAIN_1D),
                                 lambda p: np.sin(2.0 * math.pi * p[:, 0]),
                                 "orthogonal"),))
    report = strategic_test(basis, region, acts)
    assert not report.strategic
    assert report.verdict == "NOT"
    assert any(b.direction_ranks[0] < b.multiplicity for b in report.buckets)
    verdict = approx_controllability_verdict(
        assemble_gramian(basis, region, acts, 0.7, WINDOW))
    assert not verdict.controllable


def test_two_dimensional_strategic_patterns():
    basis = SpectralBasis(SQUARE, 2, "whole-wave")
    region = Region.box(SQUARE, (0.0, 1.0), (0.0, 1.0))
    mults = sorted(
        {b.bucket: b.multiplicity
         for b in strategic_test(
             basis, region,
             ActuatorSet((Actuator(region, lambda p: np.ones(p.shape[0]), "z"),)),
             window=WINDOW).buckets}.values())
    assert mults == [1, 1, 2]

    # one channel cannot dominate a two-fold eigenvalue
    single = strategic_test(
        basis, region,
        ActuatorSet((Actuator(region, lambda p: np.ones(p.shape[0]), "z"),)),
        window=WINDOW)
    assert single.criterion == "generic"
    assert single.sup_multiplicity == 2
    assert not single.m_sufficient
    assert not single.strategic

    # one modal channel per mode is decisive
    modal = strategic_test(
        basis, region,
        ActuatorSet(tuple(Actuator(Region.whole(SQUARE), m.value, f"m{i}")
                          for i, m in enumerate(basis.modes))),
        window=WINDOW)
    assert modal.m_sufficient
    assert modal.stacked_rank == modal.required_rank == len(basis.modes)
    assert modal.strategic


def test_verdict_threshold_semantics():
    basis, acts = single_zone_setup()
    g = assemble_gramian(basis, Region.whole(DOMAIN_1D), acts, 0.7, WINDOW)
    verdict = approx_controllability_verdict(g, threshold=1e-10)
    assert verdict.controllable
    assert verdict.margin == g.smallest_eigenvalue
    assert verdict.relative_margin == pytest.approx(
        g.smallest_eigenvalue / g.largest_eigenvalue)
    assert verdict.exact_constant == pytest.approx(g.smallest_eigenvalue ** -0.5)
    # an absurdly demanding threshold flips the call
    assert not approx_controllability_verdict(g, threshold=1.0).controllable


# --- worked-example tables ---------------------------------------------------

def test_whole_wave_mode_means_vanish_on_the_full_box():
    basis = SpectralBasis(SQUARE, 6, "whole-wave")
    means = worked_example_mode_means(basis, Region.whole(SQUARE))
    assert np.max(np.abs(means)) <= 1e-12


def test_quadrant_mode_means_closed_form():
    # mean of sin(k pi x) sin(l pi y) over [0,1]^2: product of (1-cos(k pi))/(k pi)
    basis = SpectralBasis(SQUARE, 3, "whole-wave")
    quadrant = Region.box(SQUARE, (0.0, 1.0), (0.0, 1.0))
    means = worked_example_mode_means(basis, quadrant)
    for pos, mode in enumerate(basis.modes):
        k, l = mode.index
        exact = ((1.0 - math.cos(k * math.pi)) / (k * math.pi)
                 * (1.0 - math.cos(l * math.pi)) / (l * math.pi))
        assert_allclose(means[pos], exact, rtol=0, atol=1e-12)


def test_pairing_table_values_and_flags():
    basis = SpectralBasis(SQUARE, 5, "whole-wave")
    quadrant = Region.box(SQUARE, (0.0, 1.0), (0.0, 1.0))
    rows = worked_example_pairing_table(basis, quadrant)
    assert len(rows) == 3 * 3 * 2 * 2
    by_key = {(r.k, r.l, r.p, r.q): r for r in rows}

    head = by_key[(1, 1, 2, 2)]
    assert head.in_stated_parity
    assert_allclose(head.quadrature, -32.0 / (9.0 * math.pi ** 3), rtol=1e-9)
    assert_allclose(head.closed_form, 256.0 / (9.0 * math.pi ** 3), rtol=1e-12)
    assert math.isfinite(head.rel_discrepancy) and head.rel_discrepancy > 0

    for row in rows:
        # every default row sits in the stated parity regime
        assert row.in_stated_parity
        assert math.isfinite(row.closed_form) and row.closed_form != 0
        assert math.isfinite(row.quadrature)
        assert abs(row.quadrature) > 1e-6

    # resonant index pairs have a vanishing denominator in the closed form
    clash = worked_example_pairing_table(basis, quadrant,
                                         ks=(1, 2), ls=(1,), ps=(2,), qs=(2,))
    flags = {(r.k, r.l): (math.isnan(r.closed_form), r.in_stated_parity)
             for r in clash}
    assert flags[(2, 1)] == (True, False)
    assert flags[(1, 1)][0] is False

    with pytest.raises(ValueError, match="2-D"):
        worked_example_pairing_table(SpectralBasis(DOMAIN_1D, 5), quadrant)
    with pytest.raises(ValueError, match="cutoff"):
        worked_example_pairing_table(SpectralBasis(SQUARE, 2, "whole-wave"),
                                     quadrant)


# --- small linear-algebra helpers ---------------------------------------------

def test_symmetric_square_root_and_pinv_solve():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((4, 3))
    w = a @ a.T                      # PSD, rank 3
    half = symmetric_square_root(w)
    assert_allclose(half @ half, w, rtol=0, atol=1e-12)
    # right-hand side in the range: consistent minimum-norm solution
    x_true = a @ rng.standard_normal(3)
    rhs = w @ x_true
    x, rank, cond = pinv_solve_symmetric(w, rhs)
    assert rank == 3
    assert cond >= 1.0 and math.isfinite(cond)
    assert_allclose(w @ x, rhs, rtol=0, atol=1e-10)
    # the returned solution carries no null-space component
    null = np.linalg.svd(w)[0][:, 3]
    assert abs(null @ x) <= 1e-10
