"""Evolution maps: free/forced/adjoint propagation and control signals."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ultradiff._quadrature import kernel_rule
from ultradiff.hadamard import hadamard_derivative_left
from ultradiff.logtime import LogTimeWindow
from ultradiff.solver import (ControlSignal, EnergyDivergenceError,
                              SpectralState, adjoint_solution, final_gradient,
                              forced_solution, free_solution)
from ultradiff.spectral import (Actuator, ActuatorSet, Region, RectDomain,
                                SpectralBasis)

WINDOW = LogTimeWindow(1.0, 2.5)
DOMAIN_1D = RectDomain.interval(0.0, 1.0)

# Duhamel integrals for the two-channel configuration below, computed with
# 120-digit arithmetic: tanh-sinh quadrature in the original (singular)
# variable, power series for the kernel, hand closed forms for the actuator
# rows.  Keyed by (time, axis wavenumber).
FORCED_ORACLE = {
    (1.7, 1): 0.0443722913241574180211733,
    (1.7, 2): 0.0003655208907975122713443524,
    (2.5, 1): 0.04931265494412924073263329,
    (2.5, 2): 0.004202204392688270280810508,
}


def two_channel_setup():
    basis = SpectralBasis(DOMAIN_1D, 2)
    acts = ActuatorSet((
        Actuator(Region.box(DOMAIN_1D, (0.1, 0.45)),
                 lambda p: np.ones(p.shape[0]), "zone"),
        Actuator(Region.box(DOMAIN_1D, (0.3, 0.9)), lambda p: p[:, 0], "ramp"),
    ))
    fn = lambda tau: np.vstack([np.sin(tau), np.exp(-tau) * (1.0 + tau / 2.0)])
    u = ControlSignal.sample(fn, WINDOW, 0.7, clock="from-start")
    return basis, acts, u


def test_forced_solution_matches_frozen_quadrature():
    basis, acts, u = two_channel_setup()
    for t in (1.7, 2.5):
        state = forced_solution(acts, basis, u, 0.7, WINDOW, t)
        for p, mode in enumerate(basis.modes):
            assert_allclose(state.coefficients[p],
                            FORCED_ORACLE[(t, mode.index[0])], rtol=1e-8)


def test_forced_solution_node_count_converged():
    basis, acts, u = two_channel_setup()
    c160 = forced_solution(acts, basis, u, 0.7, WINDOW, 2.5).coefficients
    c320 = forced_solution(acts, basis, u, 0.7, WINDOW, 2.5, nodes=320).coefficients
    assert_allclose(c160, c320, rtol=0, atol=1e-10)


def test_forced_solution_superposition():
    basis, acts, _ = two_channel_setup()
    f1 = lambda tau: np.vstack([np.sin(tau), np.cos(tau)])
    f2 = lambda tau: np.vstack([tau ** 2, np.exp(-tau)])
    u1 = ControlSignal.sample(f1, WINDOW, 0.7, clock="from-start")
    u2 = ControlSignal.sample(f2, WINDOW, 0.7, clock="from-start")
    separate = (forced_solution(acts, basis, u1, 0.7, WINDOW, 2.2).coefficients
                + forced_solution(acts, basis, u2, 0.7, WINDOW, 2.2).coefficients)
    combined = forced_solution(acts, basis, u1 + u2, 0.7, WINDOW, 2.2).coefficients
    assert_allclose(combined, separate, rtol=1e-12)
    doubled = forced_solution(acts, basis, 2.0 * u1, 0.7, WINDOW, 2.2).coefficients
    assert_allclose(doubled,
                    2.0 * forced_solution(acts, basis, u1, 0.7, WINDOW, 2.2).coefficients,
                    rtol=1e-13)


def test_forced_solution_channel_mismatch():
    basis, acts, _ = two_channel_setup()
    u = ControlSignal.constant([1.0], WINDOW, 0.7)
    with pytest.raises(ValueError, match="channels"):
        forced_solution(acts, basis, u, 0.7, WINDOW, 2.0)


# --- classical (alpha = 1) closed forms -------------------------------------

def test_classical_free_solution():
    basis = SpectralBasis(DOMAIN_1D, 3)
    z0 = np.array([1.0, -0.5, 0.25])
    for t in (1.0, 1.4, 2.5):
        state = free_solution(z0, basis, 1.0, WINDOW, t)
        tau = math.log(t / WINDOW.a)
        assert_allclose(state.coefficients, z0 * np.exp(-basis.lams * tau),
                        rtol=1e-12)


def test_classical_forced_solution_constant_control():
    # d/dtau z_p = -lam_p z_p + d_p c  from rest:
    # z_p(b) = c d_p (1 - exp(-lam_p L)) / lam_p
    basis = SpectralBasis(DOMAIN_1D, 3)
    acts = ActuatorSet((Actuator(Region.whole(DOMAIN_1D),
                                 lambda p: np.ones(p.shape[0]), "bulk"),))
    level = 0.8
    u = ControlSignal.constant([level], WINDOW, 1.0)
    state = forced_solution(acts, basis, u, 1.0, WINDOW, WINDOW.b)
    L = WINDOW.length
    for p, mode in enumerate(basis.modes):
        k = mode.index[0]
        d_p = math.sqrt(2.0) * (1.0 - math.cos(k * math.pi)) / (k * math.pi)
        exact = level * d_p * (1.0 - math.exp(-basis.lams[p] * L)) / basis.lams[p]
        assert_allclose(state.coefficients[p], exact, rtol=0, atol=1e-10)


def test_classical_adjoint_solution():
    basis = SpectralBasis(DOMAIN_1D, 2)
    c = np.array([0.7, -0.2])
    # no singular prefactor at alpha = 1, so t = b is fine and gives c itself
    assert_allclose(adjoint_solution(c, basis, 1.0, WINDOW, WINDOW.b).coefficients,
                    c, rtol=1e-14)
    t = 1.6
    tau = math.log(WINDOW.b / t)
    assert_allclose(adjoint_solution(c, basis, 1.0, WINDOW, t).coefficients,
                    c * np.exp(-basis.lams * tau), rtol=1e-12)


# --- fractional dynamics -----------------------------------------------------

def test_free_solution_satisfies_fractional_decay_equation():
    # the per-mode trajectory must satisfy the order-alpha decay equation;
    # checked through the shifted derivative, which keeps integrands bounded
    basis = SpectralBasis(RectDomain.rectangle((0.0, 1.0), (0.0, 1.0)), 2)
    z0 = np.ones(len(basis.modes))
    for alpha, p in ((0.3, 0), (0.7, 1)):
        lam = basis.lams[p]

        def shifted(s):
            s = np.atleast_1d(np.asarray(s, dtype=float))
            out = np.empty(s.size)
            for i, x in enumerate(s):
                xx = min(max(x, WINDOW.a), WINDOW.b)
                out[i] = free_solution(z0, basis, alpha, WINDOW, xx).coefficients[p] - 1.0
            return out

        for th in (0.2, 0.55, 0.9):
            t = WINDOW.a * (WINDOW.b / WINDOW.a) ** th
            y_t = free_solution(z0, basis, alpha, WINDOW, t).coefficients[p]
            got = hadamard_derivative_left(shifted, alpha, WINDOW, t, nodes=96)
            assert abs(got + lam * y_t) <= 1e-6 * lam * abs(y_t)


def test_free_solution_initial_instant_is_identity():
    basis = SpectralBasis(DOMAIN_1D, 3)
    z0 = np.array([0.3, 0.1, -0.2])
    state = free_solution(z0, basis, 0.6, WINDOW, WINDOW.a)
    assert np.array_equal(state.coefficients, z0)


def test_adjoint_solution_refuses_final_time_when_singular():
    basis = SpectralBasis(DOMAIN_1D, 2)
    with pytest.raises(ValueError, match="singular at the final time"):
        adjoint_solution([1.0, 0.0], basis, 0.7, WINDOW, WINDOW.b)


def test_adjoint_solution_interior_profile():
    from ultradiff.mittag_leffler import ml_on_negative_axis
    basis = SpectralBasis(DOMAIN_1D, 2)
    c = np.array([0.4, 1.1])
    alpha = 0.7
    t = 1.9
    tau = math.log(WINDOW.b / t)
    kernel = tau ** (alpha - 1.0) * ml_on_negative_axis(
        alpha, alpha, -basis.lams * tau ** alpha)
    got = adjoint_solution(c, basis, alpha, WINDOW, t).coefficients
    assert_allclose(got, kernel * c, rtol=1e-13)


# --- divergence refusal ------------------------------------------------------

def singular_signal(alpha, levels=(1.0,), epsilon=None):
    return ControlSignal.from_smooth_part(
        lambda tau: np.tile(np.asarray(levels, dtype=float)[:, None], (1, tau.size)),
        WINDOW, alpha, epsilon_cutoff=epsilon)


def test_singular_control_divergence_refusal_and_cutoff():
    basis = SpectralBasis(DOMAIN_1D, 2)
    acts = ActuatorSet((Actuator(Region.whole(DOMAIN_1D),
                                 lambda p: np.ones(p.shape[0]), "bulk"),))
    u = singular_signal(0.4)
    with pytest.raises(EnergyDivergenceError) as err:
        forced_solution(acts, basis, u, 0.4, WINDOW, WINDOW.b)
    assert err.value.alpha == 0.4
    assert "epsilon" in str(err.value)
    # an explicit cutoff makes the same evaluation finite
    state = forced_solution(acts, basis, u.with_epsilon(1e-3), 0.4, WINDOW, WINDOW.b)
    assert np.all(np.isfinite(state.coefficients))
    # interior times never touch the singular endpoint
    interior = forced_solution(acts, basis, u, 0.4, WINDOW, 2.0)
    assert np.all(np.isfinite(interior.coefficients))
    # integrable case needs no cutoff
    ok = forced_solution(acts, basis, singular_signal(0.7), 0.7, WINDOW, WINDOW.b)
    assert np.all(np.isfinite(ok.coefficients))


def test_kernel_rule_moments():
    L = WINDOW.length
    for alpha in (0.4, 0.7):
        tau, w = kernel_rule(alpha, alpha - 1.0, length=L)
        assert_allclose(np.sum(w), L ** alpha / alpha, rtol=1e-13)
        assert_allclose(w @ tau ** alpha, L ** (2 * alpha) / (2 * alpha), rtol=1e-13)
    # epsilon-cutoff rule integrates the squared-kernel weight exactly
    alpha, eps = 0.4, 1e-3
    tau, w = kernel_rule(alpha, 2.0 * (alpha - 1.0), eps=eps, length=L)
    exact = (L ** (2 * alpha - 1.0) - eps ** (2 * alpha - 1.0)) / (2 * alpha - 1.0)
    assert_allclose(np.sum(w), exact, rtol=1e-12)
    with pytest.raises(ValueError, match="non-integrable"):
        kernel_rule(0.4, 2.0 * (0.4 - 1.0), length=L)


# --- control signal mechanics ------------------------------------------------

def test_control_signal_times_round_trip():
    fn = lambda tau: np.vstack([np.sin(tau), np.cos(tau)])
    # times() loses one ulp of tau through exp/log, so allow a tiny atol
    for clock in ("from-end", "from-start"):
        sig = ControlSignal.sample(fn, WINDOW, 0.7, clock=clock)
        assert_allclose(sig.evaluate_time(sig.times()), sig.values,
                        rtol=1e-13, atol=1e-12)
    # the singular factor amplifies that ulp by |alpha-1|/tau at the first
    # graded node (~3e-10 here), so the singular round-trip gets a wider band
    singular = singular_signal(0.7, levels=(2.0,))
    assert_allclose(singular.evaluate_time(singular.times()), singular.values,
                    rtol=1e-9)


def test_control_signal_weights_integrate_smooth_samples():
    sig = ControlSignal.sample(lambda tau: np.cos(tau), WINDOW, 0.7)
    L = WINDOW.length
    assert_allclose(float(sig.weights @ np.cos(sig.tau_grid)), math.sin(L),
                    rtol=0, atol=1e-10)
    assert_allclose(float(sig.weights @ sig.tau_grid ** 3), L ** 4 / 4.0,
                    rtol=0, atol=1e-12)


def test_control_signal_algebra_and_epsilon():
    u1 = singular_signal(0.6, levels=(1.0, -2.0))
    u2 = singular_signal(0.6, levels=(0.5, 0.25))
    total = u1 + u2
    assert_allclose(total.values, u1.values + u2.values, rtol=1e-15)
    assert_allclose(total.smooth_values, u1.smooth_values + u2.smooth_values,
                    rtol=1e-15)
    tau_probe = np.array([0.1, 0.4])
    assert_allclose(total.smooth_at_tau(tau_probe),
                    u1.smooth_at_tau(tau_probe) + u2.smooth_at_tau(tau_probe),
                    rtol=1e-14)
    scaled = 3.0 * u1
    assert_allclose(scaled.values, 3.0 * u1.values, rtol=1e-15)
    assert scaled.is_singular
    with_eps = u1.with_epsilon(1e-4)
    assert with_eps.epsilon_cutoff == 1e-4
    assert np.array_equal(with_eps.values, u1.values)

    other_grid = ControlSignal.sample(lambda tau: np.ones((2, tau.size)),
                                      WINDOW, 0.6, n=64)
    with pytest.raises(ValueError, match="same grid"):
        u1 + other_grid


def test_control_signal_validation():
    grid = np.linspace(0.1, WINDOW.length, 16)
    vals = np.ones((1, 16))
    with pytest.raises(ValueError, match="at least 8"):
        ControlSignal(WINDOW, 0.7, grid[:4], vals[:, :4])
    with pytest.raises(ValueError, match="strictly increasing"):
        bad = grid.copy()
        bad[3] = bad[5]
        ControlSignal(WINDOW, 0.7, bad, vals)
    with pytest.raises(ValueError, match="grid must lie"):
        ControlSignal(WINDOW, 0.7, grid + WINDOW.length, vals)
    with pytest.raises(ValueError, match="does not match"):
        ControlSignal(WINDOW, 0.7, grid, np.ones((1, 9)))
    with pytest.raises(ValueError, match="non-finite"):
        nanvals = vals.copy()
        nanvals[0, 3] = np.nan
        ControlSignal(WINDOW, 0.7, grid, nanvals)
    with pytest.raises(ValueError, match="clock"):
        ControlSignal(WINDOW, 0.7, grid, vals, clock="sideways")
    with pytest.raises(ValueError, match="alpha"):
        ControlSignal(WINDOW, 1.5, grid, vals)
    with pytest.raises(ValueError, match="tau <= 0"):
        singular_signal(0.6).evaluate_tau(np.array([0.0, 0.1]))


# --- state containers ---------------------------------------------------------

def test_spectral_state_field_and_gradient_values():
    basis = SpectralBasis(RectDomain.rectangle((0.0, 1.0), (0.0, 1.0)), 2)
    rng = np.random.default_rng(5)
    coeffs = rng.standard_normal(len(basis.modes))
    state = SpectralState(basis, coeffs, 2.0)
    pts = rng.uniform(0.05, 0.95, size=(30, 2))
    manual_field = sum(coeffs[p] * basis.modes[p].value(pts)
                       for p in range(len(basis.modes)))
    assert_allclose(state.field_values(pts), manual_field, rtol=1e-12)
    manual_grad = sum(coeffs[p] * basis.modes[p].gradient(pts)
                      for p in range(len(basis.modes)))
    assert_allclose(state.gradient_values(pts), manual_grad, rtol=1e-12)
    with pytest.raises(ValueError, match="coefficients"):
        SpectralState(basis, coeffs[:-1], 2.0)
    with pytest.raises(ValueError, match="finite"):
        bad = coeffs.copy()
        bad[0] = np.inf
        SpectralState(basis, bad, 2.0)


def test_final_gradient_norm_against_eigenvalue_identity():
    # over the whole domain the restricted-gradient Gram is diag(lams)
    basis = SpectralBasis(DOMAIN_1D, 4)
    coeffs = np.array([0.5, -0.25, 0.125, 0.0625])
    state = SpectralState(basis, coeffs, WINDOW.b)
    fg = final_gradient(state, Region.whole(DOMAIN_1D), window=WINDOW)
    exact = math.sqrt(float(np.sum(basis.lams * coeffs ** 2)))
    assert_allclose(fg.norm(), exact, rtol=1e-11)
    bad_state = SpectralState(basis, coeffs, 1.7)
    with pytest.raises(ValueError, match="final time"):
        final_gradient(bad_state, Region.whole(DOMAIN_1D), window=WINDOW)
