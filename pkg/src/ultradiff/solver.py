"""Mild solutions of the log-clock fractional diffusion system, per spectral mode.

Everything here works in coefficients against a fixed truncated eigenbasis.
The controlled state at time t is

    z_p(t) = E_alpha(-lam_p (log t/a)^alpha) z0_p
             + sum_i d_ip  int_0^{log(t/a)} s^{alpha-1} E_{alpha,alpha}(-lam_p s^alpha)
                                             u_i(t e^{-s}) ds,

and the adjoint field driven by final datum coefficients c is

    phi_p(t) = (log b/t)^{alpha-1} E_{alpha,alpha}(-lam_p (log b/t)^alpha) c_p.

All time quadrature happens in the log-time variable after the substitution
y = s^alpha (which turns the Mittag-Leffler factors into smooth functions),
so the power singularities at s = 0 are handled by the weights, never sampled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from ._quadrature import kernel_rule
from .logtime import LogTimeWindow, graded_grid
from .mittag_leffler import ml_on_negative_axis
from .spectral import ActuatorSet, SpectralBasis, actuator_coefficients

logger = logging.getLogger(__name__)

CLOCKS = ("from-end", "from-start")

DEFAULT_CONTROL_NODES = 256
DEFAULT_TIME_QUAD_NODES = 160


class EnergyDivergenceError(ValueError):
    """Non-integrable energy-type integrand at the singular log-time endpoint.

    Raised instead of silently regularizing: for alpha <= 1/2 the squared
    control kernel carries tau^(2*alpha-2) near tau = 0, which has a divergent
    integral.  Callers must opt in to a cutoff explicitly.
    """

    def __init__(self, alpha: float, what: str):
        self.alpha = alpha
        self.what = what
        super().__init__(
            f"{what} carries tau^({2 * alpha - 2:.4g}) near tau = 0, which is not "
            f"integrable for alpha = {alpha:g} <= 1/2; pass an explicit epsilon "
            f"cutoff (integration restricted to [epsilon, L]) to regularize "
            f"deliberately")


def _check_alpha(alpha: float, *, strict_upper: bool = False) -> float:
    alpha = float(alpha)
    upper_ok = alpha < 1.0 if strict_upper else alpha <= 1.0
    if not (0.0 < alpha and upper_ok and math.isfinite(alpha)):
        bound = "(0, 1)" if strict_upper else "(0, 1]"
        raise ValueError(f"alpha must be in {bound}, got {alpha}")
    return alpha


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Coefficient vector against a truncated eigenbasis at one time instant."""

    basis: SpectralBasis
    coefficients: np.ndarray
    t: float

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (len(self.basis.modes),):
            raise ValueError(f"expected {len(self.basis.modes)} coefficients, "
                             f"got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite state coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "t", float(self.t))

    def field_values(self, points) -> np.ndarray:
        return self.basis.value_matrix(points).T @ self.coefficients

    def gradient_values(self, points) -> np.ndarray:
        ndim = self.basis.domain.ndim
        cols = [self.basis.gradient_component_matrix(points, comp).T @ self.coefficients
                for comp in range(ndim)]
        return np.column_stack(cols)


@lru_cache(maxsize=32)
def _cardinal_weights(grid_key: tuple) -> np.ndarray:
    """Integrals over [0, grid[-1]] of the cubic-spline cardinal functions.

    The grid excludes 0; the head [0, grid[0]] uses the spline's natural
    extrapolation, which is accurate because the graded grid makes that head
    interval tiny.  Valid for SMOOTH integrands sampled on the grid only —
    singular factors must be integrated analytically, never through these.
    """
    grid = np.array(grid_key)
    n = grid.size
    weights = np.empty(n)
    unit = np.zeros(n)
    for j in range(n):
        unit[j] = 1.0
        weights[j] = CubicSpline(grid, unit).integrate(0.0, grid[-1])
        unit[j] = 0.0
    weights.setflags(write=False)
    return weights


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Vector control sampled on a graded log-time grid.

    `clock` fixes the meaning of the grid variable tau: "from-end" means
    tau = log(b/t) (the natural clock for synthesized controls, singular end
    at t = b), "from-start" means tau = log(t/a).

    When `smooth_values` is present the signal is u = tau^(alpha-1) * smooth,
    stored by its smooth factor so the singular endpoint never has to be
    represented numerically; `values` then holds the raw product at the nodes
    for export and plotting.
    """

    window: LogTimeWindow
    alpha: float
    tau_grid: np.ndarray
    values: np.ndarray
    clock: str = "from-end"
    smooth_values: np.ndarray | None = None
    epsilon_cutoff: float | None = None
    # Exact evaluator of the smooth factor (tau-array -> (m, n)).  When present
    # it replaces spline interpolation everywhere, so synthesized controls are
    # re-evaluated exactly at foreign quadrature nodes; the sampled arrays
    # remain the export/plotting representation.
    smooth_fn: object | None = None

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        if self.clock not in CLOCKS:
            raise ValueError(f"clock must be one of {CLOCKS}, got {self.clock!r}")
        grid = np.array(self.tau_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 8:
            raise ValueError("tau grid must be 1-D with at least 8 nodes")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("tau grid must be strictly increasing")
        L = self.window.length
        if grid[0] <= 0 or grid[-1] > L * (1 + 1e-12):
            raise ValueError(f"tau grid must lie in (0, {L:.6g}]")
        values = np.atleast_2d(np.array(self.values, dtype=float))
        if values.shape[1] != grid.size:
            raise ValueError(f"values shape {values.shape} does not match "
                             f"{grid.size} grid nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite control values")
        smooth = self.smooth_values
        if smooth is not None:
            smooth = np.atleast_2d(np.array(smooth, dtype=float))
            if smooth.shape != values.shape:
                raise ValueError("smooth_values shape must match values")
            if not np.all(np.isfinite(smooth)):
                raise ValueError("non-finite smooth part")
            smooth.setflags(write=False)
        if self.epsilon_cutoff is not None and not self.epsilon_cutoff > 0:
            raise ValueError("epsilon cutoff must be positive when given")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "tau_grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "smooth_values", smooth)

    # -- constructors ---------------------------------------------------

    @classmethod
    def sample(cls, fn, window: LogTimeWindow, alpha: float, *,
               clock: str = "from-end", n: int = DEFAULT_CONTROL_NODES,
               grading: float | None = None) -> "ControlSignal":
        """Sample a callable tau-array -> (m, n) or (n,) of raw control values."""
        alpha = _check_alpha(alpha)
        grid = graded_grid(window.length, n=n,
                           exponent=grading if grading is not None else 2.0 / alpha)
        return cls(window, alpha, grid, np.atleast_2d(np.asarray(fn(grid), dtype=float)),
                   clock=clock)

    @classmethod
    def constant(cls, levels, window: LogTimeWindow, alpha: float, *,
                 clock: str = "from-end", n: int = DEFAULT_CONTROL_NODES) -> "ControlSignal":
        levels = np.atleast_1d(np.asarray(levels, dtype=float))
        return cls.sample(lambda tau: np.tile(levels[:, None], (1, tau.size)),
                          window, alpha, clock=clock, n=n)

    @classmethod
    def from_smooth_part(cls, fn, window: LogTimeWindow, alpha: float, *,
                         clock: str = "from-end", n: int = DEFAULT_CONTROL_NODES,
                         epsilon_cutoff: float | None = None) -> "ControlSignal":
        """Build u = tau^(alpha-1) * fn(tau) from its smooth factor."""
        alpha = _check_alpha(alpha)
        grid = graded_grid(window.length, n=n, exponent=2.0 / alpha)
        smooth = np.atleast_2d(np.asarray(fn(grid), dtype=float))
        values = grid ** (alpha - 1.0) * smooth
        return cls(window, alpha, grid, values, clock=clock, smooth_values=smooth,
                   epsilon_cutoff=epsilon_cutoff, smooth_fn=fn)

    def with_epsilon(self, epsilon: float) -> "ControlSignal":
        return replace(self, epsilon_cutoff=float(epsilon))

    # -- shape ------------------------------------------------------------

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.tau_grid.size

    @property
    def is_singular(self) -> bool:
        """True when the signal carries an explicit tau^(alpha-1) factor."""
        return self.smooth_values is not None and self.alpha < 1.0

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-node weights integrating smooth samples over tau in [0, L]."""
        return _cardinal_weights(tuple(self.tau_grid))

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _splines(self):
        source = self.smooth_values if self.smooth_values is not None else self.values
        return [CubicSpline(self.tau_grid, source[i]) for i in range(source.shape[0])]

    def smooth_at_tau(self, tau) -> np.ndarray:
        """The smooth factor at given tau values (raw values if not singular)."""
        tau = np.asarray(tau, dtype=float)
        self._check_tau_range(tau)
        if self.smooth_fn is not None:
            return np.atleast_2d(np.asarray(self.smooth_fn(tau), dtype=float))
        return np.vstack([sp(tau) for sp in self._splines])

    def evaluate_tau(self, tau) -> np.ndarray:
        """Raw control values u(tau), shape (m, tau.size)."""
        tau = np.asarray(tau, dtype=float)
        out = self.smooth_at_tau(tau)
        if self.smooth_values is not None:
            if np.any(tau <= 0):
                raise ValueError("singular control cannot be evaluated at tau <= 0")
            out = out * tau ** (self.alpha - 1.0)
        return out

    def evaluate_time(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.clock == "from-end":
            tau = np.log(self.window.b / times)
        else:
            tau = np.log(times / self.window.a)
        return self.evaluate_tau(tau)

    def times(self) -> np.ndarray:
        """Actual time instants of the grid nodes (same order as the grid)."""
        if self.clock == "from-end":
            return self.window.b * np.exp(-self.tau_grid)
        return self.window.a * np.exp(self.tau_grid)

    def _check_tau_range(self, tau: np.ndarray) -> None:
        if tau.size and (np.min(tau) < -1e-12 or
                         np.max(tau) > self.window.length * (1 + 1e-9) + 1e-12):
            raise ValueError(f"tau outside [0, {self.window.length:.6g}]")

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        if not isinstance(other, ControlSignal):
            return NotImplemented
        if (self.clock != other.clock or self.m != other.m
                or self.alpha != other.alpha
                or not np.array_equal(self.tau_grid, other.tau_grid)):
            raise ValueError("can only add controls on the same grid/clock/order")
        both_smooth = self.smooth_values is not None and other.smooth_values is not None
        smooth = self.smooth_values + other.smooth_values if both_smooth else None
        fn = None
        if both_smooth and self.smooth_fn is not None and other.smooth_fn is not None:
            first, second = self.smooth_fn, other.smooth_fn
            fn = lambda tau: np.asarray(first(tau)) + np.asarray(second(tau))
        eps = self.epsilon_cutoff if self.epsilon_cutoff is not None else other.epsilon_cutoff
        return ControlSignal(self.window, self.alpha, self.tau_grid,
                             self.values + other.values, clock=self.clock,
                             smooth_values=smooth, epsilon_cutoff=eps, smooth_fn=fn)

    def __mul__(self, scalar: float) -> "ControlSignal":
        smooth = None if self.smooth_values is None else scalar * self.smooth_values
        fn = None
        if self.smooth_fn is not None:
            base = self.smooth_fn
            fn = lambda tau: scalar * np.asarray(base(tau))
        return ControlSignal(self.window, self.alpha, self.tau_grid,
                             scalar * self.values, clock=self.clock,
                             smooth_values=smooth, epsilon_cutoff=self.epsilon_cutoff,
                             smooth_fn=fn)

    __rmul__ = __mul__


def _ml_matrix(alpha: float, lams, taus) -> np.ndarray:
    """E_{alpha,alpha}(-lam_p tau_q^alpha) as a (n_modes, n_taus) table."""
    lams = np.asarray(lams, dtype=float)
    taus = np.asarray(taus, dtype=float)
    z = -np.outer(lams, taus ** alpha)
    return ml_on_negative_axis(alpha, alpha, z.ravel()).reshape(z.shape)


def free_solution(z0_coefficients, basis: SpectralBasis, alpha: float,
                  window: LogTimeWindow, t: float) -> SpectralState:
    """Uncontrolled evolution of initial coefficients to time t."""
    alpha = _check_alpha(alpha)
    window.require_inside(t)
    z0 = np.asarray(z0_coefficients, dtype=float)
    tau = window.tau_from_start(t)
    if tau == 0.0:
        return SpectralState(basis, z0, t)
    decay = ml_on_negative_axis(alpha, 1.0, -basis.lams * tau ** alpha)
    return SpectralState(basis, z0 * decay, t)


def forced_solution(actuators: ActuatorSet, basis: SpectralBasis, u: ControlSignal,
                    alpha: float, window: LogTimeWindow, t: float, *,
                    nodes: int = DEFAULT_TIME_QUAD_NODES,
                    coefficient_matrix: np.ndarray | None = None,
                    epsilon: float | None = None) -> SpectralState:
    """State reached from rest at time t under the control u.

    The mode integrals use a Gauss rule in y = s^alpha, which integrates the
    Mittag-Leffler kernel factors exactly-smoothly; the only special case is a
    synthesized (singular, from-end clock) control evaluated at t = b, where
    the control's own tau^(alpha-1) folds into the weight — that product is
    non-integrable for alpha <= 1/2 and refuses without an epsilon cutoff.
    """
    alpha = _check_alpha(alpha)
    window.require_inside(t, open_start=True)
    if coefficient_matrix is None:
        coefficient_matrix = actuator_coefficients(actuators, basis)
    if u.m != coefficient_matrix.shape[0]:
        raise ValueError(f"control has {u.m} channels but the actuator set has "
                         f"{coefficient_matrix.shape[0]}")
    horizon = window.tau_from_start(t)

    at_final = abs(t - window.b) <= 1e-12 * window.b
    if u.is_singular and u.clock == "from-end" and at_final:
        cutoff = epsilon if epsilon is not None else (u.epsilon_cutoff or 0.0)
        if alpha <= 0.5 and cutoff == 0.0:
            raise EnergyDivergenceError(alpha, "the control-times-kernel integrand")
        s, w = kernel_rule(alpha, 2.0 * (alpha - 1.0), n=nodes, eps=cutoff,
                           length=horizon)
        channel_values = u.smooth_at_tau(s)
    else:
        s, w = kernel_rule(alpha, alpha - 1.0, n=nodes, length=horizon)
        channel_values = u.evaluate_time(t * np.exp(-s))

    kernel = _ml_matrix(alpha, basis.lams, s)
    driven = coefficient_matrix.T @ channel_values     # (n_modes, n_nodes)
    coeffs = np.sum(kernel * driven * w, axis=1)
    return SpectralState(basis, coeffs, t)


def adjoint_solution(datum_coefficients, basis: SpectralBasis, alpha: float,
                     window: LogTimeWindow, t: float) -> SpectralState:
    """Backward kernel field driven by final-datum coefficients.

    Singular at t = b for alpha < 1; callers integrate on nodes strictly
    inside the window.
    """
    alpha = _check_alpha(alpha)
    c = np.asarray(datum_coefficients, dtype=float)
    if alpha < 1.0 and t >= window.b * (1 - 1e-15):
        raise ValueError(f"backward kernel is singular at the final time b = "
                         f"{window.b:g} for alpha < 1; evaluate strictly inside")
    window.require_inside(t, open_end=alpha < 1.0)
    tau = window.tau_from_end(t)
    kernel = ml_on_negative_axis(alpha, alpha, -basis.lams * tau ** alpha)
    if alpha < 1.0:
        kernel = tau ** (alpha - 1.0) * kernel
    return SpectralState(basis, kernel * c, t)


@dataclass(frozen=True, eq=False)
class FinalGradient:
    """Restricted gradient of a final-time state, in gradient-Gram coordinates."""

    coefficients: np.ndarray
    gram: object  # GradientBasisGram

    def norm(self) -> float:
        return float(math.sqrt(max(0.0,
                     self.coefficients @ self.gram.matrix @ self.coefficients)))


def final_gradient(state: SpectralState, region, *, window: LogTimeWindow | None = None,
                   gram=None, order: int | None = None) -> FinalGradient:
    """Represent the region-restricted gradient of the state's field.

    The field is sum_p z_p alpha_p, so its restricted gradient has exactly the
    state coefficients against the restricted-gradient basis; the Gram matrix
    carries the geometry.
    """
    from .spectral import gradient_gram

    if window is not None and abs(state.t - window.b) > 1e-9 * window.b:
        raise ValueError(f"state is at t = {state.t:g}, not the final time "
                         f"{window.b:g}")
    if gram is None:
        gram = gradient_gram(state.basis, region, order)
    return FinalGradient(state.coefficients.copy(), gram)
