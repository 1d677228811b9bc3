"""Shared quadrature rules.

Two families cover everything in the package:

* ``power_weighted_rule`` — nodes/weights for integrals of the form
  ``int_0^T tau^p g(tau) dtau`` where ``g`` is smooth on [0, T) but may
  carry an *unknown integrable* singularity at ``tau = T`` (fractional
  kernels evaluated near the opposite window endpoint do exactly this).
  The rule is a Gauss-Jacobi half on [0, T/2] with the ``tau^p`` weight
  absorbed, plus dyadically refined Gauss-Legendre panels on [T/2, T]
  whose geometric clustering soaks up any endpoint behavior.

* plain Gauss rules on [0, 1], cached.

All rules are returned in unit form (T = 1) and scaled by callers:
``int_0^T tau^p g = T^{p+1} * sum(wbar_i * g(T*xi_i))``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre_01(n: int):
    """Nodes/weights for int_0^1 f(x) dx."""
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def gauss_jacobi_01(n: int, p: float):
    """Nodes/weights for int_0^1 x^p f(x) dx  (p > -1, weight absorbed)."""
    if p <= -1.0:
        raise ValueError(f"Jacobi weight exponent must exceed -1, got {p}")
    # roots_jacobi(n, 0, p): weight (1-x)^0 (1+x)^p on [-1, 1]
    x, w = roots_jacobi(n, 0.0, p)
    return (x + 1.0) / 2.0, w / 2.0 ** (p + 1.0)


@lru_cache(maxsize=None)
def power_weighted_rule(p: float, n: int = 64, tail_panels: int = 120,
                        panel_order: int = 16):
    """Unit-interval nodes/weights for int_0^1 xi^p g(xi) dxi.

    Tolerates an integrable singularity of g at xi = 1.  The skipped
    geometric tail is ~2^(-tail_panels*beta) for g ~ (1-xi)^(beta-1);
    with 120 panels that is below 1e-10 for beta >= 0.3.
    """
    xs = []
    ws = []
    # left half: Gauss-Jacobi with xi^p absorbed
    xj, wj = gauss_jacobi_01(n, p)
    xs.append(0.5 * xj)
    ws.append(wj * 0.5 ** (p + 1.0))
    # right half: dyadic panels closing in on xi = 1
    xg, wg = gauss_legendre_01(panel_order)
    h = 0.5
    for _ in range(tail_panels):
        lo, hi = 1.0 - h, 1.0 - h / 2.0
        t = lo + (hi - lo) * xg
        xs.append(t)
        ws.append(wg * (hi - lo) * t ** p)
        h /= 2.0
    xi = np.concatenate(xs)
    wbar = np.concatenate(ws)
    return xi, wbar


def integrate_power_weighted(g, p: float, T: float, n: int = 64, **kw) -> float:
    """int_0^T tau^p g(tau) dtau with the split rule above."""
    if T <= 0.0:
        raise ValueError(f"integration length must be positive, got T={T}")
    xi, wbar = power_weighted_rule(p, n, **kw)
    return T ** (p + 1.0) * float(wbar @ np.asarray(g(T * xi), dtype=float))


@lru_cache(maxsize=None)
def kernel_rule(alpha: float, p: float, n: int = 160, eps: float = 0.0,
                length: float = 1.0):
    """Nodes/weights (tau_i, w_i) for int_eps^length tau^p g(tau) dtau
    when g is an entire function of y = tau^alpha (propagator kernels are).

    Computed in the y variable so Gauss rules see a smooth integrand:
    with q = (p+1)/alpha - 1,  int tau^p g dtau = (1/alpha) int y^q g dy.
    eps > 0 switches to plain Gauss-Legendre on [eps^alpha, length^alpha]
    with the explicit power factor (used when p <= -1 makes the weight
    non-integrable at 0 and a cutoff was requested).
    """
    if length <= 0.0:
        raise ValueError(f"integration length must be positive, got {length}")
    q = (p + 1.0) / alpha - 1.0
    if eps == 0.0:
        if q <= -1.0:
            raise ValueError(
                f"kernel weight tau^{p} is non-integrable at 0 for alpha={alpha}")
        y, wy = gauss_jacobi_01(n, q)
        Y = length ** alpha
        y = y * Y
        wy = wy * Y ** (q + 1.0) / alpha
    else:
        if not 0.0 < eps < length:
            raise ValueError(f"cutoff must lie inside (0, {length}), got {eps}")
        x, wx = gauss_legendre_01(n)
        y0, Y = eps ** alpha, length ** alpha
        y = y0 + (Y - y0) * x
        wy = wx * (Y - y0) * y ** q / alpha
    tau = y ** (1.0 / alpha)
    return tau, wy
