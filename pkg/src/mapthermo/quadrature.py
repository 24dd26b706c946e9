"""Cumulative quadrature on uniform time grids.

Everything path-dependent in this package is a running integral evaluated at
every grid point, so the workhorse here is a *cumulative* composite Simpson
rule: prefix integrals over an even number of intervals use Simpson pairs,
and a prefix ending on an odd interval count gets a single trapezoid for the
final interval. The same policy is used everywhere (path operators, the
analytic qubit engine, mean-work cross checks) so that discretizations match
between independent routes to the same quantity.

Grids are required to be uniform; `grid_spacing` checks that.
"""

from __future__ import annotations

import numpy as np


def grid_spacing(times: np.ndarray, rtol: float = 1e-9) -> float:
    """Return the spacing of a uniform, strictly increasing grid.

    Raises ValueError if the grid has fewer than two points, is not strictly
    increasing, or is not uniform to relative tolerance `rtol`.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("grid needs at least two points")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ValueError("grid must be strictly increasing")
    h = steps[0]
    if np.max(np.abs(steps - h)) > rtol * max(abs(h), 1.0):
        raise ValueError("grid must be uniform")
    return float(h)


def cumulative_simpson(samples: np.ndarray, h: float) -> np.ndarray:
    """Prefix integrals of sampled data on a uniform grid.

    samples has shape (N+1, ...) with samples[j] = f(t_j); the result has the
    same shape, result[i] = integral of f from t_0 to t_i. Composite Simpson
    over interval pairs; a prefix with an odd interval count ends with one
    trapezoid on the last interval (attached to the Simpson value two points
    back, so even prefixes never contain a trapezoid contribution).
    """
    f = np.asarray(samples)
    n = f.shape[0] - 1
    out = np.zeros_like(f, dtype=np.result_type(f.dtype, float))
    if n == 0:
        return out
    for i in range(2, n + 1, 2):
        out[i] = out[i - 2] + (h / 3.0) * (f[i - 2] + 4.0 * f[i - 1] + f[i])
    for i in range(1, n + 1, 2):
        out[i] = out[i - 1] + (h / 2.0) * (f[i - 1] + f[i])
    return out


def cumulative_exp_weighted(xi: np.ndarray, growth: np.ndarray,
                            h: float) -> np.ndarray:
    """Stable prefix integrals of the form e^{-G(t_i)} * int_0^{t_i} xi(s) e^{G(s)} ds.

    `growth` holds G(t_j) on the grid (any real accumulating function, often
    itself a cumulative integral). Naively integrating xi * e^G overflows once
    G grows past ~700; instead each Simpson pair / trapezoid tail is
    accumulated in the rescaled variable, so every stored term carries a
    non-positive exponent. Algebraically identical to
    exp(-G) * cumulative_simpson(xi * exp(G)) in exact arithmetic.
    """
    x = np.asarray(xi, dtype=float)
    G = np.asarray(growth, dtype=float)
    n = x.shape[0] - 1
    out = np.zeros_like(x)
    if n == 0:
        return out
    for i in range(2, n + 1, 2):
        out[i] = out[i - 2] * np.exp(G[i - 2] - G[i]) + (h / 3.0) * (
            x[i - 2] * np.exp(G[i - 2] - G[i])
            + 4.0 * x[i - 1] * np.exp(G[i - 1] - G[i])
            + x[i]
        )
    for i in range(1, n + 1, 2):
        out[i] = out[i - 1] * np.exp(G[i - 1] - G[i]) + (h / 2.0) * (
            x[i - 1] * np.exp(G[i - 1] - G[i]) + x[i]
        )
    return out
