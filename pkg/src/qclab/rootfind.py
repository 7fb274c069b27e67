"""Bracketed scalar root finding: bisection narrowed, Newton polished.

All landmark and load-response solves in this package go through
:func:`bracketed_root`.  The bracket is mandatory; Newton is only used to
polish inside it, so a wild derivative can never escape the interval.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


def scan_bracket(f: Callable[[float], float], lo: float, hi: float, samples: int = 64):
    """Find a sign-change subinterval of [lo, hi] by uniform scanning.

    Returns (a, b) with f(a)*f(b) <= 0, or raises BracketError if the
    sampled function is single-signed.
    """
    xs = np.linspace(lo, hi, samples)
    fs = np.array([f(float(x)) for x in xs])
    if fs[0] == 0.0:
        return float(xs[0]), float(xs[0])
    sign_change = np.nonzero(np.sign(fs[:-1]) * np.sign(fs[1:]) <= 0)[0]
    if sign_change.size == 0:
        raise BracketError(f"no sign change of f on [{lo}, {hi}] over {samples} samples")
    k = int(sign_change[0])
    return float(xs[k]), float(xs[k + 1])


def bracketed_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    df: Callable[[float], float] | None = None,
    abs_tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Root of f on [lo, hi] with |f(root)| <= abs_tol.

    Plain bisection until the interval is narrow, then Newton from the
    midpoint (when ``df`` is given) with fallback to bisection whenever a
    Newton step leaves the current bracket.
    """
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise BracketError(f"f({a})={fa} and f({b})={fb} do not bracket a root")

    x = 0.5 * (a + b)
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= abs_tol:
            return x
        if fa * fx <= 0.0:
            b, fb = x, fx
        else:
            a, fa = x, fx
        x_newton = None
        if df is not None:
            d = df(x)
            if d != 0.0:
                cand = x - fx / d
                if a < cand < b:
                    x_newton = cand
        x = x_newton if x_newton is not None else 0.5 * (a + b)
        if b - a <= 4.0 * np.finfo(float).eps * max(1.0, abs(x)):
            return x
    return x
