"""Rank correlation and paired significance testing, without a statistics dependency.

The Student-t tail uses the regularized incomplete beta function,
``p = I_x(df/2, 1/2)`` with ``x = df / (df + t^2)``, evaluated by the
modified Lentz continued fraction (switching to the symmetric form when
``x`` is past the mean so the fraction converges quickly).
"""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import PairingError, Undefined

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0`` and ``0 <= x <= 1``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(a: Sequence[float], b: Sequence[float], corrections: int = 1) -> tuple[float, float, float]:
    """Two-sided paired t-test on ``a - b``.

    Returns ``(t, p_raw, p_adjusted)`` with Bonferroni ``p_adjusted = min(1, p_raw * corrections)``.
    Differences that are all zero give ``t = 0, p = 1``; constant non-zero
    differences give ``t = +/-inf, p = 0``.
    """
    if len(a) != len(b):
        raise PairingError(f"{len(a)} vs {len(b)} paired values")
    n = len(a)
    if n < 2:
        raise PairingError("need at least two pairs")
    if corrections < 1:
        raise ValueError("corrections must be >= 1")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / math.sqrt(var / n)
        p = t_sf_two_sided(t, n - 1)
    return t, p, min(1.0, p * corrections)


def rankdata(x: Sequence[float]) -> list[float]:
    """1-based ranks, ties sharing their average rank."""
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(rank_a: Sequence[float], rank_b: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average-tie ranks of two aligned sequences."""
    if len(rank_a) != len(rank_b):
        raise PairingError(f"{len(rank_a)} vs {len(rank_b)} items")
    n = len(rank_a)
    if n < 2:
        raise Undefined("Spearman correlation needs at least two items")
    ra, rb = rankdata(rank_a), rankdata(rank_b)
    ma, mb = math.fsum(ra) / n, math.fsum(rb) / n
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = math.fsum((x - ma) ** 2 for x in ra)
    vb = math.fsum((y - mb) ** 2 for y in rb)
    if va == 0.0 or vb == 0.0:
        raise Undefined("Spearman correlation is undefined for a constant ranking")
    return max(-1.0, min(1.0, cov / math.sqrt(va * vb)))
