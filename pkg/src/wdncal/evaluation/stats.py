"""Significance tests for the z statistics.

Shapiro-Wilk (Royston's AS R94 approximation) decides whether the values
look normal; if normality is rejected at ``alpha`` the report uses the
Wilcoxon signed-rank test, otherwise a one-sample t-test.  Normal and t
distribution functions come from scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm
from scipy.stats import t as student_t

from ..errors import StatisticsError

EXACT_LIMIT = 20
MIN_NONZERO = 6


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Null distribution of 2*W+ as counts over 0..sum(doubled_ranks).

    Each rank carries a + or - sign with probability 1/2; working with
    doubled ranks keeps mid-ranks integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(values, exact: bool | None = None) -> tuple[float, float]:
    """Two-sided signed-rank test of zero median; returns ``(min(W+, W-), p)``.

    Zeros are dropped and ties get mid-ranks.  The exact null distribution
    is used for up to 20 non-zero values, otherwise the normal
    approximation with tie and continuity corrections.
    """
    x = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise StatisticsError("values must be finite")
    x = x[x != 0]
    n = x.size
    if n < MIN_NONZERO:
        raise StatisticsError(f"need at least {MIN_NONZERO} non-zero values, got {n}")
    ranks = _midranks(np.abs(x))
    w_plus = float(ranks[x > 0].sum())
    w_minus = float(ranks[x < 0].sum())
    stat = min(w_plus, w_minus)
    if exact is None:
        exact = n <= EXACT_LIMIT
    if exact:
        doubled = np.rint(2 * ranks).astype(int)
        counts = signed_rank_null(doubled)
        probs = counts / counts.sum()
        k = int(round(2 * w_plus))
        lower = probs[:k + 1].sum()
        upper = probs[k:].sum()
        return stat, float(min(1.0, 2.0 * min(lower, upper)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(x), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
    if var <= 0:
        return stat, 1.0
    z = (abs(w_plus - mean) - 0.5) / np.sqrt(var)
    return stat, float(min(1.0, 2.0 * norm.sf(max(z, 0.0))))


# Royston (1995) polynomial coefficients
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x: float) -> float:
    return float(sum(c * x ** i for i, c in enumerate(coef)))


def shapiro_weights(n: int) -> np.ndarray:
    """Antisymmetric coefficient vector a (length n) for sorted data."""
    half = n // 2
    if n == 3:
        a_half = np.array([np.sqrt(0.5)])
    else:
        m = norm.ppf((np.arange(1, half + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * float(m @ m)
        ssumm2 = np.sqrt(summ2)
        rsn = 1.0 / np.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        a_half = -m / ssumm2
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = np.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
            a_half = -m / fac
            a_half[0], a_half[1] = a1, a2
        else:
            fac = np.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
            a_half = -m / fac
            a_half[0] = a1
    a = np.zeros(n)
    a[n - half:] = a_half[::-1]
    a[:half] = -a_half
    return a


def shapiro_wilk(values) -> tuple[float, float]:
    """Shapiro-Wilk W and p-value, valid for 3 <= n <= 5000."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    if not 3 <= n <= 5000:
        raise StatisticsError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={n}")
    if not np.all(np.isfinite(x)):
        raise StatisticsError("values must be finite")
    if x[-1] - x[0] == 0:
        raise StatisticsError("zero variance: all values are equal")
    xc = (x - x.mean()) / (x[-1] - x[0])
    a = shapiro_weights(n)
    w = float((a @ xc) ** 2 / (xc @ xc))
    w = min(w, 1.0)
    if n == 3:
        p = 6.0 / np.pi * (np.arcsin(np.sqrt(w)) - np.pi / 3.0)
        return w, float(max(p, 0.0))
    w1 = np.log1p(-w) if w < 1 else -np.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -np.log(gamma - w1)
        mean, sd = _poly(_C3, n), np.exp(_poly(_C4, n))
    else:
        xx = np.log(n)
        y = w1
        mean, sd = _poly(_C5, xx), np.exp(_poly(_C6, xx))
    return w, float(norm.sf(y, mean, sd))


def t_test(values) -> tuple[float, float]:
    """Two-sided one-sample t-test against zero mean."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise StatisticsError("t-test needs at least two values")
    sd = x.std(ddof=1)
    if sd == 0:
        raise StatisticsError("zero variance: all values are equal")
    t = x.mean() / (sd / np.sqrt(x.size))
    return float(t), float(2.0 * student_t.sf(abs(t), x.size - 1))


@dataclass(frozen=True)
class SignificanceReport:
    gate: dict | None               # Shapiro-Wilk statistic and p-value
    test: str | None                # "wilcoxon" or "t-test"
    statistic: float | None
    p_value: float | None
    alpha: float = 0.05
    note: str = ""

    def to_document(self) -> dict:
        return {"normality_gate": self.gate, "selected_test": self.test, "statistic": self.statistic,
                "p_value": self.p_value, "alpha": self.alpha, "note": self.note}


def significance(values, alpha: float = 0.05) -> SignificanceReport:
    """Shapiro-Wilk gate, then Wilcoxon (normality rejected) or t-test (not rejected)."""
    w, p_norm = shapiro_wilk(values)
    gate = {"test": "shapiro-wilk", "statistic": w, "p_value": p_norm}
    if p_norm < alpha:
        stat, p = wilcoxon_signed_rank(values)
        return SignificanceReport(gate, "wilcoxon", stat, p, alpha, "normality rejected")
    stat, p = t_test(values)
    return SignificanceReport(gate, "t-test", stat, p, alpha, "normality not rejected")
