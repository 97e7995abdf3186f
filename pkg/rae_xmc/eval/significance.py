"""Paired significance testing between two systems' per-query metrics."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from ..utils.exceptions import DimensionMismatch, EmptyInput

P_VALUE_FLOOR = 1e-300


@dataclass(frozen=True)
class TTestResult:
    """Two-sided paired t-test outcome."""

    t: float
    p: float
    n: int
    degenerate: bool = False


def student_t_two_sided_p(t: float, dof: int) -> float:
    """P(|T| >= |t|) for Student's t, via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def paired_t_test(a, b) -> TTestResult:
    """
    Paired t-test on d_i = a_i - b_i.

    All-zero differences give t=0, p=1. Identical non-zero differences have
    zero variance; they are reported as t=±inf, p=0 with ``degenerate`` set.

    Raises:
        DimensionMismatch: If a and b differ in length
        EmptyInput: If fewer than two pairs are given
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DimensionMismatch(
            f"paired samples differ in length: {a.size} vs {b.size}"
        )
    if a.size < 2:
        raise EmptyInput("a paired t-test needs at least two pairs")
    d = a - b
    n = d.size
    if np.all(d == 0):
        return TTestResult(t=0.0, p=1.0, n=n)
    if np.all(d == d[0]):
        return TTestResult(t=math.copysign(math.inf, d[0]), p=0.0, n=n, degenerate=True)
    t = float(np.mean(d) / (np.std(d, ddof=1) / math.sqrt(n)))
    p = student_t_two_sided_p(t, n - 1)
    if p < P_VALUE_FLOOR:
        p = 0.0
    return TTestResult(t=t, p=p, n=n)
