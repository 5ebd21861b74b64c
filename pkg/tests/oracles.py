"""Brute-force reference implementations used only by the tests.

They work on plain Python lists and explicit coordinate sets and share no
code with the package.
"""

import math
from fractions import Fraction


def coords(prob_rows, lam):
    """Pixel coordinates whose probability is at least 1 - lam."""
    t = 1.0 - lam
    return {
        (r, c)
        for r, row in enumerate(prob_rows)
        for c, p in enumerate(row)
        if float(p) >= t
    }


def truth_coords(mask_rows):
    return {(r, c) for r, row in enumerate(mask_rows) for c, v in enumerate(row) if v}


def fdr(pred_set, truth_set):
    if not pred_set:
        return 0.0
    return 1.0 - len(pred_set & truth_set) / len(pred_set)


def fnr(pred_set, truth_set):
    if not truth_set:
        return 0.0
    return 1.0 - len(pred_set & truth_set) / len(truth_set)


def curve(prob_rows, mask_rows, grid, kind):
    loss = fdr if kind == "fdr" else fnr
    truth = truth_coords(mask_rows)
    return [loss(coords(prob_rows, lam), truth) for lam in grid]


def scan(curves, grid, alpha, bound_b=1.0):
    """Check the selection condition at every grid point; return (lambda, feasible)."""
    n = len(curves)
    level = alpha - (bound_b - alpha) / n
    qualifying = []
    for j, lam in enumerate(grid):
        mean = math.fsum(c[j] for c in curves) / n
        if mean <= level:
            qualifying.append(lam)
    if not qualifying:
        return 1.0, False
    return min(qualifying), True


def exact_rhs(alpha, n, bound_b=1):
    """Selection level in exact rational arithmetic."""
    alpha, bound_b = Fraction(alpha), Fraction(bound_b)
    return alpha - (bound_b - alpha) / n
