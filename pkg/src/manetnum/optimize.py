"""Scalar search used for concave one-dimensional best responses."""

import math

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI2 = (3 - math.sqrt(5)) / 2  # 1 / phi^2


def golden_section_max(f, a, b, tol=1e-8):
    """
    Golden-section search for the maximizer of a unimodal ``f`` on [a, b].

    Returns the midpoint of the final bracket, whose width is <= tol.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(n - 1):
        if fc > fd:
            b, d, fd = d, c, fc
            h *= INV_PHI
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h *= INV_PHI
            d = a + INV_PHI * h
            fd = f(d)
    if fc > fd:
        return 0.5 * (a + d)
    return 0.5 * (c + b)
