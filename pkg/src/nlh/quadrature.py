"""Quadrature rules on the reference triangle and reference interval.

Triangle rules are returned in barycentric coordinates with weights that sum
to one, so that ``area * weights @ values`` integrates over a physical
triangle.
"""
from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed (Duffy) Gauss product rule exact for polynomials of ``degree``.

    Returns
    -------
    bary : ndarray, shape (nq, 3)
        Barycentric coordinates of the points.
    weights : ndarray, shape (nq,)
        Weights normalised to sum to one.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    # the Duffy jacobian adds one to the degree in the collapsed direction
    n = (degree + 3) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    l1 = s.ravel()
    l2 = ((1.0 - s) * t).ravel()
    weights = (ws * wt * (1.0 - s)).ravel() * 2.0
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


@lru_cache(maxsize=None)
def interval_rule(n):
    """Gauss-Legendre rule with ``n`` points on [0, 1], weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def p1_moment_tensor(order):
    """Exact averages of products of ``order`` barycentric coordinates.

    ``Q[i, j, ...] * |T|`` equals the integral over ``T`` of
    ``lambda_i * lambda_j * ...``.
    """
    Q = np.zeros((3,) * order)
    for idx in product(range(3), repeat=order):
        counts = [idx.count(a) for a in range(3)]
        Q[idx] = 2.0 * np.prod([factorial(c) for c in counts]) / factorial(order + 2)
    Q.setflags(write=False)
    return Q
