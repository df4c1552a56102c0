"""Truncated Taylor arithmetic ("jets").

A jet of order K is an array of shape (K+1, ...) holding the normalized
coefficients c_k = f^(k)(x0)/k!.  The recurrences below give exact
derivatives of compositions without finite differences.
"""
from math import factorial, pi, sqrt

import numpy as np
from scipy.special import erf as _erf


def variable(x, order):
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    out[0] = x
    if order >= 1:
        out[1] = 1.0
    return out


def constant(c, like):
    out = np.zeros_like(like)
    out[0] = c
    return out


def mul(a, b):
    K = a.shape[0]
    c = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for k in range(K):
        for j in range(k + 1):
            c[k] += a[j] * b[k - j]
    return c


def recip(a):
    b = np.zeros_like(a)
    b[0] = 1.0 / a[0]
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            acc += a[j] * b[k - j]
        b[k] = -acc * b[0]
    return b


def sqrt_(a):
    b = np.zeros_like(a)
    b[0] = np.sqrt(a[0])
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k):
            acc += b[j] * b[k - j]
        b[k] = (a[k] - acc) / (2.0 * b[0])
    return b


def exp_(a):
    b = np.zeros_like(a)
    b[0] = np.exp(a[0])
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            acc += j * a[j] * b[k - j]
        b[k] = acc / k
    return b


def erf_(a):
    # erf' = 2/sqrt(pi) exp(-a^2)
    w = (2.0 / sqrt(pi)) * exp_(-mul(a, a))
    b = np.zeros_like(a)
    b[0] = _erf(a[0])
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            acc += j * a[j] * w[k - j]
        b[k] = acc / k
    return b


def derivatives(jet):
    """Convert normalized coefficients to plain derivatives f^(k)."""
    fac = np.array([factorial(k) for k in range(jet.shape[0])], dtype=float)
    return jet * fac.reshape((-1,) + (1,) * (jet.ndim - 1))
