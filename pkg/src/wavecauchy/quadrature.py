"""Quadrature rules used by the kernels and the reconstruction."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes and weights on [a, b].

    ``a`` and ``b`` may be arrays; the node axis is appended last, so the
    result has shape ``np.broadcast(a, b).shape + (n,)``.
    """
    x, w = _leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def graded_gauss_legendre(length, scale, n):
    """Nodes on [0, length] clustered toward 0 by a logarithmic map.

    With ``u = scale * (exp(xi * L) - 1)``, ``L = log(1 + length / scale)``,
    an integrand that varies on the scale ``scale`` near 0 and decays like
    ``1 / u`` further out becomes nearly flat in ``xi``.  Returns ``(u, w)``
    with the node axis last; ``length`` and ``scale`` broadcast.
    """
    length = np.asarray(length, dtype=float)
    scale = np.minimum(np.asarray(scale, dtype=float), np.maximum(length, 1e-300))
    scale = np.maximum(scale, 1e-300)
    big_l = np.log1p(length / scale)[..., None]
    xi, wxi = gauss_legendre(0.0, 1.0, n)
    sc = scale[..., None]
    u = sc * np.expm1(xi * big_l)
    w = wxi * big_l * (u + sc)
    return u, w


def periodic_half_nodes(n):
    """Trapezoid nodes for an even 2*pi-periodic integrand.

    The full-period rule with ``2n`` points folds onto ``s_k = k*pi/n``,
    ``k = 0..n``; the returned weights already include the fold, so that
    ``sum(w * f(s))`` approximates the integral over ``[-pi, pi]``.
    """
    s = np.pi * np.arange(n + 1) / n
    w = np.full(n + 1, 2.0 * np.pi / n)
    w[0] = w[-1] = np.pi / n
    return s, w


def trapezoid_weights(x):
    """Composite trapezoid weights for sorted (possibly nonuniform) nodes."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w
