"""Kernel functions for the full-boundary Cauchy problem of the 2D wave equation.

Everything here is nondimensional with unit wave speed.  The family of
kernels, all parametrised by the width ``h > 0``:

* ``w_h`` in three equivalent integral forms (``w_unified``, ``w_inside``,
  ``w_outside``).  The first two grow like ``exp(y**2 / h)``.
* ``v_h = -theta(y - |t|) w_h`` and its rotated copies ``v_alpha``.
* ``V_h``, the rotation average of ``v_alpha``.  ``V_direct`` evaluates the
  average literally (exponentially large integrands, heavy cancellation);
  ``V_stable`` uses a representation whose exponents are all nonpositive
  and is the production path.
* ``rho`` (the spatial source produced by ``V_h``), the time mollifier ``psi``
  and the mollified kernel ``mollify_V``.

The growing forms are evaluated in double precision when the sum is well
conditioned and are re-evaluated with gmpy2 floats otherwise, so their
results stay meaningful as cross-checks.  Past ``exp_cap`` they raise
:class:`UnstableRegimeError`.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np

from .errors import DomainError, SingularPointError, UnstableRegimeError
from .quadrature import gauss_legendre, graded_gauss_legendre, periodic_half_nodes

# prefactor of the stable double integral for V_h
C_STABLE = 1.0 / (8.0 * math.pi**2.5)
# sqrt(h) * |V_h| never exceeds this (each of the two stable terms is bounded by half of it)
GROWTH_BOUND = 1.0 / (2.0 * math.sqrt(math.pi))

NODE_SCALE = 8.0
EXTENDED_COND = 1e4
_DBL_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class KernelParams:
    """Numerical parameters of the kernel family.

    Attributes
    ----------
    h : float
        Regularization width (length**2 units).
    n_s : int
        Base node count in the ``s`` variable (per panel for ``V_stable``).
    n_alpha : int
        Base node count in the angular variables (``alpha``, ``phi``).
    eps : float
        Mollifier width (time**2 units); 0 disables mollification.
    exp_cap : float
        Largest admissible real exponent for the growing kernels.
    """

    h: float
    n_s: int = 32
    n_alpha: int = 32
    eps: float = 0.0
    exp_cap: float = 700.0

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"h must be positive, got {self.h!r}")
        if int(self.n_s) != self.n_s or self.n_s < 8:
            raise ValueError(f"n_s must be an integer >= 8, got {self.n_s!r}")
        if int(self.n_alpha) != self.n_alpha or self.n_alpha < 8:
            raise ValueError(f"n_alpha must be an integer >= 8, got {self.n_alpha!r}")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ValueError(f"eps must be >= 0, got {self.eps!r}")
        if not self.exp_cap > 0:
            raise ValueError(f"exp_cap must be positive, got {self.exp_cap!r}")

    def with_h(self, h):
        return KernelParams(h, self.n_s, self.n_alpha, self.eps, self.exp_cap)


@dataclass(frozen=True)
class SpaceTimePoint:
    x: float
    y: float
    t: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.t)):
            raise ValueError(f"non-finite coordinates in {self!r}")


@dataclass(frozen=True)
class RadialPoint:
    r: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and math.isfinite(self.t)):
            raise ValueError(f"non-finite coordinates in {self!r}")
        if self.r < 0:
            raise ValueError(f"r must be nonnegative, got {self.r!r}")


@dataclass(frozen=True)
class KernelValue:
    value: float
    est_quad_error: float

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class WEvaluation:
    """Value of one w_h form together with how it was obtained."""

    value: float
    est_quad_error: float
    condition: float
    nodes: int
    extended_precision: bool


def _point(p):
    if isinstance(p, SpaceTimePoint):
        return p
    x, y, t = p
    return SpaceTimePoint(float(x), float(y), float(t))


def _w_prefactor(h):
    return 1.0 / (4.0 * math.pi**1.5 * math.sqrt(h))


# ---------------------------------------------------------------------------
# w_h: three forms of one periodic integral
#
# Each form is written as the real part of a 2*pi-periodic integrand that is
# even in s, exp((b**2 - a**2)/h) * cos(2 a b / h):
#   unified:  a = x + t cos s,            b = y sin s
#   inside:   a = x,                      b = sqrt(y**2 - t**2) sin s
#   outside:  a = x - sqrt(t**2 - y**2) cos s,  b = 0   (s shifted by pi/2)
# ---------------------------------------------------------------------------

def _w_node_count(x, y, t, h, base):
    ax, ay, at = abs(x), abs(y), abs(t)
    n = math.ceil(NODE_SCALE * (ax + ay + at) * max(ax, ay, at) / h)
    n = max(int(base), n)
    return n + (n % 2)


def _w_ab(form, x, y, t, s):
    if form == "unified":
        return x + t * np.cos(s), y * np.sin(s)
    if form == "inside":
        return np.full_like(s, x), math.sqrt(y * y - t * t) * np.sin(s)
    if form == "outside":
        return x - math.sqrt(t * t - y * y) * np.cos(s), np.zeros_like(s)
    raise ValueError(f"unknown form {form!r}")


def _check_form_domain(form, y, t):
    if form == "inside" and abs(y) < abs(t):
        raise DomainError(f"w_inside needs |y| >= |t| (y={y}, t={t})")
    if form == "outside" and abs(y) >= abs(t):
        raise DomainError(f"w_outside needs |y| < |t| (y={y}, t={t})")


def _w_double(form, x, y, t, h, n_full, cap):
    # full-period rule with 2*n_full points; the n_full rule uses every other node
    m = n_full
    s, wt = periodic_half_nodes(m)
    a, b = _w_ab(form, x, y, t, s)
    e = (b * b - a * a) / h
    emax = float(e.max())
    if emax > cap:
        raise UnstableRegimeError(emax, cap)
    f = np.exp(e) * np.cos(2.0 * a * b / h)
    fine = float(wt @ f)
    _, wt_half = periodic_half_nodes(m // 2)
    coarse = float(wt_half @ f[::2])
    mag = float(wt @ np.abs(f))
    return fine, coarse, mag


@lru_cache(maxsize=32)
def _mp_trig_nodes(m, prec):
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        pi = gmpy2.const_pi()
        cs, sn = [], []
        for k in range(m + 1):
            s = pi * k / m
            cs.append(gmpy2.cos(s))
            sn.append(gmpy2.sin(s))
    return tuple(cs), tuple(sn)


def _w_extended_sums(form, x, y, t, h, m, prec):
    """Fine/coarse trapezoid sums and the absolute sum, in gmpy2 floats."""
    cs, sn = _mp_trig_nodes(m, prec)
    mpfr = gmpy2.mpfr
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        X, Y, T, H = mpfr(x), mpfr(y), mpfr(t), mpfr(h)
        if form == "inside":
            B = gmpy2.sqrt(Y * Y - T * T)
        elif form == "outside":
            Q = gmpy2.sqrt(T * T - Y * Y)
        fine = mpfr(0)
        coarse = mpfr(0)
        mag = mpfr(0)
        for k in range(m + 1):
            if form == "unified":
                a = X + T * cs[k]
                b = Y * sn[k]
            elif form == "inside":
                a = X
                b = B * sn[k]
            else:
                a = X - Q * cs[k]
                b = 0
            term = gmpy2.exp((b * b - a * a) / H)
            if b:
                term *= gmpy2.cos(2 * a * b / H)
            wk = 1 if k in (0, m) else 2
            fine += wk * term
            mag += wk * abs(term)
            if k % 2 == 0:
                coarse += (1 if k in (0, m) else 2) * term
        pi = gmpy2.const_pi()
        fine = fine * pi / m
        coarse = coarse * 2 * pi / m
        mag = mag * pi / m
        cond = mag / abs(fine) if fine != 0 else mpfr("inf")
        return float(fine), float(coarse), float(mag), cond


def _w_extended(form, x, y, t, h, m, cond_hint):
    prec = 64 + math.ceil(math.log2(max(cond_hint, 2.0))) + 40
    for _ in range(6):
        fine, coarse, mag, cond = _w_extended_sums(form, x, y, t, h, m, prec)
        need = 60 + (math.ceil(gmpy2.log2(cond)) if gmpy2.is_finite(cond) else prec)
        if need <= prec:
            return fine, coarse, float(cond)
        prec = need + 40
    return fine, coarse, float(cond)


def w_evaluate(p, kp, form="unified"):
    """Evaluate one representation of w_h with diagnostics.

    Parameters
    ----------
    p : SpaceTimePoint or (x, y, t)
    kp : KernelParams
    form : {"unified", "inside", "outside"}

    Returns
    -------
    WEvaluation
        The value, a node-doubling error estimate, the condition number of
        the quadrature sum, the number of nodes on the full period, and
        whether the gmpy2 fallback was used.
    """
    p = _point(p)
    _check_form_domain(form, p.y, p.t)
    h = kp.h
    m = _w_node_count(p.x, p.y, p.t, h, kp.n_s)
    fine, coarse, mag = _w_double(form, p.x, p.y, p.t, h, m, kp.exp_cap)
    cond = mag / abs(fine) if fine != 0 else math.inf
    extended = cond > EXTENDED_COND
    if extended:
        hint = cond if math.isfinite(cond) else 1.0 / _DBL_EPS
        fine, coarse, cond = _w_extended(form, p.x, p.y, p.t, h, m, hint)
    pref = _w_prefactor(h)
    return WEvaluation(
        value=pref * fine,
        est_quad_error=pref * abs(fine - coarse),
        condition=cond,
        nodes=2 * m,
        extended_precision=extended,
    )


def w_unified(p, kp):
    """w_h from the representation valid for every (x, y, t).

    The integral over ``s`` in ``[-pi, pi]`` of
    ``exp(-(x - i y sin s + t cos s)**2 / h)`` is folded to its real,
    even part and summed with the periodic trapezoid rule.  Result is even
    in each of x, y, t.
    """
    return w_evaluate(p, kp, "unified").value


def w_inside(p, kp):
    """w_h from the square-root form valid for ``|y| >= |t|``.

    Grows like ``exp((y**2 - t**2) / h)`` as ``h -> 0``.
    """
    return w_evaluate(p, kp, "inside").value


def w_outside(p, kp):
    """w_h for ``|y| < |t|``; the exponent is nonpositive so the value is
    positive and at most ``1 / (2 sqrt(pi h))``."""
    return w_evaluate(p, kp, "outside").value


def v(p, kp):
    """The one-sided kernel ``v_h = -theta(y - |t|) w_h`` with theta(0) = 1."""
    p = _point(p)
    if p.y < abs(p.t):
        return 0.0
    return -w_inside(p, kp)


def rotate(x, y, alpha):
    """Coordinates of (x, y) in the frame rotated by ``alpha``."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    return x * ca + y * sa, -x * sa + y * ca


def v_alpha(p, alpha, kp):
    """``v_h`` evaluated at the point rotated through ``alpha``."""
    if not -math.pi - 1e-12 <= alpha <= math.pi + 1e-12:
        raise ValueError(f"alpha must lie in [-pi, pi], got {alpha!r}")
    p = _point(p)
    xr, yr = rotate(p.x, p.y, alpha)
    return v(SpaceTimePoint(xr, yr, p.t), kp)


def v_alpha_array(x, y, t, alpha, h, n_s=32, exp_cap=700.0, chunk=2048):
    """Vectorised ``v_h^alpha`` in double precision.

    Returns ``(values, est_error)``.  Uses the square-root form inside the
    closed cone and one node count per chunk (the largest any point in it
    needs).  Raises UnstableRegimeError as soon as an exponent passes
    ``exp_cap``.
    """
    x, y, t = np.broadcast_arrays(*(np.asarray(v_, dtype=float) for v_ in (x, y, t)))
    shape = x.shape
    ca, sa = math.cos(alpha), math.sin(alpha)
    xr = (x * ca + y * sa).ravel()
    yr = (-x * sa + y * ca).ravel()
    tt = t.ravel()
    vals = np.zeros(xr.size)
    errs = np.zeros(xr.size)
    idx = np.flatnonzero(yr >= np.abs(tt))
    if idx.size:
        b2 = np.maximum(yr[idx] ** 2 - tt[idx] ** 2, 0.0)
        emax = float(np.max((b2 - xr[idx] ** 2) / h))
        if emax > exp_cap:
            raise UnstableRegimeError(emax, exp_cap)
    pref = _w_prefactor(h)
    for lo in range(0, idx.size, chunk):
        j = idx[lo:lo + chunk]
        a = xr[j]
        b = np.sqrt(np.maximum(yr[j] ** 2 - tt[j] ** 2, 0.0))
        spread = np.abs(a) + np.abs(yr[j]) + np.abs(tt[j])
        big = np.maximum(np.maximum(np.abs(a), np.abs(yr[j])), np.abs(tt[j]))
        m = max(int(n_s), math.ceil(NODE_SCALE * float(np.max(spread * big)) / h))
        m += m % 2
        s, wt = periodic_half_nodes(m)
        _, wt_half = periodic_half_nodes(m // 2)
        bs = b[:, None] * np.sin(s)[None, :]
        e = (bs * bs - (a * a)[:, None]) / h
        f = np.exp(e) * np.cos(2.0 * a[:, None] * bs / h)
        fine = f @ wt
        coarse = f[:, ::2] @ wt_half
        vals[j] = -pref * fine
        errs[j] = pref * np.abs(fine - coarse)
    return vals.reshape(shape), errs.reshape(shape)


# ---------------------------------------------------------------------------
# V_h by direct rotation average (oracle)
# ---------------------------------------------------------------------------

def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _direct_grid(p, kp, n_a):
    r = math.hypot(p.x, p.y)
    alpha0 = math.acos(min(abs(p.t) / r, 1.0))
    # v_alpha is supported where y' = r cos(alpha - beta) >= |t|
    beta = math.atan2(-p.x, p.y)
    alpha, wa = gauss_legendre(beta - alpha0, beta + alpha0, n_a)
    alpha = _wrap_angle(alpha)
    ca, sa = np.cos(alpha), np.sin(alpha)
    xr = p.x * ca + p.y * sa
    yr = -p.x * sa + p.y * ca
    b2 = np.maximum(yr * yr - p.t * p.t, 0.0)
    n_full = max(
        _w_node_count(float(xi), float(yi), p.t, kp.h, kp.n_s) for xi, yi in zip(xr, yr)
    )
    m = n_full // 2
    return xr, b2, wa, m + (m % 2)


def _direct_double(xr, b2, wa, h, m, cap):
    s, ws = periodic_half_nodes(m)
    b = np.sqrt(b2)[:, None] * np.sin(s)[None, :]
    a = xr[:, None]
    e = (b * b - a * a) / h
    emax = float(e.max())
    if emax > cap:
        raise UnstableRegimeError(emax, cap)
    f = np.exp(e) * np.cos(2.0 * a * b / h)
    inner = f @ ws
    total = float(wa @ inner)
    mag = float(wa @ (np.abs(f) @ ws))
    return total, mag


@lru_cache(maxsize=16)
def _mp_gauss_legendre(n, prec):
    """Gauss-Legendre nodes/weights on [-1, 1] at ``prec`` bits.

    Double-precision nodes are polished by Newton steps on the Legendre
    recurrence; each step doubles the number of correct bits.
    """
    x0, _ = np.polynomial.legendre.leggauss(n)
    mpfr = gmpy2.mpfr
    nodes, weights = [], []
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        for xd in x0:
            x = mpfr(float(xd))
            for _ in range(2 + math.ceil(math.log2(prec / 50.0))):
                p0, p1 = mpfr(1), x
                for k in range(2, n + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = n * (x * p1 - p0) / (x * x - 1)
                x = x - p1 / dp
            p0, p1 = mpfr(1), x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = n * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    return tuple(nodes), tuple(weights)


def _direct_extended(p, h, n_a, m, prec):
    """The rotation average with every input, node and rotation in gmpy2 floats."""
    cs, sn = _mp_trig_nodes(m, prec)
    xi, wi = _mp_gauss_legendre(n_a, prec)
    half = m // 2
    mpfr = gmpy2.mpfr
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        X, Y, T, H = mpfr(p.x), mpfr(p.y), mpfr(p.t), mpfr(h)
        r = gmpy2.sqrt(X * X + Y * Y)
        alpha0 = gmpy2.acos(abs(T) / r)
        beta = gmpy2.atan2(-X, Y)
        total = mpfr(0)
        mag = mpfr(0)
        for xk, wk in zip(xi, wi):
            alpha = beta + alpha0 * xk
            ca, sa = gmpy2.cos(alpha), gmpy2.sin(alpha)
            xr = X * ca + Y * sa
            yr = -X * sa + Y * ca
            B = gmpy2.sqrt(abs(yr * yr - T * T))
            inner = mpfr(0)
            imag = mpfr(0)
            # the inside form is symmetric under s -> pi - s: fold onto [0, pi/2]
            for k in range(half + 1):
                b = B * sn[k]
                term = gmpy2.exp((b * b - xr * xr) / H) * gmpy2.cos(2 * xr * b / H)
                wt = 2 if k == 0 else (2 if k == half else 4)
                inner += wt * term
                imag += wt * abs(term)
            total += alpha0 * wk * inner
            mag += alpha0 * wk * imag
        pi = gmpy2.const_pi()
        total = total * pi / m
        mag = mag * pi / m
        cond = mag / abs(total) if total != 0 else mpfr("inf")
        return float(total), cond


def V_direct(p, kp, n_alpha=None):
    """V_h as the literal average of ``v_alpha`` over ``alpha`` in [-pi, pi].

    The Heaviside factor restricts the average to an arc of half-width
    ``arccos(|t| / r)`` around the direction of (x, y); Gauss-Legendre nodes
    on that arc are fed through :func:`v_alpha`'s rotation.  Intended as an
    oracle for moderate ``h``: the integrand is of size ``exp((r**2-t**2)/h)``
    while the result is ``O(h**-0.5)``, so badly conditioned sums are redone
    in extended precision.
    """
    p = _point(p)
    r = math.hypot(p.x, p.y)
    if r <= abs(p.t):
        return 0.0
    h = kp.h
    if n_alpha is None:
        n_alpha = max(kp.n_alpha, math.ceil(5.0 * r * r / h) + 24)
    xr, b2, wa, m = _direct_grid(p, kp, n_alpha)
    total, mag = _direct_double(xr, b2, wa, h, m, kp.exp_cap)
    cond = mag / abs(total) if total != 0 else math.inf
    if cond > EXTENDED_COND:
        hint = cond if math.isfinite(cond) else 1.0 / _DBL_EPS
        prec = 64 + math.ceil(math.log2(max(hint, 2.0))) + 40
        for _ in range(6):
            total, cond_mp = _direct_extended(p, h, n_alpha, m, prec)
            need = 60 + (math.ceil(gmpy2.log2(cond_mp)) if gmpy2.is_finite(cond_mp) else prec)
            if need <= prec:
                break
            prec = need + 40
    return -_w_prefactor(h) * total / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# V_h, stable representation
# ---------------------------------------------------------------------------

def _cone_tilde(r, at, h, n_o, n_i):
    """Vtilde_h(r, t): the alpha-average extended to |alpha| <= pi/2.

    Uses the double integral over s in [0, pi/2] and phi in [-pi/2, pi/2]
    of exp(-cos(s)**2 (r sin(phi) + |t|)**2 / h) obtained after
    z = cos(s) sin(phi) removes the inverse square root.
    """
    sh = math.sqrt(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(r > at, at / np.where(r > 0, r, 1.0), 1.0)
    phi_p = -np.arcsin(b)
    cos_pp = np.sqrt(np.maximum(1.0 - b * b, 0.0))
    rr = np.maximum(r, 1e-300)

    # outer variable u = pi/2 - s, cos(s) = sin(u)
    u, wu = graded_gauss_legendre(np.full_like(r, np.pi / 2), sh / rr, n_o)
    k = r[:, None] * np.sin(u) / sh

    with np.errstate(divide="ignore"):
        width = np.minimum(
            1.0 / (k * cos_pp[:, None]), np.sqrt(2.0 / np.maximum(k, 1e-300))
        )
    total = np.zeros_like(k)
    for sign, length in ((1.0, np.pi / 2 - phi_p), (-1.0, phi_p + np.pi / 2)):
        ln = np.broadcast_to(length[:, None], k.shape)
        du, wd = graded_gauss_legendre(ln, np.minimum(width, np.maximum(ln, 1e-300)), n_i)
        # sin(phi_p + sign*du) - sin(phi_p), written without cancellation
        half = 0.5 * sign * du
        diff = 2.0 * np.cos(phi_p[:, None, None] + half) * np.sin(half)
        total += np.sum(wd * np.exp(-((k[..., None] * diff) ** 2)), axis=-1)
    return -(4.0 * C_STABLE / sh) * np.sum(wu * total, axis=-1)


def _cone_correction(r, at, h, n_o, n_i):
    """(1/pi) * integral over alpha in [alpha0, pi/2] of w_h(r sin a, r cos a, t).

    On that range r cos(alpha) <= |t|, so the outside form applies and every
    exponent is nonpositive.
    """
    sh = math.sqrt(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r > at, at / np.where(r > 0, r, 1.0), 1.0)
    alpha0 = np.arccos(np.clip(ratio, 0.0, 1.0))
    length = np.pi / 2 - alpha0
    rr = np.maximum(r, 1e-300)
    # u = pi/2 - alpha on two panels: one graded toward u = 0, where the
    # outside form peaks, and one toward alpha0, where q -> 0 and w_out has an
    # integrable peak whenever the point is within ~sqrt(h) of the cone
    half = 0.5 * length
    off = np.sqrt(np.maximum(r * r - at * at, 0.0))
    far_scale = (sh / rr) * np.minimum(1.0, sh / np.maximum(off, 1e-300))
    u_near, w_near = graded_gauss_legendre(half, sh / rr, n_o)
    d_far, w_far = graded_gauss_legendre(half, far_scale, n_o)
    u = np.concatenate([u_near, length[:, None] - d_far], axis=-1)
    wu = np.concatenate([w_near, w_far], axis=-1)
    x = r[:, None] * np.cos(u)
    q = np.sqrt(np.maximum(at[:, None] ** 2 - (r[:, None] * np.sin(u)) ** 2, 0.0))
    gap = np.maximum(r * r - at * at, 0.0)[:, None] / np.maximum(x + q, 1e-300)
    with np.errstate(divide="ignore"):
        width = np.minimum(
            np.sqrt(h / np.maximum(q * gap, 1e-300)),
            (4.0 * h / np.maximum(q * q, 1e-300)) ** 0.25,
        )
    width = np.minimum(width, np.pi)
    sig, ws = graded_gauss_legendre(np.full_like(x, np.pi), width, n_i)
    arg = gap[..., None] + 2.0 * q[..., None] * np.sin(0.5 * sig) ** 2
    w_out = 2.0 * _w_prefactor(h) * np.sum(ws * np.exp(-(arg * arg) / h), axis=-1)
    return np.sum(wu * w_out, axis=-1) / np.pi


def v_stable_array(r, t, h, n_s=32, n_alpha=32, chunk=512):
    """Vectorised stable V_h(r, t) at fixed quadrature resolution.

    Zero where ``r < |t|``.  No error estimate; see :func:`V_stable`.
    """
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    r, t = np.broadcast_arrays(r, t)
    shape = r.shape
    r = r.ravel()
    at = np.abs(t.ravel())
    out = np.zeros_like(r)
    idx = np.flatnonzero(r >= at)
    for lo in range(0, idx.size, chunk):
        j = idx[lo:lo + chunk]
        out[j] = _cone_tilde(r[j], at[j], h, n_s, n_alpha) + _cone_correction(
            r[j], at[j], h, n_s, n_alpha
        )
    return out.reshape(shape)


def V_stable(q, kp):
    """V_h(r, t) from the representation without growing exponentials.

    Parameters
    ----------
    q : RadialPoint or (r, t)
    kp : KernelParams

    Returns
    -------
    KernelValue
        Value at doubled resolution and ``|value(n) - value(2n)|``.
    """
    if not isinstance(q, RadialPoint):
        q = RadialPoint(float(q[0]), float(q[1]))
    if q.r < abs(q.t):
        return KernelValue(0.0, 0.0)
    r = np.array([q.r])
    t = np.array([q.t])
    coarse = float(v_stable_array(r, t, kp.h, kp.n_s, kp.n_alpha)[0])
    fine = float(v_stable_array(r, t, kp.h, 2 * kp.n_s, 2 * kp.n_alpha)[0])
    return KernelValue(fine, abs(fine - coarse))


def V(p, kp):
    """Production V_h(x, y, t): the stable form at r = hypot(x, y)."""
    p = _point(p)
    return V_stable(RadialPoint(math.hypot(p.x, p.y), p.t), kp)


# ---------------------------------------------------------------------------
# rho_h, psi^eps, mollified kernel
# ---------------------------------------------------------------------------

def rho(x, y, kp):
    """Spatial source of V_h: exp(-r**2/h) / (pi sqrt(pi h) r)."""
    r2 = x * x + y * y
    if r2 == 0.0:
        raise SingularPointError("rho_h is singular at the origin")
    h = kp.h
    return math.exp(-r2 / h) / (math.pi * math.sqrt(math.pi * h) * math.sqrt(r2))


def psi(t, eps):
    """Gaussian time mollifier exp(-t**2/eps) / sqrt(pi eps); accepts arrays."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = np.asarray(t, dtype=float)
    out = np.exp(-t * t / eps) / math.sqrt(math.pi * eps)
    return float(out) if out.ndim == 0 else out


def mollify_many(r, t, h, eps, n=None, n_s=32, n_alpha=32):
    """(psi^eps * V_h)(r, t) for an array of times at one radius.

    The support ``|t1| <= r`` is parametrised by ``t1 = r cos(theta)``,
    which turns the square-root edge of V_h at the cone into a smooth
    function of theta.  The same V_h samples serve every requested ``t``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if r <= 0:
        return np.zeros_like(t)
    if n is None:
        n = max(64, math.ceil(12.0 * r / math.sqrt(eps)))
    theta, wt = gauss_legendre(0.0, np.pi, n)
    t1 = r * np.cos(theta)
    vals = v_stable_array(np.full_like(t1, r), t1, h, n_s, n_alpha)
    jac = r * np.sin(theta)
    kern = psi(t[:, None] - t1[None, :], eps)
    return kern @ (wt * jac * vals)


def mollify_V(p, kp):
    """V_h^eps(x, y, t), the time convolution of psi^eps with V_h."""
    p = _point(p)
    if kp.eps == 0:
        return V(p, kp).value
    r = math.hypot(p.x, p.y)
    return float(mollify_many(r, [p.t], kp.h, kp.eps, n_s=kp.n_s, n_alpha=kp.n_alpha)[0])


# ---------------------------------------------------------------------------
# Tabulated V_h for reconstruction
# ---------------------------------------------------------------------------

class KernelTable:
    """Chebyshev interpolant of V_h over an annulus of radii.

    The cone angle ``theta = arccos(|t| / r)`` in [0, pi/2] replaces ``t``;
    V_h is smooth in (r, theta) up to the cone, where it vanishes, so a
    tensor Chebyshev fit converges quickly.  The table is refined until
    it matches :func:`v_stable_array` at random probe points to ``tol``
    relative to the largest tabulated value.
    """

    def __init__(self, h, r_min, r_max, kp=None, tol=1e-9, n_r=16, n_theta=32,
                 max_nodes=512, seed=0):
        if not 0 < r_min <= r_max:
            raise ValueError("need 0 < r_min <= r_max")
        self.h = float(h)
        self.kp = kp or KernelParams(h)
        pad = 1e-9 * max(r_max, 1.0)
        self.r_min = r_min - pad if r_min - pad > 0 else r_min
        self.r_max = r_max + pad
        rng = np.random.default_rng(seed)
        probe_r = rng.uniform(self.r_min, self.r_max, 64)
        probe_th = rng.uniform(0.0, np.pi / 2, 64)
        probe = self._direct(probe_r, probe_th)
        while True:
            self._fit(n_r, n_theta)
            err = np.abs(self.evaluate_rtheta(probe_r, probe_th) - probe)
            self.scale = float(np.max(np.abs(self.values)))
            self.max_probe_error = float(err.max())
            if self.max_probe_error <= tol * self.scale:
                break
            if max(n_r, n_theta) >= max_nodes:
                break
            n_r = min(2 * n_r, max_nodes)
            n_theta = min(2 * n_theta, max_nodes)
        self.n_r, self.n_theta = n_r, n_theta

    def _direct(self, r, theta):
        return v_stable_array(r, r * np.cos(theta), self.h, self.kp.n_s, self.kp.n_alpha)

    @staticmethod
    def _cheb_nodes(n):
        return np.cos(np.pi * (np.arange(n) + 0.5) / n)

    def _xi_r(self, r):
        return (2.0 * r - (self.r_max + self.r_min)) / (self.r_max - self.r_min) if self.r_max > self.r_min else np.zeros_like(r)

    @staticmethod
    def _xi_theta(theta):
        return 4.0 * theta / np.pi - 1.0

    def _fit(self, n_r, n_theta):
        xr = self._cheb_nodes(n_r)
        xt = self._cheb_nodes(n_theta)
        r = 0.5 * (self.r_max + self.r_min) + 0.5 * (self.r_max - self.r_min) * xr
        theta = (xt + 1.0) * np.pi / 4.0
        rg, tg = np.meshgrid(r, theta, indexing="ij")
        self.values = self._direct(rg.ravel(), tg.ravel()).reshape(rg.shape)
        vr = np.polynomial.chebyshev.chebvander(xr, n_r - 1)
        vt = np.polynomial.chebyshev.chebvander(xt, n_theta - 1)
        self.coef = np.linalg.solve(vr, np.linalg.solve(vt, self.values.T).T)

    def row_basis(self, r):
        """Chebyshev basis in r contracted with the coefficients: (len(r), n_theta)."""
        vr = np.polynomial.chebyshev.chebvander(self._xi_r(np.asarray(r, float)), self.coef.shape[0] - 1)
        return vr @ self.coef

    def evaluate_rtheta(self, r, theta):
        rows = self.row_basis(r)
        vt = np.polynomial.chebyshev.chebvander(self._xi_theta(np.asarray(theta, float)), self.coef.shape[1] - 1)
        return np.sum(rows * vt, axis=-1)

    def at_radius(self, r, t):
        """V_h at one radius ``r`` for an array of times ``t``."""
        t = np.asarray(t, dtype=float)
        row = self.row_basis(np.array([float(r)]))[0]
        theta = np.arccos(np.clip(np.abs(t) / r, 0.0, 1.0)) if r > 0 else np.zeros_like(t)
        vt = np.polynomial.chebyshev.chebvander(self._xi_theta(theta), self.coef.shape[1] - 1)
        return np.where(np.abs(t) <= r, vt @ row, 0.0)

    def __call__(self, r, t):
        """V_h at (r, t); zero outside the cone ``r >= |t|``."""
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        r, t = np.broadcast_arrays(r, t)
        inside = r >= np.abs(t)
        theta = np.arccos(np.clip(np.abs(t) / np.where(r > 0, r, 1.0), 0.0, 1.0))
        out = np.where(inside, self.evaluate_rtheta(r, theta), 0.0)
        return out
