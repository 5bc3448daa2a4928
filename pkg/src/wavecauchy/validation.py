"""Invariant checks on the kernel family, run by ``wavecauchy validate-kernel``.

Each check returns a :class:`CheckResult` whose ``margin`` is
``threshold - value`` (nonnegative when the check passes), except for
checks that assert a lower bound, where the sign is flipped accordingly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel as K
from .quadrature import gauss_legendre


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool

    @property
    def margin(self):
        return self.threshold - self.value


def _rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(b), floor)


def lattice(n, lo=-1.5, hi=1.5):
    g = np.linspace(lo, hi, n)
    X, Y, T = np.meshgrid(g, g, g, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), T.ravel()])


def representation_agreement(h_list=(0.5, 0.1, 0.05), n=20, tol=1e-8, kp=None):
    """Largest relative gap between the unified form and the inside/outside forms."""
    worst = 0.0
    for h in h_list:
        p = (kp or K.KernelParams(h)).with_h(h)
        for x, y, t in lattice(n):
            ref = K.w_inside((x, y, t), p) if abs(y) >= abs(t) else K.w_outside((x, y, t), p)
            got = K.w_unified((x, y, t), p)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    return CheckResult("representation_agreement", worst, tol, worst <= tol)


def random_cone_points(n, seed, r_max=1.5):
    """Random (x, y, t) with ``|t| < r <= r_max``, uniform in angle and in t / r."""
    rng = np.random.Generator(np.random.Philox(seed))
    r = rng.uniform(0.05, r_max, n)
    ang = rng.uniform(-math.pi, math.pi, n)
    t = r * rng.uniform(-0.98, 0.98, n)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), t])


def stable_vs_direct(h_list=(0.5, 0.2, 0.1, 0.05), n_points=50, seed=0, tol=1e-6):
    worst = 0.0
    pts = random_cone_points(n_points, seed)
    for h in h_list:
        kp = K.KernelParams(h)
        for x, y, t in pts:
            d = K.V_direct((x, y, t), kp)
            s = K.V_stable((math.hypot(x, y), t), kp).value
            worst = max(worst, _rel(s, d))
    return CheckResult("stable_vs_direct", worst, tol, worst <= tol)


def support(n_points=1000, seed=1, h=0.1):
    """Count of nonzero V values at random points with r < |t|."""
    rng = np.random.Generator(np.random.Philox(seed))
    t = rng.uniform(-2.0, 2.0, n_points)
    r = np.abs(t) * rng.uniform(0.0, 1.0, n_points)
    ang = rng.uniform(-math.pi, math.pi, n_points)
    kp = K.KernelParams(h)
    bad = sum(1 for ri, ai, ti in zip(r, ang, t)
              if K.V((ri * math.cos(ai), ri * math.sin(ai), ti), kp).value != 0.0)
    return CheckResult("support_zero_outside_cone", float(bad), 0.0, bad == 0)


def symmetry(n_points=200, seed=2, h=0.1, tol=1e-8):
    """Rotations of (x, y) and t -> -t leave V unchanged."""
    rng = np.random.Generator(np.random.Philox(seed))
    kp = K.KernelParams(h)
    worst = 0.0
    for x, y, t in random_cone_points(n_points, seed + 1000):
        beta = rng.uniform(-math.pi, math.pi)
        c, s = math.cos(beta), math.sin(beta)
        base = K.V((x, y, t), kp).value
        rot = K.V((x * c - y * s, x * s + y * c, t), kp).value
        refl = K.V((x, -y, -t), kp).value
        worst = max(worst, _rel(rot, base), _rel(refl, base))
    return CheckResult("radial_symmetry_t_even", worst, tol, worst <= tol)


def growth_bound(h_list=(0.1, 0.01, 0.001, 1e-4), n=21):
    """max sqrt(h) |V_h| over r in [0, 2], t in [-1.5, 1.5], against 1/(2 sqrt(pi))."""
    r = np.linspace(0.0, 2.0, n)
    t = np.linspace(-1.5, 1.5, n)
    R, T = np.meshgrid(r, t, indexing="ij")
    worst = 0.0
    for h in h_list:
        vals = K.v_stable_array(R.ravel(), T.ravel(), h, 64, 64)
        worst = max(worst, math.sqrt(h) * float(np.max(np.abs(vals))))
    return CheckResult("growth_bound_sqrt_h_V", worst, K.GROWTH_BOUND, worst <= K.GROWTH_BOUND)


def w_growth_slope(h_list=(0.5, 0.25, 0.125), tol=0.2):
    """Least-squares slope of log w_inside(0, 1, 0) against 1/h; expected near 1."""
    inv = np.array([1.0 / h for h in h_list])
    logs = np.array([math.log(K.w_inside((0.0, 1.0, 0.0), K.KernelParams(h))) for h in h_list])
    slope = float(np.polyfit(inv, logs, 1)[0])
    dev = abs(slope - 1.0)
    return CheckResult("w_inside_growth_slope_dev", dev, tol, dev <= tol)


def rho_radial_integral(f, h, n=96):
    """Integral of rho_h * f over the plane for radial ``f``, in polar form."""
    L = 12.0 * math.sqrt(h)
    r, w = gauss_legendre(0.0, L, n)
    kp = K.KernelParams(h)
    dens = np.array([K.rho(ri, 0.0, kp) for ri in r])
    return float(np.sum(w * 2.0 * math.pi * r * dens * f(r)))


def rho_mass(h_list=(1.0, 0.1, 0.01), tol=1e-8):
    worst = max(abs(rho_radial_integral(np.ones_like, h) - 1.0) for h in h_list)
    return CheckResult("rho_mass", worst, tol, worst <= tol)


def rho_second_moment(h_list=(1.0, 0.1, 0.01), tol=1e-6):
    worst = max(abs(rho_radial_integral(lambda r: r * r, h) - h / 2) for h in h_list)
    return CheckResult("rho_second_moment", worst, tol, worst <= tol)


def weak_delta_errors(h_list=(0.1, 0.01, 0.001), width=1.0):
    """|integral of rho_h * phi - phi(0)| for the Gaussian ``phi = exp(-r**2 / width)``."""
    return [abs(rho_radial_integral(lambda r: np.exp(-r * r / width), h) - 1.0) for h in h_list]


def weak_delta(h_list=(0.1, 0.01, 0.001)):
    """Number of steps where the weak-delta error fails to decrease with h."""
    errs = weak_delta_errors(h_list)
    bad = sum(1 for a, b in zip(errs, errs[1:]) if not b < a)
    return CheckResult("rho_weak_delta_monotone", float(bad), 0.0, bad == 0)


def psi_convolution(t, eps_a, eps_b, n=128):
    """(psi^eps_a * psi^eps_b)(t) by Gauss-Legendre around the product's peak."""
    centre = t * eps_b / (eps_a + eps_b)
    half = 14.0 * math.sqrt(max(eps_a, eps_b))
    s, w = gauss_legendre(centre - half, centre + half, n)
    return float(np.sum(w * K.psi(t - s, eps_a) * K.psi(s, eps_b)))


def psi_semigroup(eps=0.01, n_points=10, tol=1e-10):
    ts = np.linspace(-3 * math.sqrt(eps), 3 * math.sqrt(eps), n_points)
    worst = max(abs(psi_convolution(t, eps / 2, eps / 2) - K.psi(t, eps)) for t in ts)
    return CheckResult("psi_semigroup", worst, tol, worst <= tol)


_C4 = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
_D1 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])


def mollified_residual(r, t, h, eps, step=None):
    """Relative residual of ``d_tt V^eps - Laplace V^eps - psi^eps(t) rho_h``.

    Fourth-order central differences with step ``0.1 sqrt(eps)``; the
    Laplacian of the radial function is ``V_rr + V_r / r``.  Normalised by
    the sum of the magnitudes of the three terms.
    """
    step = 0.1 * math.sqrt(eps) if step is None else step
    offs = np.arange(-2, 3) * step
    vt = K.mollify_many(r, t + offs, h, eps)
    vr = np.array([K.mollify_many(r + o, [t], h, eps)[0] for o in offs])
    v_tt = float(_C4 @ vt) / step**2
    lap = float(_C4 @ vr) / step**2 + float(_D1 @ vr) / step / r
    src = K.psi(t, eps) * K.rho(r, 0.0, K.KernelParams(h))
    scale = abs(v_tt) + abs(lap) + abs(src)
    return abs(v_tt - lap - src) / scale if scale > 0 else 0.0


def mollifier_residual(h=0.1, eps=0.01, n_points=20, seed=3, tol=1e-3):
    rng = np.random.Generator(np.random.Philox(seed))
    se = math.sqrt(eps)
    worst = 0.0
    for _ in range(n_points):
        t = rng.choice([-1.0, 1.0]) * rng.uniform(3 * se, 1.2)
        r = rng.uniform(0.2, 1.5)
        worst = max(worst, mollified_residual(r, t, h, eps))
    return CheckResult("mollifier_residual", worst, tol, worst <= tol)


def run_suite(cfg):
    """Run every registered check with parameters from a dict-like ``cfg``."""
    g = cfg.get
    return [
        representation_agreement(g("rep_h_list", (0.5, 0.1)), g("lattice_n", 8),
                                 kp=K.KernelParams(1.0, g("n_s", 32), g("n_alpha", 32))),
        stable_vs_direct(g("direct_h_list", (0.5, 0.2, 0.1)), g("random_points", 20), g("seed", 0)),
        support(g("support_points", 200), g("seed", 0) + 1),
        symmetry(g("symmetry_points", 50), g("seed", 0) + 2),
        growth_bound(g("growth_h_list", (0.1, 0.01, 0.001, 1e-4)), g("growth_n", 11)),
        w_growth_slope(),
        rho_mass(),
        rho_second_moment(),
        weak_delta(),
        psi_semigroup(g("eps", 0.01)),
        mollifier_residual(g("mollifier_h", 0.1), g("eps", 0.01), g("mollifier_points", 5), g("seed", 0) + 3),
    ]
