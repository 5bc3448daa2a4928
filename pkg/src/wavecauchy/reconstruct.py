"""Reconstruction of interior values from the boundary normal-derivative trace.

The full-boundary functional integrates the radial kernel V_h against the
trace over every boundary sample and the time window ``|t - t*| <= tau``
(tau = distance to the target).  The partial-boundary functional uses the
one-sided kernel v_h^alpha on an arc and grows exponentially as h shrinks.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernel as K
from .errors import (
    CoverageError,
    TargetOutsideDomainError,
    WaveCauchyError,
    WindowCoverageError,
)
from .parallel import parallel_map
from .quadrature import gauss_legendre, trapezoid_weights

RESULT_COLUMNS = ("h", "x_star", "y_star", "t_star", "value", "truth", "abs_error", "est_quad_error")


@dataclass(frozen=True)
class TargetPoint:
    x_star: float
    y_star: float
    t_star: float

    def shifted(self, dx=0.0, dy=0.0, dt=0.0):
        return TargetPoint(self.x_star + dx, self.y_star + dy, self.t_star + dt)


@dataclass(frozen=True)
class QuadDiag:
    boundary_nodes: int
    time_nodes: int
    est_quad_error: float


@dataclass(frozen=True)
class ReconstructionResult:
    value: float
    h: float
    quad_diag: QuadDiag
    target: Optional[TargetPoint] = None
    truth: Optional[float] = None
    abs_error: Optional[float] = None

    def with_truth(self, truth):
        if truth is None:
            return replace(self, truth=None, abs_error=None)
        truth = float(truth)
        return replace(self, truth=truth, abs_error=abs(self.value - truth))


@dataclass(frozen=True)
class FailedTarget:
    """Per-target failure record returned by :func:`reconstruct_grid`."""

    target: TargetPoint
    h: float
    error: Exception


@dataclass(frozen=True)
class PartialBoundaryConfig:
    """Arc ``[s0, s1]`` of the boundary parameter, window ``[t0, t1]``, cone angle.

    The arc may wrap: ``s1 < s0`` or ``s1 > perimeter`` both mean passing
    through the parameter origin.
    """

    arc: tuple
    window: tuple
    alpha: float

    def __post_init__(self):
        if not -math.pi - 1e-12 <= self.alpha <= math.pi + 1e-12:
            raise ValueError("alpha must lie in [-pi, pi]")
        if not self.window[1] > self.window[0]:
            raise ValueError("window must have t1 > t0")


def tau(p, tp):
    """Euclidean distance from boundary point ``p = (x, y)`` to the target."""
    if isinstance(p, TargetPoint):
        p = (p.x_star, p.y_star)
    if isinstance(tp, TargetPoint):
        tp = (tp.x_star, tp.y_star)
    return math.hypot(p[0] - tp[0], p[1] - tp[1])


def _truth_value(truth, tp):
    if truth is None:
        return None
    if hasattr(truth, "u"):
        return float(truth.u(tp.x_star, tp.y_star, tp.t_star))
    if callable(truth):
        return float(truth(tp.x_star, tp.y_star, tp.t_star))
    return float(truth)


def _check_target(trace, tp):
    margin = trace.boundary.spacing
    d = float(trace.domain.boundary_distance(tp.x_star, tp.y_star))
    if not d > margin:
        raise TargetOutsideDomainError(
            f"target ({tp.x_star}, {tp.y_star}) is not inside the domain by at "
            f"least one boundary spacing ({margin:.3g}); distance {d:.3g}"
        )


def _check_window(trace, lo, hi):
    slack = 1e-9 * max(trace.dt, 1e-300)
    if trace.t_min > lo + slack or trace.t_max < hi - slack:
        raise WindowCoverageError(
            f"trace window [{trace.t_min:g}, {trace.t_max:g}] does not cover "
            f"the required [{lo:g}, {hi:g}]"
        )


# ---------------------------------------------------------------------------
# shared double quadrature
# ---------------------------------------------------------------------------

def _row_nodes(t, lo, hi):
    """Trapezoid nodes on [lo, hi]: the endpoints plus every sample strictly inside."""
    i0 = int(np.searchsorted(t, lo, side="right"))
    i1 = int(np.searchsorted(t, hi, side="left"))
    nodes = np.concatenate(([lo], t[i0:i1], [hi]))
    return nodes, i0, i1


def _functional(trace, rows, lo, hi, kern, stride=1):
    """Sum over rows of w_j * trapezoid_t(kern(j, t) * data_j(t)) on [lo_j, hi_j].

    ``stride`` > 1 thins both the boundary samples and the time grid; the
    result is the same functional on the coarser sampling, used for the
    error estimate.
    """
    t = trace.t[::stride]
    vals = trace.values[:, ::stride]
    total = 0.0
    mag = 0.0
    n_time = 0
    used = 0
    for j in rows[::stride] if stride > 1 else rows:
        a, b = lo[j], hi[j]
        if not b > a:
            continue
        nodes, i0, i1 = _row_nodes(t, a, b)
        row = vals[j]
        data = np.concatenate(([np.interp(a, t, row)], row[i0:i1], [np.interp(b, t, row)]))
        w = trapezoid_weights(nodes)
        kv = kern(j, nodes)
        contrib = w * kv * data
        bw = trace.boundary.weights[j] * stride
        total += bw * float(np.sum(contrib))
        mag += bw * float(np.sum(np.abs(contrib)))
        n_time += nodes.size
        used += 1
    return total, mag, used, n_time


# ---------------------------------------------------------------------------
# kernel tables
# ---------------------------------------------------------------------------

_TABLE_CACHE = {}
_TABLE_LOCK = threading.Lock()
_TABLE_CACHE_MAX = 16


def kernel_table(h, r_min, r_max, kp=None, tol=1e-9):
    """Cached :class:`KernelTable` covering radii ``[r_min, r_max]``."""
    kp = kp or K.KernelParams(h)
    key = (float(h), round(float(r_min), 12), round(float(r_max), 12), kp.n_s, kp.n_alpha, tol)
    with _TABLE_LOCK:
        hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    table = K.KernelTable(h, r_min, r_max, kp=kp.with_h(h), tol=tol)
    with _TABLE_LOCK:
        if len(_TABLE_CACHE) >= _TABLE_CACHE_MAX:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = table
    return table


def _radii(trace, tp):
    bs = trace.boundary
    return np.hypot(bs.x - tp.x_star, bs.y - tp.y_star)


# ---------------------------------------------------------------------------
# full-boundary reconstruction
# ---------------------------------------------------------------------------

def reconstruct_point(trace, tp, h, kp=None, truth=None, table=None, kernel="table"):
    """Reconstruct u(x*, y*, t*) from the full-boundary trace at width ``h``.

    Parameters
    ----------
    trace : BoundaryTrace
    tp : TargetPoint
    h : float
        Regularisation width.
    kp : KernelParams, optional
        Quadrature resolution of the kernel; ``kp.h`` is replaced by ``h``.
    truth : float, GroundTruth or callable, optional
        Exact value (or something that evaluates it) for error reporting.
    table : KernelTable, optional
        Precomputed kernel table whose radius range covers the boundary.
    kernel : {"table", "stable"}
        ``"stable"`` evaluates the stable V_h form at every node instead of
        the interpolation table; slow, used for cross-checks.

    Returns
    -------
    ReconstructionResult
    """
    if not h > 0:
        raise ValueError("h must be positive")
    kp = (kp or K.KernelParams(h)).with_h(h)
    _check_target(trace, tp)
    radii = _radii(trace, tp)
    rows = np.flatnonzero(trace.boundary.weights > 0)
    r_used = radii[rows]
    _check_window(trace, tp.t_star - r_used.max(), tp.t_star + r_used.max())
    lo = tp.t_star - radii
    hi = tp.t_star + radii

    kern_err = 0.0
    if kernel == "table":
        if table is None:
            table = kernel_table(h, float(r_used.min()), float(r_used.max()), kp)
        elif table.r_min > r_used.min() or table.r_max < r_used.max() or table.h != h:
            raise ValueError("kernel table does not cover this target")
        kern_err = table.max_probe_error

        def kern(j, nodes):
            return table.at_radius(radii[j], nodes - tp.t_star)
    elif kernel == "stable":
        def kern(j, nodes):
            return K.v_stable_array(radii[j], nodes - tp.t_star, h, kp.n_s, kp.n_alpha)
    else:
        raise ValueError(f"unknown kernel mode {kernel!r}")

    value, mag, used, n_time = _functional(trace, rows, lo, hi, kern)
    coarse, _, _, _ = _functional(trace, rows, lo, hi, kern, stride=2)
    # interpolation error of the table, relative to its largest value
    rel_kern = kern_err / table.scale if kernel == "table" and table.scale > 0 else 0.0
    est = abs(value - coarse) + rel_kern * mag
    diag = QuadDiag(used, n_time, est)
    res = ReconstructionResult(value, h, diag, tp)
    return res.with_truth(_truth_value(truth, tp))


def reconstruct_grid(trace, targets, h, kp=None, truth=None, threads=None):
    """:func:`reconstruct_point` over many targets, in input order.

    One kernel table covering every target is built up front.  A target
    that fails yields a :class:`FailedTarget` in its slot; the rest of the
    batch still runs.
    """
    targets = list(targets)
    if not targets:
        return []
    kp = (kp or K.KernelParams(h)).with_h(h)
    rows = trace.boundary.weights > 0
    r_lo, r_hi = math.inf, 0.0
    for tp in targets:
        r = _radii(trace, tp)[rows]
        r_lo, r_hi = min(r_lo, float(r.min())), max(r_hi, float(r.max()))
    table = None
    if r_lo > 0:
        table = kernel_table(h, r_lo, r_hi, kp)

    def one(tp):
        try:
            return reconstruct_point(trace, tp, h, kp, truth=truth, table=table)
        except (WaveCauchyError, ValueError, ArithmeticError) as exc:
            return FailedTarget(tp, h, exc)

    return parallel_map(one, targets, threads)


def h_sweep(trace, tp, h_list, kp=None, truth=None):
    """Reconstruct at each ``h`` in ``h_list``; returns results in the same order."""
    return [reconstruct_point(trace, tp, h, kp, truth=truth) for h in h_list]


def sweep_summary(results):
    """Monotonicity diagnostics for an error-vs-h table.

    Results are ordered by decreasing h; ``increases`` counts steps where
    the error grows as h shrinks (0 for a clean bias-dominated sweep),
    ``best_h`` is the h with the smallest error.
    """
    ok = [r for r in results if isinstance(r, ReconstructionResult) and r.abs_error is not None]
    if not ok:
        return {"best_h": None, "increases": 0, "monotone": True}
    ok.sort(key=lambda r: -r.h)
    errs = [r.abs_error for r in ok]
    inc = sum(1 for a, b in zip(errs, errs[1:]) if b > a)
    best = min(ok, key=lambda r: r.abs_error)
    return {"best_h": best.h, "increases": inc, "monotone": inc == 0}


def estimate_noise_sigma(trace):
    """Robust per-sample noise level from second differences in time.

    For white noise of std sigma, ``u[i+1] - 2u[i] + u[i-1]`` has std
    ``sqrt(6) sigma``; the smooth part contributes O(dt^2).
    """
    d2 = trace.values[:, 2:] - 2 * trace.values[:, 1:-1] + trace.values[:, :-2]
    return float(np.median(np.abs(d2)) / 0.6744897501960817 / math.sqrt(6.0))


def default_h(trace, tp, noise_sigma=None):
    """Heuristic regularisation width ``max(h_noise, (2 dt)**2)``.

    ``h_noise`` balances a bias of ``h * S / 8`` against the noise standard
    deviation ``sigma * G * sqrt(ds * dt * sum(2 tau) / h)``, where
    ``G = 1 / (2 sqrt(pi))`` bounds ``sqrt(h) |V_h|`` and the curvature scale
    ``S`` is the largest trace value divided by the target's distance to the
    boundary.  Minimising the sum gives ``h = (4 sigma K / S)**(2/3)``.
    """
    if noise_sigma is None:
        noise_sigma = estimate_noise_sigma(trace)
    floor = (2.0 * trace.dt) ** 2
    if noise_sigma <= 0:
        return floor
    radii = _radii(trace, tp)
    ds = trace.boundary.spacing
    k_noise = K.GROWTH_BOUND * math.sqrt(ds * trace.dt * float(np.sum(2 * radii)))
    dist = float(trace.domain.boundary_distance(tp.x_star, tp.y_star))
    s_curv = float(np.max(np.abs(trace.values))) / max(dist, 1e-12)
    if s_curv <= 0:
        return floor
    h_noise = (4.0 * noise_sigma * k_noise / s_curv) ** (2.0 / 3.0)
    return max(h_noise, floor)


# ---------------------------------------------------------------------------
# interior convolution oracle
# ---------------------------------------------------------------------------

def _ray_lengths(domain, x0, y0, theta):
    c, s = np.cos(theta), np.sin(theta)
    if domain.kind == "disk":
        pd = x0 * c + y0 * s
        return -pd + np.sqrt(pd * pd - (x0 * x0 + y0 * y0) + domain.R**2)
    with np.errstate(divide="ignore"):
        lx = np.where(c > 0, (domain.a - x0) / c, np.where(c < 0, -x0 / c, np.inf))
        ly = np.where(s > 0, (domain.b - y0) / s, np.where(s < 0, -y0 / s, np.inf))
    return np.minimum(lx, ly)


def interior_convolution(gt, domain, tp, h, n_r=96, n_theta=256):
    """Integral over the domain of u(., ., t*) * rho_h(. - x*, . - y*).

    Polar coordinates about the target absorb the 1/r factor of rho_h,
    leaving ``exp(-r**2/h) / (pi sqrt(pi h))`` in r.  The radial integral is
    Gauss-Legendre on two panels split at ``min(L, 8 sqrt(h))``; the angular
    integral is the periodic trapezoid rule on a disk and Gauss-Legendre
    per corner sector on a rectangle.
    """
    x0, y0, t0 = tp.x_star, tp.y_star, tp.t_star
    if domain.kind == "disk":
        th = 2 * math.pi * np.arange(n_theta) / n_theta
        wth = np.full(n_theta, 2 * math.pi / n_theta)
    else:
        corners = [(domain.a, 0.0), (domain.a, domain.b), (0.0, domain.b), (0.0, 0.0)]
        angs = sorted(math.atan2(cy - y0, cx - x0) % (2 * math.pi) for cx, cy in corners)
        edges = angs + [angs[0] + 2 * math.pi]
        per = max(8, n_theta // 4)
        parts = [gauss_legendre(e0, e1, per) for e0, e1 in zip(edges[:-1], edges[1:])]
        th = np.concatenate([p[0] for p in parts])
        wth = np.concatenate([p[1] for p in parts])
    L = _ray_lengths(domain, x0, y0, th)
    split = np.minimum(L, 8.0 * math.sqrt(h))
    r1, w1 = gauss_legendre(0.0, split, n_r)
    r2, w2 = gauss_legendre(split, L, n_r)
    r = np.concatenate([r1, r2], axis=-1)
    wr = np.concatenate([w1, w2], axis=-1)
    X = x0 + r * np.cos(th)[:, None]
    Y = y0 + r * np.sin(th)[:, None]
    radial = np.exp(-r * r / h) / (math.pi * math.sqrt(math.pi * h))
    vals = gt.u(X, Y, t0) * radial
    return float(np.sum(wth * np.sum(wr * vals, axis=-1)))


# ---------------------------------------------------------------------------
# partial-boundary reconstruction
# ---------------------------------------------------------------------------

def cone_alpha(domain, tp, toward="far"):
    """Cone angle for the partial-boundary kernel at the target.

    ``toward="near"`` points the cone axis at the nearest boundary point;
    ``"far"`` points it the opposite way, across the domain.  The kernel
    grows like ``exp(d**2 / h)`` with ``d`` the axial distance to the
    boundary, so the far orientation is the one that exposes the
    instability of the partial formula at moderate h.
    """
    if toward not in ("near", "far"):
        raise ValueError("toward must be 'near' or 'far'")
    x0, y0 = tp.x_star, tp.y_star
    if domain.kind == "disk":
        d = (x0, y0) if (x0, y0) != (0.0, 0.0) else (0.0, 1.0)
    else:
        gaps = {(-1.0, 0.0): x0, (1.0, 0.0): domain.a - x0, (0.0, -1.0): y0, (0.0, 1.0): domain.b - y0}
        d = min(gaps, key=gaps.get)
    if toward == "far":
        d = (-d[0], -d[1])
    # rotated axis y' is the direction (-sin a, cos a)
    return math.atan2(-d[0], d[1])


def _in_arc(s, arc, perimeter):
    s0, s1 = arc
    span = s1 - s0 if s1 >= s0 else s1 + perimeter - s0
    if span >= perimeter:
        return np.ones(np.shape(s), bool)
    return ((s - s0) % perimeter) <= span + 1e-12 * perimeter


def _rotated(trace, tp, alpha):
    bs = trace.boundary
    dx, dy = bs.x - tp.x_star, bs.y - tp.y_star
    ca, sa = math.cos(alpha), math.sin(alpha)
    return dx * ca + dy * sa, -dx * sa + dy * ca


def cone_config(trace, tp, alpha=None, margin=None):
    """Smallest arc (plus ``margin`` samples each side) covering the cone footprint.

    ``alpha`` defaults to :func:`cone_alpha` with the far orientation.  The footprint is the set of boundary samples with ``y' >= |x'|`` in the
    frame rotated by ``alpha`` about the target; the window is
    ``t* +- max y'`` over the arc.
    """
    if alpha is None:
        alpha = cone_alpha(trace.domain, tp)
    xr, yr = _rotated(trace, tp, alpha)
    inside = np.flatnonzero(yr >= np.abs(xr))
    if inside.size == 0:
        raise CoverageError("cone footprint does not meet the sampled boundary")
    n = trace.n_b
    margin = 2 if margin is None else int(margin)
    ds = trace.boundary.spacing
    # footprint is one contiguous run on a convex boundary; find it cyclically
    mask = np.zeros(n, bool)
    mask[inside] = True
    if mask.all():
        start, stop = 0, n - 1
    else:
        first_out = int(np.flatnonzero(~mask)[0])
        rolled = np.roll(mask, -first_out)
        idx = np.flatnonzero(rolled)
        start = (idx[0] + first_out) % n
        stop = (idx[-1] + first_out) % n
    s = trace.boundary.s
    s0 = s[start] - margin * ds
    s1 = s[stop] + margin * ds
    P = trace.domain.perimeter
    sel = _in_arc(s, (s0, s1), P)
    ymax = float(np.max(yr[sel]))
    arc = (0.0, P) if s1 - s0 >= P else (s0 % P, s0 % P + (s1 - s0))
    return PartialBoundaryConfig(arc, (tp.t_star - ymax, tp.t_star + ymax), alpha)


def reconstruct_partial(trace, tp, h, cfg, kp=None, truth=None):
    """Reconstruct u(x*, y*, t*) from the arc ``cfg.arc`` and window ``cfg.window``.

    Integrates ``v_h^alpha(x - x*, y - y*, t - t*)`` against the trace; the
    term carrying the normal derivative of the kernel is absent because the
    Dirichlet data vanish.  Raises UnstableRegimeError when the kernel's
    growing exponent passes ``kp.exp_cap``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    kp = (kp or K.KernelParams(h)).with_h(h)
    _check_target(trace, tp)
    P = trace.domain.perimeter
    bs = trace.boundary
    sel = _in_arc(bs.s, cfg.arc, P)
    xr, yr = _rotated(trace, tp, cfg.alpha)
    foot = yr >= np.abs(xr)
    missing = np.flatnonzero(foot & ~sel)
    if missing.size:
        j = int(missing[0])
        raise CoverageError(
            f"arc {cfg.arc} misses the cone footprint at boundary sample {j} "
            f"({bs.x[j]:.4g}, {bs.y[j]:.4g})"
        )
    rows = np.flatnonzero(sel & (bs.weights > 0) & (yr >= 0))
    if rows.size == 0:
        raise CoverageError("no boundary samples of the arc lie in the kernel support")
    t0, t1 = cfg.window
    ymax = float(yr[rows].max())
    if t0 > tp.t_star - ymax + 1e-12 or t1 < tp.t_star + ymax - 1e-12:
        raise CoverageError(
            f"window [{t0:g}, {t1:g}] is shorter than the kernel support "
            f"t* +- {ymax:g}"
        )
    _check_window(trace, t0, t1)
    lo = np.maximum(tp.t_star - np.maximum(yr, 0.0), t0)
    hi = np.minimum(tp.t_star + np.maximum(yr, 0.0), t1)
    dx = bs.x - tp.x_star
    dy = bs.y - tp.y_star

    # overflow guard over the whole support before any quadrature; the
    # exponent peaks at t = t*
    emax = float(np.max((yr[rows] ** 2 - xr[rows] ** 2) / h))
    if emax > kp.exp_cap:
        raise K.UnstableRegimeError(emax, kp.exp_cap)

    def kern(j, nodes):
        vals, _ = K.v_alpha_array(dx[j], dy[j], nodes - tp.t_star, cfg.alpha, h,
                                  kp.n_s, kp.exp_cap)
        return vals

    value, mag, used, n_time = _functional(trace, rows, lo, hi, kern)
    coarse, _, _, _ = _functional(trace, rows, lo, hi, kern, stride=2)
    est = abs(value - coarse)
    res = ReconstructionResult(value, h, QuadDiag(used, n_time, est), tp)
    return res.with_truth(_truth_value(truth, tp))


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(v):
    return "" if v is None else f"{v:.15g}"


def write_results_csv(path, results):
    """Write results (and failed targets, with empty value columns) as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            if isinstance(r, FailedTarget):
                t = r.target
                w.writerow([_fmt(r.h), _fmt(t.x_star), _fmt(t.y_star), _fmt(t.t_star), "", "", "", ""])
                continue
            t = r.target
            w.writerow([
                _fmt(r.h), _fmt(t.x_star), _fmt(t.y_star), _fmt(t.t_star),
                _fmt(r.value), _fmt(r.truth), _fmt(r.abs_error), _fmt(r.quad_diag.est_quad_error),
            ])
