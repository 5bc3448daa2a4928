"""Leapfrog finite differences for the wave equation on a rectangle.

The solver is deliberately independent of the kernel machinery: it only
needs the initial slice and velocity, and produces a boundary trace in the
same format as the closed-form generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CFLError, DivergenceError
from .synthdata import BoundaryTrace

CFL_SAFETY = 0.9


@dataclass(frozen=True)
class FDGrid:
    """Uniform grid: ``nx`` x ``ny`` intervals, ``t_steps`` steps each way in time."""

    nx: int
    ny: int
    dx: float
    dy: float
    dt: float
    t_steps: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2 or self.t_steps < 1:
            raise ValueError("need nx, ny >= 2 and t_steps >= 1")
        if not (self.dx > 0 and self.dy > 0 and self.dt > 0):
            raise ValueError("grid steps must be positive")
        limit = CFL_SAFETY * min(self.dx, self.dy) / math.sqrt(2.0)
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt = {self.dt:g} exceeds the CFL limit {limit:g}")

    @classmethod
    def for_domain(cls, domain, n, t_max, cfl=0.5):
        """Grid with spacing ``a / n`` in both directions reaching ``t_max``.

        ``b / (a / n)`` must be an integer so that the spacing is equal in x
        and y; the time step is ``cfl * dx`` shrunk to land on ``t_max``.
        """
        dx = domain.a / n
        ny_f = domain.b / dx
        ny = int(round(ny_f))
        if abs(ny - ny_f) > 1e-9 * ny_f:
            raise ValueError("rectangle sides must be commensurate with the spacing")
        steps = max(1, math.ceil(t_max / (cfl * dx)))
        return cls(int(n), ny, dx, domain.b / ny, t_max / steps, steps)

    @property
    def nodes_x(self):
        return self.dx * np.arange(self.nx + 1)

    @property
    def nodes_y(self):
        return self.dy * np.arange(self.ny + 1)


@dataclass
class FDResult:
    """Snapshots of the field, energy history and the extracted trace."""

    times: np.ndarray
    snapshots: np.ndarray
    energy_times: np.ndarray
    energy: np.ndarray
    trace: BoundaryTrace

    def __iter__(self):
        # allows ``snapshots, trace = solve_rectangle(...)``
        yield self.snapshots
        yield self.trace


def _field(f, grid):
    X, Y = np.meshgrid(grid.nodes_x, grid.nodes_y, indexing="ij")
    if callable(f):
        return np.asarray(f(X, Y), dtype=float) * np.ones_like(X)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(X.shape, float(arr))
    if arr.shape != X.shape:
        raise ValueError(f"field shape {arr.shape} does not match grid {X.shape}")
    return arr.copy()


def laplacian(u, grid):
    """Five-point Laplacian, zero on the boundary nodes."""
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = (
        (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / grid.dx**2
        + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / grid.dy**2
    )
    return out


def leapfrog_step(u_prev, u_cur, grid):
    """One step ``u_next = 2 u - u_prev + dt^2 L u`` with zero Dirichlet data."""
    u_next = 2.0 * u_cur - u_prev + grid.dt**2 * laplacian(u_cur, grid)
    u_next[0, :] = u_next[-1, :] = 0.0
    u_next[:, 0] = u_next[:, -1] = 0.0
    return u_next


def energy(u_prev, u_cur, u_next, grid):
    """Discrete energy of the step from ``u_cur`` to ``u_next``.

    ``sum(((u_next - u_cur) / dt)**2) + sum(D u_next * D u_cur)`` times the
    cell area, with ``D`` the edge differences in x and y.  The leapfrog
    scheme conserves this quantity exactly up to round-off; ``u_prev`` is
    accepted so that the signature matches the step callback.
    """
    ut = (u_next - u_cur) / grid.dt
    gx = np.sum(np.diff(u_next, axis=0) * np.diff(u_cur, axis=0)) / grid.dx**2
    gy = np.sum(np.diff(u_next, axis=1) * np.diff(u_cur, axis=1)) / grid.dy**2
    return float((np.sum(ut**2) + gx + gy) * grid.dx * grid.dy)


def boundary_normal_derivative(u, grid):
    """Outward normal derivative at the boundary nodes, one-sided second order.

    Node order follows the counterclockwise walk of ``Domain.boundary``
    starting at the corner (0, 0), so the result lines up with
    ``Domain.rectangle(a, b).boundary(2 * (nx + ny))``.
    """
    dx, dy = grid.dx, grid.dy
    bottom = (3 * u[:, 0] - 4 * u[:, 1] + u[:, 2]) / (2 * dy)
    right = (3 * u[-1, :] - 4 * u[-2, :] + u[-3, :]) / (2 * dx)
    top = (3 * u[:, -1] - 4 * u[:, -2] + u[:, -3]) / (2 * dy)
    left = (3 * u[0, :] - 4 * u[1, :] + u[2, :]) / (2 * dx)
    out = np.concatenate([bottom[:-1], right[:-1], top[::-1][:-1], left[::-1][:-1]])
    # corner samples carry the bisecting normal; both one-sided values vanish there
    nx, ny = grid.nx, grid.ny
    out[[0, nx, nx + ny, 2 * nx + ny]] = 0.0
    return out


def _check(u, step):
    if not np.isfinite(u).all():
        raise DivergenceError(step)


def run(u_prev, u_cur, grid, n_steps, on_step=None, step_sign=1):
    """Advance ``n_steps`` leapfrog steps; ``on_step(k, u_prev, u_cur, u_next)``."""
    for k in range(1, n_steps + 1):
        # non-finite values are reported by _check, not by numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            u_next = leapfrog_step(u_prev, u_cur, grid)
        _check(u_next, step_sign * k)
        if on_step is not None:
            on_step(k, u_prev, u_cur, u_next)
        u_prev, u_cur = u_cur, u_next
    return u_prev, u_cur


def solve_rectangle(domain, u0, u1_dt, grid, snapshot_every=None):
    """Solve on ``domain`` for t in [-T, T], ``T = t_steps * dt``.

    Parameters
    ----------
    domain : Domain
        Rectangle; its sides must equal ``nx * dx`` and ``ny * dy``.
    u0, u1_dt : array, scalar or callable
        Initial displacement and velocity on the node grid, a constant, or
        functions of the meshgrid arrays ``(X, Y)``.  Both must vanish on the boundary.
    grid : FDGrid
    snapshot_every : int, optional
        Keep the field every that many steps (t = 0 is always kept).

    Returns
    -------
    FDResult
        Unpacks as ``(snapshots, trace)``; the trace has provenance ``fd``.

    Notes
    -----
    The first step uses ``u(dt) = u0 + dt u1 + dt^2/2 L u0``; negative times
    come from a second run started with ``-u1``, which is the same scheme
    reversed in time.
    """
    if domain.kind != "rect":
        raise ValueError("solve_rectangle needs a rectangular domain")
    if abs(grid.nx * grid.dx - domain.a) > 1e-9 * domain.a or abs(grid.ny * grid.dy - domain.b) > 1e-9 * domain.b:
        raise ValueError("grid does not tile the rectangle")
    if abs(grid.dx - grid.dy) > 1e-12 * grid.dx:
        raise ValueError("trace extraction needs dx == dy (uniform arc-length samples)")
    u0 = _field(u0, grid)
    u1 = _field(u1_dt, grid)
    edge = np.concatenate([u0[0], u0[-1], u0[:, 0], u0[:, -1], u1[0], u1[-1], u1[:, 0], u1[:, -1]])
    if np.max(np.abs(edge)) > 1e-10 * max(1.0, np.max(np.abs(u0)), np.max(np.abs(u1))):
        raise ValueError("initial data must vanish on the boundary")

    n = grid.t_steps
    dt = grid.dt
    lap0 = laplacian(u0, grid)
    n_b = 2 * (grid.nx + grid.ny)
    values = np.empty((n_b, 2 * n + 1))
    values[:, n] = boundary_normal_derivative(u0, grid)
    keep_t, keep_u = [0.0], [u0.copy()]
    e_t, e_v = [], []

    for sign in (1, -1):
        first = u0 + sign * dt * u1 + 0.5 * dt**2 * lap0
        first[0, :] = first[-1, :] = first[:, 0] = first[:, -1] = 0.0
        _check(first, sign)
        values[:, n + sign] = boundary_normal_derivative(first, grid)
        if snapshot_every and snapshot_every == 1:
            keep_t.append(sign * dt)
            keep_u.append(first.copy())

        def record(k, u_prev, u_cur, u_next, sign=sign):
            step = k + 1
            values[:, n + sign * step] = boundary_normal_derivative(u_next, grid)
            e_t.append(sign * k * dt)
            e_v.append(energy(u_prev, u_cur, u_next, grid))
            if snapshot_every and step % snapshot_every == 0:
                keep_t.append(sign * step * dt)
                keep_u.append(u_next.copy())

        run(u0, first, grid, n - 1, record, step_sign=sign)

    order = np.argsort(keep_t)
    times = np.asarray(keep_t)[order]
    snaps = np.asarray(keep_u)[order]
    e_order = np.argsort(e_t)
    t_grid = dt * np.arange(-n, n + 1)
    trace = BoundaryTrace(domain, domain.boundary(n_b), t_grid, values, "fd")
    return FDResult(times, snaps, np.asarray(e_t)[e_order], np.asarray(e_v)[e_order], trace)
