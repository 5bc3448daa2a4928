"""Exact Dirichlet eigenmode solutions, their boundary traces and noise.

Domains are a disk of radius ``R`` centred at the origin and the rectangle
``[0, a] x [0, b]``.  Boundary samples are equally spaced in arc length and
carry the outward unit normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import TraceFormatError
from .parallel import parallel_map

TRACE_MAGIC = "# wavecauchy-trace v1"
TRACE_COLUMNS = ("s_index", "t_index", "x", "y", "nu_x", "nu_y", "t", "dnu_u")
RNG_NAME = "philox4x64"
MAX_ORDER = 20
MAX_ZERO_INDEX = 20


# ---------------------------------------------------------------------------
# Bessel functions of the first kind
# ---------------------------------------------------------------------------

_SERIES_LIMIT = 5.0


def _bessel_series(m, x):
    # ascending series; terms stay below ~10 for x <= 5
    half = 0.5 * x
    term = half**m / math.factorial(m)
    total = term.copy()
    q = -half * half
    for k in range(1, 60):
        term = term * q / (k * (k + m))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _bessel_miller(m, x):
    # backward recurrence from a start order well above max(m, x),
    # normalised with 1 = J_0 + 2 (J_2 + J_4 + ...)
    top = max(m, float(np.max(x)))
    start = int(top + 30 + math.sqrt(60.0 * top))
    start += start % 2
    j_next = np.zeros_like(x)
    j_cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    keep = np.zeros_like(x)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        # j_cur now holds the unnormalised J_{k-1}
        if k - 1 == m:
            keep = j_cur.copy()
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j_cur
        big = np.abs(j_cur) > 1e250
        if np.any(big):
            f = np.where(big, 1e-250, 1.0)
            j_cur, j_next, norm, keep = j_cur * f, j_next * f, norm * f, keep * f
    norm += j_cur
    return keep / norm


def bessel_j(m, x):
    """Bessel function J_m(x) for integer ``0 <= m <= 20`` and ``x >= 0``.

    Ascending series for ``x <= 5``, Miller's backward recurrence with the
    Neumann-sum normalisation beyond.  Accepts scalar or array ``x``.
    """
    m = int(m)
    if not 0 <= m <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}], got {m}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise ValueError("bessel_j needs finite x >= 0")
    flat = xa.ravel()
    out = np.empty_like(flat)
    small = flat <= _SERIES_LIMIT
    if np.any(small):
        out[small] = _bessel_series(m, flat[small])
    if np.any(~small):
        out[~small] = _bessel_miller(m, flat[~small])
    out = out.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


def bessel_jp(m, x):
    """Derivative J_m'(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2, with J_0' = -J_1."""
    if m == 0:
        return -_as_array(bessel_j(1, x))
    return 0.5 * (_as_array(bessel_j(m - 1, x)) - _as_array(bessel_j(m + 1, x)))


def _j_over_x(m, x):
    # J_m(x)/x, finite at 0 for m >= 1
    return (_as_array(bessel_j(m - 1, x)) + _as_array(bessel_j(m + 1, x))) / (2.0 * m)


def _as_array(v):
    return np.asarray(v, dtype=float)


def mcmahon_zero(m, k):
    """Large-k asymptotic guess for the k-th zero of J_m."""
    beta = (k + 0.5 * m - 0.25) * math.pi
    mu = 4.0 * m * m
    b8 = 8.0 * beta
    return beta - (mu - 1) / b8 - 4 * (mu - 1) * (7 * mu - 31) / (3 * b8**3)


@lru_cache(maxsize=None)
def bessel_zero(m, k):
    """k-th positive zero of J_m for ``m, k <= 20``.

    Zeros are bracketed by sign changes on a 0.5-step grid starting at
    ``x = m`` (every zero of J_m exceeds m and consecutive zeros are more
    than 0.5 apart), then refined with Brent's method.
    """
    m, k = int(m), int(k)
    if not 0 <= m <= MAX_ORDER or not 1 <= k <= MAX_ZERO_INDEX:
        raise ValueError(f"need 0 <= m <= {MAX_ORDER}, 1 <= k <= {MAX_ZERO_INDEX}")
    # the asymptotic guess is poor at low k but bounds the scan generously
    limit = 2.0 * max(mcmahon_zero(m, k), m + 2.0) + 10.0
    grid = np.arange(max(float(m), 1e-3), limit, 0.5)
    f = bessel_j(m, grid)
    hits = np.flatnonzero((f[:-1] == 0.0) | (f[:-1] * f[1:] < 0))
    if hits.size < k:
        raise RuntimeError(f"zero search for J_{m} failed")
    i = int(hits[k - 1])
    if f[i] == 0.0:
        return float(grid[i])
    return brentq(lambda z: bessel_j(m, z), grid[i], grid[i + 1], xtol=1e-15,
                  rtol=4 * np.finfo(float).eps, maxiter=200)


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundarySamples:
    """Arc-length boundary samples with outward normals and trapezoid weights."""

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    nu_x: np.ndarray
    nu_y: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.s.size

    @property
    def spacing(self):
        return float(self.s[1] - self.s[0]) if self.s.size > 1 else float("inf")


@dataclass(frozen=True)
class Domain:
    """Disk of radius ``R`` about the origin, or the rectangle [0, a] x [0, b]."""

    kind: str
    R: float = 1.0
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("disk", "rect"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "disk" and not self.R > 0:
            raise ValueError("disk radius must be positive")
        if self.kind == "rect" and not (self.a > 0 and self.b > 0):
            raise ValueError("rectangle sides must be positive")

    @classmethod
    def disk(cls, R=1.0):
        return cls("disk", R=float(R))

    @classmethod
    def rectangle(cls, a, b):
        return cls("rect", a=float(a), b=float(b))

    @property
    def perimeter(self):
        if self.kind == "disk":
            return 2.0 * math.pi * self.R
        return 2.0 * (self.a + self.b)

    def boundary_distance(self, x, y):
        """Signed distance to the boundary, positive inside."""
        if self.kind == "disk":
            return self.R - np.hypot(x, y)
        return np.minimum(np.minimum(x, self.a - x), np.minimum(y, self.b - y))

    def contains(self, x, y, margin=0.0):
        return self.boundary_distance(x, y) > margin

    def max_boundary_distance(self, x, y):
        """Largest distance from (x, y) to a boundary point."""
        if self.kind == "disk":
            return self.R + math.hypot(x, y)
        return max(math.hypot(cx - x, cy - y) for cx in (0.0, self.a) for cy in (0.0, self.b))

    def boundary(self, n):
        """``n`` samples equally spaced in arc length, counterclockwise.

        The rectangle walk starts at the corner (0, 0).  Samples landing on a
        corner get the bisecting normal and zero weight.
        """
        n = int(n)
        if n < 4:
            raise ValueError("need at least 4 boundary samples")
        P = self.perimeter
        ds = P / n
        j = np.arange(n)
        if self.kind == "disk":
            phi = 2.0 * math.pi * j / n
            c, s_ = np.cos(phi), np.sin(phi)
            return BoundarySamples(self.R * phi, self.R * c, self.R * s_, c, s_, np.full(n, ds))
        s = j * ds
        a, b = self.a, self.b
        edges = np.array([0.0, a, a + b, 2 * a + b, P])
        x = np.empty(n)
        y = np.empty(n)
        nx = np.zeros(n)
        ny = np.zeros(n)
        side = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, 3)
        loc = s - edges[side]
        x = np.select([side == 0, side == 1, side == 2], [loc, np.full(n, a), a - loc], np.zeros(n))
        y = np.select([side == 0, side == 1, side == 2], [np.zeros(n), loc, np.full(n, b)], b - loc)
        normals = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        nx, ny = normals[side, 0].copy(), normals[side, 1].copy()
        w = np.full(n, ds)
        tol = 1e-12 * P
        for c_idx in range(4):
            hit = np.abs(s - edges[c_idx]) <= tol
            if np.any(hit):
                prev = normals[(c_idx - 1) % 4]
                v = (prev + normals[c_idx]) / math.sqrt(2.0)
                nx[hit], ny[hit] = v
                w[hit] = 0.0
                corner = [(0.0, 0.0), (a, 0.0), (a, b), (0.0, b)][c_idx]
                x[hit], y[hit] = corner
        return BoundarySamples(s, x, y, nx, ny, w)


# ---------------------------------------------------------------------------
# Modes and ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiskMode:
    """A * J_m(lam r / R) * {cos|sin}(m phi) * cos(lam t / R + t_phase)."""

    m: int = 0
    k: int = 1
    azimuth: str = "cos"
    amplitude: float = 1.0
    t_phase: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and isinstance(self.k, (int, np.integer))):
            raise ValueError("mode indices must be integers")
        if not 0 <= self.m <= MAX_ORDER or not 1 <= self.k <= MAX_ZERO_INDEX:
            raise ValueError(f"disk mode needs 0 <= m <= {MAX_ORDER}, 1 <= k <= {MAX_ZERO_INDEX}")
        if self.azimuth not in ("cos", "sin"):
            raise ValueError("azimuth must be 'cos' or 'sin'")
        if not math.isfinite(self.amplitude) or not math.isfinite(self.t_phase):
            raise ValueError("amplitude and phase must be finite")


@dataclass(frozen=True)
class RectMode:
    """A * sin(n pi x / a) * sin(m pi y / b) * cos(omega t + t_phase)."""

    n: int = 1
    m: int = 1
    amplitude: float = 1.0
    t_phase: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and isinstance(self.m, (int, np.integer))):
            raise ValueError("mode indices must be integers")
        if self.n < 1 or self.m < 1:
            raise ValueError("rectangle mode needs n, m >= 1")
        if not math.isfinite(self.amplitude) or not math.isfinite(self.t_phase):
            raise ValueError("amplitude and phase must be finite")


ModeSpec = Union[DiskMode, RectMode]


@dataclass
class _Term:
    # one separable mode: amplitude * space(x, y) * cos(omega t + phase)
    mode: ModeSpec
    omega: float
    lam: float = 0.0


@dataclass
class GroundTruth:
    """Exact solution built from separable Dirichlet eigenmodes.

    Every mode has the form ``A * S(x, y) * cos(omega t + phase)`` with
    ``-Laplace S = omega**2 S``, so ``u_tt = Laplace u``.
    """

    domain: Domain
    modes: Sequence[ModeSpec]
    _terms: list = field(init=False, repr=False)

    def __post_init__(self):
        self.modes = tuple(self.modes)
        if not self.modes:
            raise ValueError("ground truth needs at least one mode")
        terms = []
        for md in self.modes:
            if self.domain.kind == "disk":
                if not isinstance(md, DiskMode):
                    raise ValueError("disk domain takes DiskMode entries")
                lam = bessel_zero(md.m, md.k)
                terms.append(_Term(md, lam / self.domain.R, lam))
            else:
                if not isinstance(md, RectMode):
                    raise ValueError("rectangle domain takes RectMode entries")
                om = math.pi * math.hypot(md.n / self.domain.a, md.m / self.domain.b)
                terms.append(_Term(md, om))
        self._terms = terms

    # spatial parts -------------------------------------------------------

    def _space(self, term, x, y):
        md = term.mode
        if self.domain.kind == "rect":
            a, b = self.domain.a, self.domain.b
            return np.sin(md.n * math.pi * x / a) * np.sin(md.m * math.pi * y / b)
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        ang = np.cos(md.m * phi) if md.azimuth == "cos" else np.sin(md.m * phi)
        return _as_array(bessel_j(md.m, term.omega * r)) * ang

    def _space_grad(self, term, x, y):
        md = term.mode
        if self.domain.kind == "rect":
            a, b = self.domain.a, self.domain.b
            kx, ky = md.n * math.pi / a, md.m * math.pi / b
            gx = kx * np.cos(kx * x) * np.sin(ky * y)
            gy = ky * np.sin(kx * x) * np.cos(ky * y)
            return gx, gy
        k = term.omega
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        m = md.m
        if md.azimuth == "cos":
            ang, dang = np.cos(m * phi), -m * np.sin(m * phi)
        else:
            ang, dang = np.sin(m * phi), m * np.cos(m * phi)
        d_r = k * bessel_jp(m, k * r) * ang
        # (1/r) dS/dphi, written through J_m(z)/z to stay finite at r = 0
        d_phi = (k * _j_over_x(m, k * r) * dang) if m > 0 else np.zeros_like(r)
        c, s = np.cos(phi), np.sin(phi)
        return d_r * c - d_phi * s, d_r * s + d_phi * c

    # public evaluations --------------------------------------------------

    def u(self, x, y, t):
        x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
        out = np.zeros(x.shape)
        for term in self._terms:
            md = term.mode
            out = out + md.amplitude * self._space(term, x, y) * np.cos(term.omega * t + md.t_phase)
        return out

    def u_t(self, x, y, t):
        x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
        out = np.zeros(x.shape)
        for term in self._terms:
            md = term.mode
            out = out - md.amplitude * term.omega * self._space(term, x, y) * np.sin(term.omega * t + md.t_phase)
        return out

    def laplacian(self, x, y, t):
        x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
        out = np.zeros(x.shape)
        for term in self._terms:
            md = term.mode
            out = out - md.amplitude * term.omega**2 * self._space(term, x, y) * np.cos(term.omega * t + md.t_phase)
        return out

    def normal_derivative(self, x, y, nu_x, nu_y, t):
        """grad u . nu at (x, y) for times ``t`` (broadcast together)."""
        x, y, nu_x, nu_y, t = np.broadcast_arrays(
            *(np.asarray(v, dtype=float) for v in (x, y, nu_x, nu_y, t))
        )
        out = np.zeros(x.shape)
        for term in self._terms:
            md = term.mode
            gx, gy = self._space_grad(term, x, y)
            out = out + md.amplitude * (gx * nu_x + gy * nu_y) * np.cos(term.omega * t + md.t_phase)
        return out

    def boundary_profile(self, bs):
        """Separable factors of the normal derivative on boundary samples.

        Returns ``(space, omega, phase)`` with ``space`` of shape
        (n_modes, n_b) so that the trace is
        ``sum_j space[j, :, None] * cos(omega[j] * t + phase[j])``.
        """
        space = []
        for term in self._terms:
            gx, gy = self._space_grad(term, bs.x, bs.y)
            space.append(term.mode.amplitude * (gx * bs.nu_x + gy * bs.nu_y))
        omega = np.array([tm.omega for tm in self._terms])
        phase = np.array([tm.mode.t_phase for tm in self._terms])
        return np.array(space), omega, phase


def make_ground_truth(domain, modes):
    """Ground truth for a superposition of eigenmodes on ``domain``."""
    return GroundTruth(domain, modes)


# ---------------------------------------------------------------------------
# Boundary traces
# ---------------------------------------------------------------------------

def _fmt_geom(v):
    return "none" if v is None else repr(float(v))


@dataclass
class BoundaryTrace:
    """Normal derivative sampled on boundary samples x uniform time grid.

    ``values[j, i]`` is the normal derivative at boundary sample ``j`` and
    time ``t[i]``.
    """

    domain: Domain
    boundary: BoundarySamples
    t: np.ndarray
    values: np.ndarray
    provenance: str = "exact"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.boundary.n, self.t.size):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"({self.boundary.n}, {self.t.size})"
            )
        if self.t.size < 2 or not np.all(np.diff(self.t) > 0):
            raise ValueError("time grid must be increasing with at least 2 samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace values must be finite")
        if "," in self.provenance:
            raise ValueError("provenance may not contain commas")

    @property
    def n_b(self):
        return self.boundary.n

    @property
    def n_t(self):
        return self.t.size

    @property
    def t_min(self):
        return float(self.t[0])

    @property
    def t_max(self):
        return float(self.t[-1])

    @property
    def dt(self):
        return (self.t_max - self.t_min) / (self.n_t - 1)

    def with_values(self, values, provenance=None):
        return replace(self, values=np.asarray(values, dtype=float),
                       provenance=self.provenance if provenance is None else provenance)

    def header(self):
        d = self.domain
        disk = d.kind == "disk"
        return (
            f"{TRACE_MAGIC}, kind={d.kind}, R={_fmt_geom(d.R if disk else None)}, "
            f"a={_fmt_geom(None if disk else d.a)}, b={_fmt_geom(None if disk else d.b)}, "
            f"N_b={self.n_b}, t_min={self.t_min!r}, t_max={self.t_max!r}, "
            f"N_t={self.n_t}, provenance={self.provenance}"
        )

    def write_csv(self, path):
        """Write the trace file: header line, then one row per sample pair."""
        bs = self.boundary
        jj, ii = np.meshgrid(np.arange(self.n_b), np.arange(self.n_t), indexing="ij")
        cols = [
            jj.ravel(), ii.ravel(),
            np.repeat(bs.x, self.n_t), np.repeat(bs.y, self.n_t),
            np.repeat(bs.nu_x, self.n_t), np.repeat(bs.nu_y, self.n_t),
            np.tile(self.t, self.n_b), self.values.ravel(),
        ]
        table = np.column_stack(cols)
        with open(path, "w", newline="\n") as fh:
            fh.write(self.header() + "\n")
            np.savetxt(fh, table, fmt=["%d", "%d"] + ["%.17g"] * 6, delimiter=",")

    @classmethod
    def read_csv(cls, path):
        """Parse a trace file; malformed content raises TraceFormatError with the line."""
        with open(path) as fh:
            first = fh.readline()
        meta = _parse_header(first)
        domain = (Domain.disk(meta["R"]) if meta["kind"] == "disk"
                  else Domain.rectangle(meta["a"], meta["b"]))
        n_b, n_t = meta["N_b"], meta["N_t"]
        table = _load_rows(path, n_b * n_t)
        jj = table[:, 0].astype(int)
        ii = table[:, 1].astype(int)
        expect_j = np.repeat(np.arange(n_b), n_t)
        expect_i = np.tile(np.arange(n_t), n_b)
        bad = np.flatnonzero((jj != expect_j) | (ii != expect_i))
        if bad.size:
            raise TraceFormatError(
                f"index pair ({jj[bad[0]]}, {ii[bad[0]]}) out of order; "
                f"expected ({expect_j[bad[0]]}, {expect_i[bad[0]]})",
                line=int(bad[0]) + 2,
            )
        bs = domain.boundary(n_b)
        geom = table[::n_t, 2:6]
        scale = max(domain.perimeter, 1.0)
        mism = np.flatnonzero(np.max(np.abs(geom - np.column_stack([bs.x, bs.y, bs.nu_x, bs.nu_y])), axis=1) > 1e-9 * scale)
        if mism.size:
            raise TraceFormatError(
                "boundary geometry does not match the declared domain sampling",
                line=int(mism[0]) * n_t + 2,
            )
        t = table[:n_t, 6]
        grid = np.linspace(meta["t_min"], meta["t_max"], n_t)
        if np.max(np.abs(t - grid)) > 1e-9 * max(1.0, abs(meta["t_min"]), abs(meta["t_max"])):
            raise TraceFormatError("time column is not the declared uniform grid", line=2)
        values = table[:, 7].reshape(n_b, n_t)
        if not np.all(np.isfinite(values)):
            k = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
            raise TraceFormatError("non-finite dnu_u value", line=k + 2)
        return cls(domain, bs, grid, values, meta["provenance"])


def _parse_header(line):
    if not line.startswith(TRACE_MAGIC):
        raise TraceFormatError(f"missing '{TRACE_MAGIC}' header", line=1)
    body = line[len(TRACE_MAGIC):].strip()
    if "provenance=" not in body:
        raise TraceFormatError("header lacks provenance", line=1)
    body, prov = body.split("provenance=", 1)
    fields = {}
    for part in body.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise TraceFormatError(f"bad header field {part!r}", line=1)
        key, val = part.split("=", 1)
        fields[key.strip()] = val.strip()
    meta = {"provenance": prov.strip()}
    try:
        meta["kind"] = fields["kind"]
        for key in ("R", "a", "b"):
            v = fields[key]
            meta[key] = None if v == "none" else float(v)
        meta["N_b"] = int(fields["N_b"])
        meta["N_t"] = int(fields["N_t"])
        meta["t_min"] = float(fields["t_min"])
        meta["t_max"] = float(fields["t_max"])
    except KeyError as exc:
        raise TraceFormatError(f"header lacks {exc.args[0]}", line=1) from None
    except ValueError as exc:
        raise TraceFormatError(f"bad header value: {exc}", line=1) from None
    if meta["kind"] not in ("disk", "rect"):
        raise TraceFormatError(f"unknown kind {meta['kind']!r}", line=1)
    if meta["kind"] == "disk" and meta["R"] is None:
        raise TraceFormatError("disk trace needs R", line=1)
    if meta["kind"] == "rect" and (meta["a"] is None or meta["b"] is None):
        raise TraceFormatError("rectangle trace needs a and b", line=1)
    if meta["N_b"] < 4 or meta["N_t"] < 2:
        raise TraceFormatError("N_b must be >= 4 and N_t >= 2", line=1)
    return meta


def _load_rows(path, n_rows):
    try:
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        ok = table.shape[1] == len(TRACE_COLUMNS)
    except ValueError:
        ok = False
    if not ok:
        _locate_bad_row(path)
        raise TraceFormatError("unreadable trace rows")
    if table.shape[0] != n_rows:
        raise TraceFormatError(
            f"expected {n_rows} data rows, found {table.shape[0]} (file truncated?)",
            line=table.shape[0] + 2,
        )
    return table


def _locate_bad_row(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if lineno == 1 or raw.startswith("#"):
                continue
            parts = raw.strip().split(",")
            if len(parts) != len(TRACE_COLUMNS):
                raise TraceFormatError(
                    f"expected {len(TRACE_COLUMNS)} fields, found {len(parts)}", line=lineno
                )
            try:
                [float(p) for p in parts]
            except ValueError:
                raise TraceFormatError(f"non-numeric field in {raw.strip()!r}", line=lineno) from None


def exact_trace(gt, domain, n_b, t_min, t_max, n_t, threads=None):
    """Closed-form normal-derivative trace of ``gt`` on a uniform time grid."""
    if n_t < 2 or not t_max > t_min:
        raise ValueError("need n_t >= 2 and t_max > t_min")
    bs = domain.boundary(n_b)
    t = np.linspace(t_min, t_max, int(n_t))
    space, omega, phase = gt.boundary_profile(bs)
    temporal = np.cos(omega[:, None] * t[None, :] + phase[:, None])

    blocks = np.array_split(np.arange(bs.n), max(1, min(bs.n, 8)))
    rows = parallel_map(lambda idx: space[:, idx].T @ temporal, blocks, threads)
    values = np.concatenate(rows, axis=0)
    return BoundaryTrace(domain, bs, t, values, "exact")


def add_noise(trace, rel_level, seed):
    """Add i.i.d. Gaussian noise of std ``rel_level * max|values|``.

    Uses the counter-based Philox generator keyed by ``seed``; the
    algorithm, level and seed are recorded in the provenance string.
    """
    if rel_level < 0 or not math.isfinite(rel_level):
        raise ValueError("rel_level must be a finite nonnegative number")
    base = trace.provenance
    prov = f"noisy(rel={rel_level!r};seed={int(seed)};rng={RNG_NAME};base={base})"
    if rel_level == 0:
        return trace.with_values(trace.values.copy(), prov)
    sigma = rel_level * float(np.max(np.abs(trace.values)))
    gen = np.random.Generator(np.random.Philox(int(seed)))
    noise = gen.standard_normal(trace.values.shape)
    return trace.with_values(trace.values + sigma * noise, prov)


def trace_l2_distance(a, b):
    """Discrete L2 distance over boundary x time, ``sqrt(sum w_j dt (a - b)**2)``.

    Both traces must share their boundary sampling and time grid.
    """
    if a.values.shape != b.values.shape or not np.allclose(a.t, b.t, rtol=0, atol=1e-12):
        raise ValueError("traces are sampled differently")
    d = a.values - b.values
    return math.sqrt(float(np.sum(a.boundary.weights[:, None] * d * d)) * a.dt)
