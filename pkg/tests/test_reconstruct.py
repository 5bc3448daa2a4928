import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavecauchy import reconstruct as R
from wavecauchy.errors import (
    CoverageError,
    TargetOutsideDomainError,
    UnstableRegimeError,
    WindowCoverageError,
)
from wavecauchy.synthdata import (
    BoundaryTrace,
    DiskMode,
    Domain,
    RectMode,
    add_noise,
    exact_trace,
    make_ground_truth,
)

DISK = Domain.disk(1.0)
GT = make_ground_truth(DISK, [DiskMode(0, 1)])
TP = R.TargetPoint(0.3, 0.2, 0.1)


@pytest.fixture(scope="module")
def trace():
    return exact_trace(GT, DISK, 256, -1.3, 1.5, 401)


@pytest.fixture(scope="module")
def trace2():
    gt = make_ground_truth(DISK, [DiskMode(2, 1, "sin", 0.5, 0.2)])
    return exact_trace(gt, DISK, 256, -1.3, 1.5, 401)


def test_tau():
    assert R.tau((0.3, 0.2), TP) == 0.0
    assert R.tau((3.3, 4.2), TP) == pytest.approx(5.0)
    p, q = R.TargetPoint(0.1, -0.4, 0.0), R.TargetPoint(0.5, 0.3, 2.0)
    assert R.tau(p, q) == R.tau(q, p)


def test_zero_trace_gives_zero(trace):
    res = R.reconstruct_point(trace.with_values(np.zeros_like(trace.values)), TP, 0.05)
    assert res.value == 0.0


def test_reconstruction_is_linear(trace, trace2):
    a, b = 1.7, -0.4
    mixed = trace.with_values(a * trace.values + b * trace2.values)
    for h in (0.1, 0.04):
        lhs = R.reconstruct_point(mixed, TP, h).value
        rhs = a * R.reconstruct_point(trace, TP, h).value + b * R.reconstruct_point(trace2, TP, h).value
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_result_fields(trace):
    res = R.reconstruct_point(trace, TP, 0.05, truth=GT)
    assert res.truth == pytest.approx(float(GT.u(0.3, 0.2, 0.1)))
    assert res.abs_error == abs(res.value - res.truth)
    assert res.quad_diag.est_quad_error >= 0
    assert res.quad_diag.boundary_nodes == trace.n_b
    assert res.target == TP and res.h == 0.05
    bare = R.reconstruct_point(trace, TP, 0.05)
    assert bare.truth is None and bare.abs_error is None


def test_window_clipping_is_exact_up_to_quadrature(trace):
    # integrate over the whole trace window instead of t* +- tau
    h = 0.05
    res = R.reconstruct_point(trace, TP, h)
    radii = np.hypot(trace.boundary.x - TP.x_star, trace.boundary.y - TP.y_star)
    tab = R.kernel_table(h, float(radii.min()), float(radii.max()))
    rows = np.flatnonzero(trace.boundary.weights > 0)
    lo = np.full(trace.n_b, trace.t_min)
    hi = np.full(trace.n_b, trace.t_max)
    wide = R._functional(trace, rows, lo, hi, lambda j, nodes: tab.at_radius(radii[j], nodes - TP.t_star))[0]
    assert abs(wide - res.value) <= res.quad_diag.est_quad_error


def test_table_and_stable_kernels_agree():
    tr = exact_trace(GT, DISK, 64, -1.3, 1.5, 141)
    a = R.reconstruct_point(tr, TP, 0.1)
    b = R.reconstruct_point(tr, TP, 0.1, kernel="stable")
    assert a.value == pytest.approx(b.value, rel=1e-8)
    with pytest.raises(ValueError):
        R.reconstruct_point(tr, TP, 0.1, kernel="bogus")


def _translated(trace, dx, dy):
    dom = trace.domain
    bs = trace.boundary
    shifted = replace(bs, x=bs.x + dx, y=bs.y + dy)
    return BoundaryTrace(dom, shifted, trace.t, trace.values)


class _ShiftedDisk:
    """Unit disk centred at (cx, cy); only what the reconstruction reads."""

    kind = "disk"
    R = 1.0

    def __init__(self, cx, cy):
        self.cx, self.cy = cx, cy

    def boundary_distance(self, x, y):
        return 1.0 - np.hypot(x - self.cx, y - self.cy)


@settings(max_examples=5, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
def test_translation_and_time_shift_covariance(dx, dy, dt):
    tr = exact_trace(GT, DISK, 64, -1.3, 1.5, 141)
    base = R.reconstruct_point(tr, TP, 0.1).value
    moved = _translated(tr, dx, dy)
    moved.domain = _ShiftedDisk(dx, dy)
    moved = replace(moved, t=moved.t + dt)
    got = R.reconstruct_point(moved, TP.shifted(dx, dy, dt), 0.1).value
    assert got == pytest.approx(base, rel=1e-9)


def test_resolution_convergence(trace):
    vals = []
    for nb, nt in ((64, 101), (128, 201), (256, 401), (512, 801)):
        tr = exact_trace(GT, DISK, nb, -1.3, 1.5, nt)
        vals.append(R.reconstruct_point(tr, TP, 0.05).value)
    d = np.abs(np.diff(vals))
    assert all(a / b >= 2.5 for a, b in zip(d, d[1:]))


def test_bias_constant_matches_laplacian(trace):
    # error ~ (h / 8) * Laplace u at the target for small h
    lap = float(GT.laplacian(0.3, 0.2, 0.1))
    tr = exact_trace(GT, DISK, 512, -1.3, 1.5, 801)
    res = R.reconstruct_point(tr, TP, 0.02, truth=GT)
    assert (res.value - res.truth) / (0.02 * lap / 8) == pytest.approx(1.0, abs=0.1)


def test_errors_for_bad_targets_and_windows(trace):
    with pytest.raises(TargetOutsideDomainError):
        R.reconstruct_point(trace, R.TargetPoint(0.999, 0.0, 0.0), 0.05)
    with pytest.raises(TargetOutsideDomainError):
        R.reconstruct_point(trace, R.TargetPoint(2.0, 0.0, 0.0), 0.05)
    with pytest.raises(WindowCoverageError):
        R.reconstruct_point(trace, R.TargetPoint(0.3, 0.2, 0.6), 0.05)
    with pytest.raises(ValueError):
        R.reconstruct_point(trace, TP, 0.0)


def test_interior_convolution_matches_boundary_functional_on_rectangle():
    dom = Domain.rectangle(1.0, 0.5)
    gt = make_ground_truth(dom, [RectMode(1, 1)])
    tp = R.TargetPoint(0.45, 0.25, 0.0)
    tr = exact_trace(gt, dom, 1200, -1.3, 1.3, 1201)
    bnd = R.reconstruct_point(tr, tp, 0.02)
    vol = R.interior_convolution(gt, dom, tp, 0.02)
    assert abs(bnd.value - vol) <= bnd.quad_diag.est_quad_error + 1e-6


# --- batches and sweeps --------------------------------------------------------

def test_grid_singleton_and_permutation(trace):
    tps = [TP, R.TargetPoint(-0.2, 0.1, 0.0), R.TargetPoint(0.1, -0.2, 0.0), R.TargetPoint(0.0, 0.0, 0.0)]
    single = R.reconstruct_grid(trace, [TP], 0.08)[0]
    assert single.value == pytest.approx(R.reconstruct_point(trace, TP, 0.08).value, rel=1e-12)
    fwd = R.reconstruct_grid(trace, tps, 0.08, threads=3)
    perm = [2, 0, 3, 1]
    back = R.reconstruct_grid(trace, [tps[i] for i in perm], 0.08, threads=1)
    for j, i in enumerate(perm):
        assert back[j].target == fwd[i].target
        assert back[j].value == fwd[i].value
    assert R.reconstruct_grid(trace, [], 0.08) == []


def test_grid_failures_do_not_abort_batch(trace):
    out = R.reconstruct_grid(trace, [TP, R.TargetPoint(5.0, 0.0, 0.0), R.TargetPoint(0.3, 0.2, 0.6)], 0.08)
    assert isinstance(out[0], R.ReconstructionResult)
    assert isinstance(out[1], R.FailedTarget) and isinstance(out[1].error, TargetOutsideDomainError)
    assert isinstance(out[2], R.FailedTarget) and isinstance(out[2].error, WindowCoverageError)


def test_grid_errors_follow_the_bias_model():
    tr = exact_trace(GT, DISK, 256, -1.6, 1.6, 641)
    xs = np.linspace(-0.5, 0.5, 11)
    tps = [R.TargetPoint(x, y, 0.0) for x in xs for y in xs if math.hypot(x, y) <= 0.5]
    h = 0.04
    res = R.reconstruct_grid(tr, tps, h, truth=GT)
    for r in res:
        model = h / 8 * abs(float(GT.laplacian(r.target.x_star, r.target.y_star, 0.0)))
        assert r.abs_error <= 1.3 * model + 2 * r.quad_diag.est_quad_error


def test_h_sweep(trace):
    res = R.h_sweep(trace, TP, (0.16, 0.08, 0.04), truth=GT)
    errs = [r.abs_error for r in res]
    assert errs[0] > errs[1] > errs[2]
    assert R.sweep_summary(res) == {"best_h": 0.04, "increases": 0, "monotone": True}
    assert R.h_sweep(trace, TP, []) == []


def test_sweep_summary_counts_increases():
    q = R.QuadDiag(1, 1, 0.0)
    errs = {0.2: 0.1, 0.1: 0.04, 0.05: 0.06, 0.025: 0.3}
    res = [R.ReconstructionResult(0.0, h, q).with_truth(e) for h, e in errs.items()]
    res.append(R.FailedTarget(None, 0.01, ValueError("x")))
    assert R.sweep_summary(res[::-1]) == {"best_h": 0.1, "increases": 2, "monotone": False}
    assert R.sweep_summary([])["best_h"] is None


def test_noise_has_little_effect_on_full_method(trace):
    noisy = add_noise(trace, 0.05, seed=4)
    for h in (0.04, 0.005):
        clean = R.reconstruct_point(trace, TP, h).value
        assert abs(R.reconstruct_point(noisy, TP, h).value - clean) < 0.01


def test_default_h():
    tr = exact_trace(GT, DISK, 256, -1.3, 1.5, 401)
    assert R.default_h(tr, TP, 0.0) == pytest.approx((2 * tr.dt) ** 2)
    noisy = add_noise(tr, 1e-2, seed=1)
    sigma = R.estimate_noise_sigma(noisy)
    assert sigma == pytest.approx(1e-2 * np.max(np.abs(tr.values)), rel=0.1)
    assert R.default_h(noisy, TP) > R.default_h(add_noise(tr, 1e-4, seed=1), TP)


# --- partial boundary -----------------------------------------------------------

@pytest.fixture(scope="module")
def wide_trace():
    return exact_trace(GT, DISK, 512, -2.0, 2.0, 1001)


def test_cone_config_covers_footprint(wide_trace):
    for toward in ("near", "far"):
        tp = R.TargetPoint(0.6, 0.3, 0.1)
        cfg = R.cone_config(wide_trace, tp, R.cone_alpha(DISK, tp, toward))
        bs = wide_trace.boundary
        ca, sa = math.cos(cfg.alpha), math.sin(cfg.alpha)
        dx, dy = bs.x - tp.x_star, bs.y - tp.y_star
        xr, yr = dx * ca + dy * sa, -dx * sa + dy * ca
        foot = yr >= np.abs(xr)
        assert np.all(R._in_arc(bs.s[foot], cfg.arc, DISK.perimeter))
        assert cfg.window[0] <= tp.t_star - yr[foot].max() + 1e-12
        assert cfg.window[1] >= tp.t_star + yr[foot].max() - 1e-12


def test_cone_axis_orientation():
    tp = R.TargetPoint(0.6, 0.0, 0.0)
    # the rotated y' axis is (-sin a, cos a): toward +x for near, -x for far
    a = R.cone_alpha(DISK, tp, "near")
    assert (-math.sin(a), math.cos(a)) == pytest.approx((1.0, 0.0), abs=1e-12)
    a = R.cone_alpha(DISK, tp, "far")
    assert (-math.sin(a), math.cos(a)) == pytest.approx((-1.0, 0.0), abs=1e-12)


@pytest.mark.parametrize("toward", ["near", "far"])
def test_partial_clean_moderate_h(wide_trace, toward):
    # target near the boundary; error measured against the mode amplitude (1)
    tp = R.TargetPoint(0.7, 0.0, 0.0)
    cfg = R.cone_config(wide_trace, tp, R.cone_alpha(DISK, tp, toward))
    res = R.reconstruct_partial(wide_trace, tp, 0.2, cfg, truth=GT)
    assert math.isfinite(res.value)
    assert res.abs_error <= 0.2


def test_partial_noise_amplification(wide_trace):
    cfg = R.cone_config(wide_trace, TP)
    noisy = add_noise(wide_trace, 1e-3, seed=2)
    full = R.reconstruct_point(noisy, TP, 0.1, truth=GT).abs_error
    part = R.reconstruct_partial(noisy, TP, 0.1, cfg, truth=GT).abs_error
    assert part >= 10 * full


def test_partial_unstable_regime_raises(wide_trace):
    cfg = R.cone_config(wide_trace, TP)
    with pytest.raises(UnstableRegimeError):
        R.reconstruct_partial(wide_trace, TP, 0.002, cfg)


def test_partial_coverage_errors(wide_trace):
    cfg = R.cone_config(wide_trace, TP)
    short_arc = R.PartialBoundaryConfig((cfg.arc[0], cfg.arc[0] + 0.1), cfg.window, cfg.alpha)
    with pytest.raises(CoverageError):
        R.reconstruct_partial(wide_trace, TP, 0.1, short_arc)
    short_window = R.PartialBoundaryConfig(cfg.arc, (TP.t_star - 0.1, TP.t_star + 0.1), cfg.alpha)
    with pytest.raises(CoverageError):
        R.reconstruct_partial(wide_trace, TP, 0.1, short_window)
    with pytest.raises(ValueError):
        R.PartialBoundaryConfig(cfg.arc, (1.0, 0.0), 0.0)


def test_partial_is_linear(wide_trace):
    cfg = R.cone_config(wide_trace, TP)
    noisy = add_noise(wide_trace, 1e-2, seed=5)
    a = R.reconstruct_partial(wide_trace, TP, 0.1, cfg).value
    b = R.reconstruct_partial(noisy.with_values(noisy.values - wide_trace.values), TP, 0.1, cfg).value
    c = R.reconstruct_partial(noisy, TP, 0.1, cfg).value
    assert a + b == pytest.approx(c, rel=1e-9, abs=1e-9 * abs(b))


def test_results_csv(tmp_path, trace):
    res = R.reconstruct_grid(trace, [TP, R.TargetPoint(5.0, 0.0, 0.0)], 0.08, truth=GT)
    p = tmp_path / "r.csv"
    R.write_results_csv(p, res)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(R.RESULT_COLUMNS)
    vals = lines[1].split(",")
    assert float(vals[4]) == pytest.approx(res[0].value, rel=1e-14)
    assert lines[2].endswith(",,,,")
