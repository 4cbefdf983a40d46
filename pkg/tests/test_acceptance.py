"""Acceptance criteria, one test per criterion, tolerances pinned."""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import comb, rgamma

from fracevo.closedform import commutator, q_table, solve_nonpermutable, solve_permutable
from fracevo.families import (check_envelope, cosine_family_grid, estimate_envelope,
                              sine_family_grid)
from fracevo.grid import TimeGrid
from fracevo.mlfunc import g_kernel, ml_scalar
from fracevo.operators import Forcing, SeriesControl, TimeDependentOperator
from fracevo.oracle import IvpSpec, adams_solve, residual
from fracevo.perturb import (iter_series_terms, particular_solution,
                             perturbed_cosine, solve_ivp, variation_of_constants,
                             verify_growth_bounds)
from fracevo.quadrature import fractional_integral, kernel_convolution

from conftest import record

A5 = np.array([[0.0, 1.0], [-2.0, 0.0]])
B5 = np.array([[0.0, 0.0], [1.0, 0.0]])
X5, Y5 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def test_c01_ml_degeneration():
    z = np.linspace(-10.0, 10.0, 50)
    t0 = time.perf_counter()
    e1 = max(abs(ml_scalar(1, 1, v, tol=1e-15) - math.exp(v)) for v in z)
    e2 = max(abs(ml_scalar(2, 1, -v * v, tol=1e-15) - math.cos(v)) for v in z)
    e3 = max(abs(ml_scalar(2, 2, -v * v, tol=1e-15) - math.sin(v) / v) for v in z)
    elapsed = time.perf_counter() - t0
    err = max(e1, e2, e3)
    ok = err <= 1e-11 and elapsed < 1.0
    record(1, ok, f"max abs error {err:.2e} (<= 1e-11), runtime {elapsed:.3f} s (< 1 s)")
    assert err <= 1e-11
    assert elapsed < 1.0


def _semigroup_error(a, b, N):
    # product rule of the perturb module: weight (t-s)**(a-1), smooth factor 1/Gamma(a),
    # integrand sampled g_b (g_b(0) := 0 by the kernel convention)
    g = TimeGrid(1.0, N)
    t = g.nodes
    G = np.full((N + 1, 1, 1), rgamma(a))
    conv = kernel_convolution(a, G, g_kernel(b, t)[:, None], g.h)[:, 0]
    ex = g_kernel(a + b, t)
    return np.max(np.abs(conv - ex)) / np.max(np.abs(ex))


def test_c02_kernel_semigroup():
    rows, ok = [], True
    for a, b in [(0.5, 0.7), (1.2, 0.3), (0.9, 0.9)]:
        e1, e2 = _semigroup_error(a, b, 512), _semigroup_error(a, b, 1024)
        ratio = e1 / e2
        ok &= e1 <= 5e-4 and ratio >= 3.5
        rows.append(f"({a},{b}): rel {e1:.2e}, ratio {ratio:.2f}")
    record(2, ok, "; ".join(rows) + " (need rel <= 5e-4, ratio >= 3.5)")
    assert ok, "; ".join(rows)


FAMILY_MATS = [np.array([[0.0, 1.0], [-2.0, 0.0]]), np.array([[-1.0, 0.5], [0.0, -2.0]]),
               np.array([[0.3, -0.5], [0.8, -1.2]])]


def _family_residual(alpha, A, N):
    g = TimeGrid(1.0, N)
    C = cosine_family_grid(alpha, A, g).values
    IC = fractional_integral(alpha, C, g)
    return np.abs(C - np.eye(2) - np.einsum("ab,mbc->mac", A, IC)).max()


def test_c03_family_identity():
    worst_r, worst_ratio = 0.0, np.inf
    for alpha, A in itertools.product([1.25, 1.5, 1.9], FAMILY_MATS):
        r1, r2 = _family_residual(alpha, A, 256), _family_residual(alpha, A, 512)
        worst_r = max(worst_r, r2)
        worst_ratio = min(worst_ratio, r1 / r2)
    ok = worst_r <= 1e-4 and worst_ratio >= 3.5
    record(3, ok, f"max residual {worst_r:.2e} at N=512 (<= 1e-4), min refinement ratio "
                  f"{worst_ratio:.2f} (>= 3.5)")
    assert worst_r <= 1e-4
    assert worst_ratio >= 3.5


def test_c04_perturbation_vs_closed_form():
    alpha, a, b, T, tol = 1.6, -1.0, 0.3, 2.0, 1e-12
    ctl = SeriesControl(tol=tol)
    sols = {}
    for N in (512, 1024):
        g = TimeGrid(T, N)
        sols[N] = perturbed_cosine(alpha, [[a]], [[b]], g, ctl)
    g = TimeGrid(T, 1024)
    ex = np.array([ml_scalar(alpha, 1, (a + b) * t**alpha) for t in g.nodes])
    u = sols[1024].values[:, 0, 0]
    err = np.abs(u - ex).max()
    # Richardson estimate of the quadrature error on the finer grid, safety factor 2
    quad_bound = 2.0 * np.abs(sols[512].values[:, 0, 0] - u[::2]).max() / 3.0
    allowed = max(1e-8, tol + quad_bound)
    # certificate: the next five terms stay below the reported remainder
    info = sols[1024].info
    seed = cosine_family_grid(alpha, [[a]], g).values
    extra = list(itertools.islice(iter_series_terms(alpha, [[a]], [[b]], g, seed),
                                  info["terms"], info["terms"] + 5))
    observed_tail = np.abs(sum(extra)).max()
    ok = err <= allowed and observed_tail <= info["remainder"]
    record(4, ok, f"error {err:.2e} <= {allowed:.2e}; observed tail {observed_tail:.2e} <= "
                  f"certified {info['remainder']:.2e} ({info['terms']} terms)")
    assert err <= allowed
    assert observed_tail <= info["remainder"]


def _three_solutions(N):
    g = TimeGrid(1.0, N)
    u1 = solve_nonpermutable(1.5, A5, B5, None, X5, Y5, g).values
    u2 = solve_ivp(1.5, A5, B5, None, X5, Y5, g).values
    u3 = adams_solve(IvpSpec(1.5, A5, B5, None, X5, Y5, g)).values
    d = lambda p, q: float(np.abs(p - q).max())
    return d(u1, u2), d(u1, u3), d(u2, u3)


def test_c05_nonpermutable_cross_check():
    assert not commutator(A5, B5)[1]
    coarse, fine = _three_solutions(512), _three_solutions(1024)
    ok_tol = max(fine) <= 5e-5
    ok_shrink = all(f < c for f, c in zip(fine, coarse))
    record(5, ok_tol and ok_shrink,
           "pairwise deviations at N=1024: " + ", ".join(f"{d:.2e}" for d in fine)
           + " (<= 5e-5); at N=512: " + ", ".join(f"{d:.2e}" for d in coarse))
    assert ok_tol
    assert ok_shrink


def test_c06_q_table_laws(rng):
    exact = np.array_equal(q_table(A5, B5, 2)[(1, 1)], A5 @ B5 + B5 @ A5)
    worst = 0.0
    for trial in range(3):
        A = rng.standard_normal((3, 3))
        B = 0.4 * np.eye(3) - 0.7 * A + 0.2 * A @ A
        tab = q_table(A, B, 8)
        for k in range(9):
            for m in range(9 - k):
                ref = comb(k + m, m, exact=True) * np.linalg.matrix_power(A, k) @ np.linalg.matrix_power(B, m)
                worst = max(worst, np.abs(tab[(k, m)] - ref).max() / max(np.abs(ref).max(), 1e-300))
    ok = exact and worst <= 1e-11
    record(6, ok, f"Q_11 == AB+BA exactly: {exact}; commuting binomial law max rel error {worst:.2e} "
                  f"(<= 1e-11)")
    assert exact
    assert worst <= 1e-11


def test_c07_growth_bounds():
    g = TimeGrid(1.0, 1024)
    env = estimate_envelope(1.5, A5, g)
    certified = check_envelope(1.5, A5, g, env).size == 0
    rep = verify_growth_bounds(1.5, A5, B5, g, SeriesControl(envelope=env), raise_on_violation=False)
    m15 = rep.min_margin()
    # classical specialisation
    g2 = TimeGrid(2.0, 256)
    rep2 = verify_growth_bounds(2.0, [[-1.0]], [[0.5]], g2, raise_on_violation=False)
    M, w, K = rep2.envelope.M, rep2.envelope.omega, rep2.K_t
    s, r = g2.nodes, math.sqrt(M * K)
    E = M * np.exp(w * s)
    classical = {"C": E * np.cosh(r * s), "S": E * np.sinh(r * s) / r,
                 "C-C0": E * (np.cosh(r * s) - 1), "S-S0": E * (np.sinh(r * s) / r - s)}
    dev = max(np.abs(rep2.bounds[k] - classical[k]).max() / np.abs(classical[k]).max() for k in classical)
    ok = certified and m15 >= -1e-9 and rep2.min_margin() >= -1e-9 and dev <= 1e-12
    record(7, ok, f"envelope (M={env.M:.4f}, omega={env.omega:.4f}) certified: {certified}; min margin "
                  f"{m15:.2e} (>= -1e-9); alpha=2 cosh/sinh bounds rel dev {dev:.1e}, margin "
                  f"{rep2.min_margin():.2e}")
    assert certified
    assert m15 >= -1e-9
    assert rep2.min_margin() >= -1e-9
    assert dev <= 1e-12


def _slope0(w, h):
    return (-11 * w[0] + 18 * w[1] - 9 * w[2] + 2 * w[3]) / (6 * h)


def test_c08_inhomogeneous_consistency():
    f = Forcing.polynomial([[1.0, 0.0], [0.0, 1.0]])
    g = TimeGrid(1.0, 1024)
    w = particular_solution(1.5, A5, B5, f, g).values
    v = variation_of_constants(1.5, A5, B5, f, g).values
    dev = np.abs(w - v).max()
    zero0 = not np.any(w[0]) and not np.any(v[0])
    # w'(0) by a four-point one-sided difference on a short dedicated grid
    gs = TimeGrid(1e-7, 8)
    d = max(np.abs(_slope0(particular_solution(1.5, A5, B5, f, gs).values, gs.h)).max(),
            np.abs(_slope0(variation_of_constants(1.5, A5, B5, f, gs).values, gs.h)).max())
    ok = dev <= 5e-6 and zero0 and d <= 1e-3
    record(8, ok, f"max |w_series - w_voc| {dev:.2e} (<= 5e-6); w(0)=0 exactly: {zero0}; "
                  f"|w'(0)| approx {d:.2e} (<= 1e-3)")
    assert dev <= 5e-6
    assert zero0
    assert d <= 1e-3


A3 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.5], [0.2, 0.0, -1.0]])
B3 = np.array([[0.0, 0.0, 0.3], [0.0, -0.4, 0.0], [1.0, 0.0, 0.0]])
A2c = np.array([[-1.0, 0.5], [0.0, -2.0]])

CORPUS = {
    "scalar/commuting": dict(alpha=1.5, A=[[-1.0]], B=[[0.3]], f=Forcing.constant([1.0]),
                             x=[1.0], y=[0.5]),
    "scalar/non-commuting": dict(alpha=1.7, A=[[-1.0]],
                                 B=TimeDependentOperator.polynomial([[[0.3]], [[0.5]]]),
                                 f=None, x=[1.0], y=[0.0]),
    "2x2/commuting": dict(alpha=1.3, A=A2c, B=0.5 * A2c + 0.2 * np.eye(2),
                          f=Forcing.constant([1.0, 0.0]), x=[1.0, 1.0], y=[0.0, 1.0]),
    "2x2/non-commuting": dict(alpha=1.5, A=A5, B=B5, f=Forcing.polynomial([[1.0, 0.0], [0.0, 1.0]]),
                              x=X5, y=Y5),
    "3x3/commuting": dict(alpha=1.8, A=A3, B=0.1 * A3 @ A3 - 0.3 * A3, f=None,
                          x=[1.0, 0.0, 0.5], y=[0.0, 1.0, 0.0]),
    "3x3/non-commuting": dict(alpha=1.25, A=A3, B=B3, f=Forcing.constant([0.0, 1.0, 0.0]),
                              x=[1.0, 0.0, 0.5], y=[0.0, 1.0, 0.0]),
}


def _main_path(p):
    B = p["B"]
    if isinstance(B, TimeDependentOperator):
        return {"series": solve_ivp}
    out = {"series": solve_ivp, "nonpermutable": solve_nonpermutable}
    if commutator(p["A"], B)[1]:
        out["permutable"] = solve_permutable
    return out


def test_c09_residual_order():
    Ns = (128, 256, 512, 1024)
    lines, ok = [], True
    for name, p in CORPUS.items():
        for sname, solver in _main_path(p).items():
            res = []
            for N in Ns:
                g = TimeGrid(1.0, N)
                u = solver(p["alpha"], p["A"], p["B"], p["f"], p["x"], p["y"], g)
                spec = IvpSpec(p["alpha"], p["A"], p["B"], p["f"], p["x"], p["y"], g)
                res.append(residual(u, spec).values[1:-1].max())
            h = 1.0 / np.array(Ns)
            slope = np.polyfit(np.log(h), np.log(res), 1)[0]
            C = max(r / hh**1.2 for r, hh in zip(res, h))
            good = slope >= 1.2
            ok &= good
            lines.append(f"{name}:{sname} order {slope:.2f} C={C:.2e}")
    record(9, ok, "; ".join(lines) + " (order >= 1.2)")
    assert ok, "; ".join(lines)


def test_c10_uniqueness_and_linearity(rng):
    g = TimeGrid(1.0, 256)
    Bt = TimeDependentOperator.polynomial([B5, 0.3 * np.eye(2)])
    zero = max(np.abs(solve_ivp(1.5, A5, Bt, None, [0.0, 0.0], [0.0, 0.0], g).values).max(),
               np.abs(solve_nonpermutable(1.5, A5, B5, None, [0.0, 0.0], [0.0, 0.0], g).values).max())
    worst = 0.0
    for _ in range(3):
        x1, y1, x2, y2 = rng.standard_normal((4, 2))
        F1, F2 = rng.standard_normal((2, 3, 2))
        c1, c2 = rng.standard_normal(2)
        u1 = solve_ivp(1.5, A5, Bt, Forcing.polynomial(F1), x1, y1, g).values
        u2 = solve_ivp(1.5, A5, Bt, Forcing.polynomial(F2), x2, y2, g).values
        u12 = solve_ivp(1.5, A5, Bt, Forcing.polynomial(c1 * F1 + c2 * F2),
                        c1 * x1 + c2 * x2, c1 * y1 + c2 * y2, g).values
        worst = max(worst, np.abs(u12 - c1 * u1 - c2 * u2).max() / np.abs(u12).max())
    ok = zero <= 1e-13 and worst <= 1e-10
    record(10, ok, f"zero-data sup norm {zero:.1e} (<= 1e-13); superposition rel error {worst:.1e} "
                   f"(<= 1e-10)")
    assert zero <= 1e-13
    assert worst <= 1e-10
