"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every check records a line through the ``criterion`` fixture; the terminal
summary prints one PASS/FAIL line per criterion.  Oracles are computed
independently of the code under test (dense eigenvalue solvers, necklace
brute force, mpmath, closed forms).
"""
import itertools
import json
import math
import time

import mpmath
import numpy as np
import pytest

from ruelle_lab.anosov import (
    block_map,
    build_ladder,
    cat_map,
    exponentials,
    linearization_sweep,
    lyapunov_exponents,
    stable_ball_ratio,
)
from ruelle_lab.cli import main
from ruelle_lab.markov import (
    check_theorem42,
    constant_roof,
    cosine_roof,
    cylinder_tables,
    doubling_map,
    fit_lemma41,
    golden_mean_map,
    linear_markov_map,
    perturbed_doubling,
    verify_expansion,
    ExpansionConstants,
)
from ruelle_lab.orbits import census, entropy, li, pi_vs_li, zeta_partial
from ruelle_lab.symbolic import SubshiftSpec
from ruelle_lab.transfer import (
    GridFunction,
    WeightSpec,
    grid_for,
    leading_eigen,
    locally_constant_oracle,
    op_norm_estimate,
    pressure,
    solve_P,
    spectral_scan,
)

N_FULL = 4096


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(M, dtype=complex)))))


def primitive_necklaces(k: int, n: int) -> int:
    classes = set()
    for w in itertools.product(range(k), repeat=n):
        rotations = [w[i:] + w[:i] for i in range(n)]
        if len(set(rotations)) == n:
            classes.add(min(rotations))
    return len(classes)


# ---------------------------------------------------------------- 1

def test_c1_pressure_oracles(criterion):
    t0 = time.perf_counter()
    p2 = pressure(doubling_map(), N=N_FULL)
    pg = pressure(golden_mean_map(), N=N_FULL)
    elapsed = time.perf_counter() - t0
    oracle_g = math.log(spectral_radius([[1, 1], [1, 0]]))
    ok = [
        criterion(1, "doubling log 2", abs(p2 - math.log(2)) <= 1e-10, f"|err| = {abs(p2 - math.log(2)):.2e}"),
        criterion(1, "golden mean vs 2x2 oracle", abs(pg - oracle_g) <= 1e-8, f"|err| = {abs(pg - oracle_g):.2e}"),
        criterion(1, "runtime < 10 s", elapsed < 10, f"{elapsed:.2f} s"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 2

def test_c2_locally_constant_reduction(criterion):
    rng = np.random.default_rng(2)
    shapes = [np.ones((2, 2), int), np.ones((3, 3), int), np.array([[1, 1], [1, 0]]), np.array([[1, 1, 0], [0, 1, 1], [1, 1, 1]])]
    worst = 0.0
    for trial in range(20):
        A = shapes[trial % len(shapes)]
        vals = rng.uniform(-2, 2, size=A.shape[0])
        sys = linear_markov_map(A)
        g = GridFunction.per_symbol(grid_for(sys, 256), vals)
        lam = leading_eigen(sys, g).lam
        oracle = spectral_radius((A * np.exp(vals)[:, None]).T)
        assert locally_constant_oracle(SubshiftSpec(A), vals) == pytest.approx(oracle, rel=1e-12)
        worst = max(worst, abs(lam / oracle - 1))
    assert criterion(2, "20 random potentials, k <= 3", worst <= 1e-8, f"max rel err = {worst:.2e}")


# ---------------------------------------------------------------- 3

@pytest.mark.parametrize("f_amp", [0.0, 0.3])
def test_c3_normalization_fixed_point(criterion, f_amp):
    sys = doubling_map(cosine_roof())
    grid = grid_for(sys, N_FULL)
    f = None if f_amp == 0 else GridFunction.from_callable(grid, lambda x: f_amp * np.sin(2 * np.pi * x))
    P = solve_P(sys, f, N=N_FULL)
    h = leading_eigen(sys, f, N=N_FULL, roof_coeff=P).eigenfunction
    res = op_norm_estimate(sys, WeightSpec(f, P), 30, seeds=[h])
    err = abs(res.rho_hat - 1)
    assert criterion(3, f"f = {f_amp} sin(2 pi x), eigenfunction seed", err <= 1e-6, f"P = {P:.12f}, |rhoHat - 1| = {err:.2e}")


# ---------------------------------------------------------------- 4

def test_c4_dyadic_cylinders(criterion):
    tables = cylinder_tables(doubling_map(), 14)
    err = max(float(np.max(np.abs(t.diam - 2.0 ** -(m + 1)))) for m, t in enumerate(tables))
    rep = check_theorem42(doubling_map(), 14)
    ok = [
        criterion(4, "diameters 2^-(m+1) to depth 14", err <= 1e-12, f"max |err| = {err:.1e}"),
        criterion(4, "rhoA = 0.5, p0 = 1 exactly", rep.rhoA == 0.5 and rep.p0 == 1, f"rhoA = {rep.rhoA!r}, p0 = {rep.p0}"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 5

def test_c5_nonlinear_cylinders(criterion):
    sys = perturbed_doubling(0.5)
    t0 = time.perf_counter()
    # words of 1..12 symbols, i.e. cylinder-lengths 0..11: 2^13 - 2 cylinders
    fit = fit_lemma41(sys, 11)
    consts = ExpansionConstants(1.0, 1.5, 2.5)
    expansion = verify_expansion(sys, consts, 11, pairs_per_depth=500)
    rep = check_theorem42(sys, 13)
    elapsed = time.perf_counter() - t0
    mins = np.array(rep.depth_min[2:13])
    spread = float((mins.max() - mins.min()) / mins.min())
    ok = [
        criterion(5, "analytic (c0, gamma, gamma1) = (1, 1.5, 2.5)",
                  (sys.gamma, sys.gamma1) == pytest.approx((1.5, 2.5), abs=1e-12) and expansion.holds,
                  f"gamma = {sys.gamma}, gamma1 = {sys.gamma1}, sampled slack {expansion.min_lower_slack:.3g}"),
        criterion(5, "cylinder diameter bounds on all 2^13 - 2 cylinders",
                  fit.cylinders == 2**13 - 2 and fit.violations == 0,
                  f"{fit.cylinders} cylinders, {fit.violations} violations, C1 = {fit.C1}, rho1 = {fit.rho1:.6f}"),
        criterion(5, "co-length-1 min ratio spread < 15% over depths 2..12", spread < 0.15, f"spread = {spread:.4f}"),
        criterion(5, "runtime < 60 s", elapsed < 60, f"{elapsed:.2f} s"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 6

def test_c6_eventually_contracting_scan(criterion):
    sys = doubling_map(cosine_roof(1.0, 0.2))
    t0 = time.perf_counter()
    rep = spectral_scan(sys, None, [-0.01, 0.0, 0.01], [10.0, 20.0, 50.0, 100.0, 200.0], 30, N=N_FULL)
    lattice = spectral_scan(doubling_map(constant_roof(1.0)), None, [0.0], [2 * math.pi], 30, N=N_FULL, min_abs_b=0.0)
    elapsed = time.perf_counter() - t0
    worst = max(c.rho_hat for c in rep.cells)
    lat = lattice.cells[0].rho_hat
    ok = [
        criterion(6, "every cell rhoHat < 1", worst < 1, f"max rhoHat = {worst:.4f} over {len(rep.cells)} cells"),
        criterion(6, "fitted (C, rho, eps) dominate", rep.dominates(), f"C = {rep.C:.3g}, rho = {rep.rho:.4f}, eps = {rep.eps:.3f}"),
        criterion(6, "lattice control rhoHat >= 0.999", lat >= 0.999, f"rhoHat = {lat:.6f}, verdict {lattice.verdict!r}"),
        criterion(6, "runtime < 15 min", elapsed < 900, f"{elapsed:.2f} s"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 7

def test_c7_lyapunov_oracles(criterion):
    x2 = np.random.default_rng(7).random(2)
    x4 = np.random.default_rng(7).random(4)
    cat = lyapunov_exponents(cat_map(), x2, 500)
    blk = exponentials(lyapunov_exponents(block_map(), x4, 500))
    ref_cat = math.log((3 + 5**0.5) / 2)
    ref_blk = sorted(max(np.abs(np.linalg.eigvals(np.array(B, dtype=float)))) for B in ([[2, 1], [1, 1]], [[3, 1], [2, 1]]))
    lad = build_ladder([2.0, 5.0])
    # direct substitution at lambda = (2, 5): nu0 = (1 + 2)/2, nu1, nu2 at thirds of [2, 5],
    # gamma = max(nu0/lambda1, nu1/nu2), and the binding constraint nu2 e^{8 mu} < lambda2
    ladder_ref = {"nu0": 1.5, "nu1": 3.0, "nu2": 4.0, "gamma": max(1.5 / 2, 3 / 4), "mu_max": math.log(5 / 4) / 8}
    got = {k: getattr(lad, k) for k in ladder_ref}
    ladder_err = max(abs(got[k] - v) for k, v in ladder_ref.items())
    ok = [
        criterion(7, "cat map exponent", abs(cat[0] - ref_cat) <= 1e-6, f"|err| = {abs(cat[0] - ref_cat):.2e}"),
        criterion(7, "4D block expanding exponents",
                  np.max(np.abs(np.log(blk[:2]) - np.log(ref_blk))) <= 1e-6,
                  f"|err| = {np.max(np.abs(np.log(blk[:2]) - np.log(ref_blk))):.2e}"),
        criterion(7, "ladder on (2, 5)",
                  ladder_err <= 1e-6 and lad.violations() == [],
                  f"nu = ({got['nu0']}, {got['nu1']}, {got['nu2']}), gamma = {got['gamma']}, muMax = {got['mu_max']:.7f}"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 8

def test_c8_linearization_ratio(criterion):
    exact = [r["ratio"] for r in linearization_sweep(block_map(), count=20, p_max=20, target=1e-4, seed=80)]
    rows = linearization_sweep(block_map(0.02), count=100, p_max=20, target=1e-4, seed=8)
    inside = sum(r["in_bounds"] for r in rows)
    ratios = [r["ratio"] for r in rows]
    ok = [
        criterion(8, "eps = 0 ratio exactly 1", all(r == 1.0 for r in exact), f"{len(exact)} random (z, p, v), distinct values {sorted(set(exact))}"),
        criterion(8, "eps = 0.02, 100 cells in [1/2, 2]", inside == 100,
                  f"{inside}/100 in bounds, ratios in [{min(ratios):.6f}, {max(ratios):.6f}]"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 9

def test_c9_stable_ball_ratio(criterion):
    rng = np.random.default_rng(9)
    lin = stable_ball_ratio(cat_map(), rng.random(2), 0.002, 0.01, 30)
    lin_err = float(np.max(np.abs(lin.ratios - 5.0)))
    baseline = 0.01 / 0.002
    max_ratio, trend_ok = 0.0, True
    worst_trend = 0.0
    for _ in range(20):
        r = stable_ball_ratio(cat_map(0.03), rng.random(2), 0.002, 0.01, 30).ratios
        max_ratio = max(max_ratio, float(r.max()))
        first, last = r[:10].max(), r[-10:].max()
        worst_trend = max(worst_trend, last / first)
        trend_ok &= last <= 1.2 * first
    ok = [
        criterion(9, "eps = 0 ratio = delta2/delta1", lin_err <= 1e-9, f"max |err| = {lin_err:.1e}"),
        criterion(9, "eps = 0.03 max within 3x baseline", max_ratio <= 3 * baseline, f"max ratio = {max_ratio:.6f}"),
        criterion(9, "no growth trend (last third <= 1.2 x first third)", trend_ok, f"worst last/first = {worst_trend:.6f}"),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 10

DOUBLING_UNIT = doubling_map(constant_roof(1.0))


def test_c10_census_necklace(criterion):
    c = census(DOUBLING_UNIT, 6.0)
    oracle = sum(primitive_necklaces(2, n) for n in range(1, 7))
    assert criterion(10, "pi(6) = necklace oracle", c.count(6.0) == oracle == 23, f"pi(6) = {c.count(6.0)}, oracle {oracle}")


def test_c10_zeta_closed_form(criterion):
    c = census(DOUBLING_UNIT, 12.0)
    z = zeta_partial(c, 1.0, hT=math.log(2))
    # exp(sum_n trace(A^n) e^{-sn} / n) for the full 2-shift with unit roof
    closed = 1.0 / (1.0 - 2.0 * math.exp(-1.0))
    err = abs(z.value - closed)
    assert criterion(10, "zeta_partial(s=1, lambdaMax=12) vs closed form", err <= 1e-3,
                     f"partial {z.value.real:.6f}, closed {closed:.6f}, |err| = {err:.2e}, log tail bound {z.tail_bound:.3g}")


def test_c10_entropy_scaling(criterion):
    h1 = entropy(DOUBLING_UNIT)
    h2 = entropy(doubling_map(constant_roof(2.0)))
    err = abs(h2 - h1 / 2)
    assert criterion(10, "entropy(tau = 2) = entropy(tau = 1)/2", err <= 1e-9, f"|err| = {err:.1e}")


def test_c10_pi_vs_li_envelope(criterion):
    sys = doubling_map(cosine_roof())
    c = census(sys, 12.0)
    h = entropy(sys)
    table = pi_vs_li(c, h, np.linspace(6.0, 12.0, 25))
    env = [round(v, 4) for _, v in table.envelope]
    assert criterion(10, "non-lattice envelope non-increasing on [6, 12]", table.envelope_nonincreasing, f"windows {env}")


def test_c10_li_oracle():
    for x in (10.0, 1e3, 1e6):
        assert li(x) == pytest.approx(float(mpmath.li(x) - mpmath.li(2)), abs=1e-10 * max(1.0, x / 1e6))


# ---------------------------------------------------------------- 11

DETERMINISM_CONFIGS = {
    "scan": '[system]\nbuiltin = "doubling"\nroof = { kind = "cosine", base = 1.0, amplitude = 0.2 }\n'
            "[task.scan]\nN = 1024\nm = 20\n",
    "bowen": '[system]\nbuiltin = "cat2d"\neps = 0.03\n[task.bowen]\nbasepoints = 4\nn = 15\n',
    "linearization": '[system]\nbuiltin = "block4d"\neps = 0.02\n[task.linearization]\ncount = 10\n',
}


def test_c11_determinism(criterion, tmp_path):
    same = True
    for name, text in DETERMINISM_CONFIGS.items():
        cfg = tmp_path / f"{name}.toml"
        cfg.write_text(text)
        snapshots = []
        for run, threads in enumerate(("1", "2", "1")):
            out = tmp_path / f"{name}-{run}"
            assert main(["--config", str(cfg), "--out", str(out), "--seed", "11", "--threads", threads]) == 0
            snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same &= snapshots[0] == snapshots[1] == snapshots[2]
        json.loads(snapshots[0][f"{name}.json"])
    assert criterion(11, "byte-identical reports, threads 1/2/1", same, f"tasks {sorted(DETERMINISM_CONFIGS)}")
