"""Acceptance gate: one PASS/FAIL line per criterion, printed in the summary."""

import time
from pathlib import Path

import numpy as np

from mudnf import admissibility as adm
from mudnf import dichotomy, growth, linear, nonuniform
from mudnf.errors import AdmissibilityDivergence
from mudnf.homological import ConjugationMap
from mudnf.nonlinearity import PolynomialNonlinearity, gaussian_profile
from mudnf.resonance import check_nonresonance
from mudnf.scenario import load_scenario
from mudnf.transform import (SAMPLE_TIMES, TransformedSystem, conjugacy_residual, eliminate_term,
                             fitted_table, normal_form)

import oracles

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def scalar_map(psi=None, profile=None, mode="uniform"):
    op = linear.EvolutionOperator(linear.BlockSystem([linear.ConstantBlock([[-1.0]])]))
    term = [[1.0]] if profile is None else ([[1.0]], profile)
    nl = PolynomialNonlinearity((1,), {(1, (2,)): term}, psi=psi or adm.bounded_const(2.0))
    return ConjugationMap(op, nl, [(-1.0, -1.0)], 1, (2,), mode=mode)


def two_block_map():
    sys = linear.BlockSystem([linear.ConstantBlock([[-1.0]]), linear.ConstantBlock([[1.0]])])
    nl = PolynomialNonlinearity((1, 1), {(1, (0, 2)): np.ones((1, 1, 1))}, psi=adm.bounded_const(2.0))
    return ConjugationMap(linear.EvolutionOperator(sys), nl, [(-1.0, -1.0), (1.0, 1.0)], 1, (0, 2))


def test_01_spectrum_recovery(report):
    t0 = time.perf_counter()
    op = linear.EvolutionOperator(linear.BlockSystem(
        [linear.ConstantBlock([[-1.0]]), linear.ConstantBlock([[1.0]])]), growth.exponential())
    sp = dichotomy.compute_spectrum(op, window=(-5.0, 5.0), tol=0.05)
    elapsed = time.perf_counter() - t0
    phi_err = max(float(np.max(np.abs(op.evolve(t, s) - oracles.phi_diagonal([-1, 1], t, s))))
                  for t, s in [(2.0, -1.0), (-3.0, 1.5), (0.5, 0.0)])
    near = (sp.n == 2 and all(c - 0.05 <= a and b <= c + 0.05
                              for (a, b), c in zip(sp.intervals, (-1.0, 1.0))))
    ranks = sp.gap_ranks == (0, 1, 2)
    ok = near and ranks and elapsed < 60 and phi_err < 1e-10
    report(1, "spectrum recovery", ok,
           f"intervals={[tuple(round(v, 4) for v in i) for i in sp.intervals]} ranks={sp.gap_ranks} "
           f"phi_err={phi_err:.1e} time={elapsed:.1f}s")
    assert ok


def test_02_shift_equivariance(report):
    tol = 0.05
    worst = 0.0
    for rate in (growth.exponential(), growth.polynomial()):
        base = linear.BlockSystem([linear.gamma_shift_block(rate, -1.0), linear.gamma_shift_block(rate, 1.0)])
        ref = dichotomy.compute_spectrum(linear.EvolutionOperator(base, rate), rate, (-5, 5), tol)
        for g0 in (-1.0, 0.5):
            sp = dichotomy.compute_spectrum(
                linear.EvolutionOperator(linear.shifted(base, rate, g0), rate), rate, (-5, 5), tol)
            assert sp.n == ref.n
            for (a, b), (a0, b0) in zip(sp.intervals, ref.intervals):
                worst = max(worst, abs(a - (a0 - g0)), abs(b - (b0 - g0)))
    ok = worst <= 2 * tol
    report(2, "shift equivariance", ok, f"max endpoint deviation {worst:.4f} (limit {2 * tol})")
    assert ok


def test_03_closed_form_h(report):
    cm = scalar_map()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        t = rng.uniform(-5.0, 5.0)
        x = rng.uniform(-1.0, 1.0) * cm.trumpet_radius(t)
        worst = max(worst, abs(float(cm.h_eval(t, [x])[0]) - x * x))
    ok = worst <= 1e-6
    report(3, "closed-form h", ok, f"max |h - x^2| = {worst:.2e} over 50 points")
    assert ok


def _elimination_shift(sc_name):
    sc = load_scenario(SCENARIOS / f"{sc_name}.yaml")
    op = sc.operator()
    j, k = sc.target()
    G = eliminate_term(op, sc.nonlinearity, sc.spectrum["intervals"], j, k, rate=sc.rate,
                       mode=sc.options.get("mode", "admissible"))
    rows = fitted_table(G.eval, G.dims, range(1, sum(k) + 1), SAMPLE_TIMES, domain_radius=G.domain_radius)
    target, other = 0.0, 0.0
    for t, jj, kk, after, _ in rows:
        before = float(np.max(np.abs(sc.nonlinearity.taylor_coeff(jj, kk, t)))) if sum(kk) >= 2 else 0.0
        if (jj, tuple(kk)) == (j, tuple(k)):
            target = max(target, after)
        else:
            other = max(other, abs(after - before))
    return target, other


def test_04_elimination(report):
    parts = []
    ok = True
    for name in ("scalar_normal_form", "two_block_eliminate"):
        target, other = _elimination_shift(name)
        ok &= target <= 1e-5 and other <= 1e-5
        parts.append(f"{name}: target={target:.1e} other={other:.1e}")
    report(4, "elimination", ok, "; ".join(parts))
    assert ok


def test_05_conjugacy(report):
    worst = 0.0
    for cm in (scalar_map(), scalar_map(adm.gaussian(2.0), gaussian_profile(1.0))):
        ts = TransformedSystem(cm)
        t0 = 0.0
        res = conjugacy_residual(ts, t0, [0.5 * cm.trumpet_radius(t0)], horizon=5.0)
        worst = max(worst, res.forward, res.reverse)
    ok = worst <= 1e-4
    report(5, "conjugacy", ok, f"max residual (both directions) {worst:.2e}")
    assert ok


def test_06_inverse_map(report):
    rng = np.random.default_rng(6)
    round_trip, lip, iters, contraction = 0.0, 0.0, 0, 0.0
    for cm in (scalar_map(), scalar_map(adm.gaussian(2.0), gaussian_profile(1.0))):
        rho = cm.tubular_radius()
        ts = rng.uniform(-4.0, 4.0, 1000)
        # in-domain means inside the image H(t, T_rho)
        y1 = [float(cm.H_eval(t, [x])[0]) for t, x in zip(ts, rng.uniform(-rho, rho, 1000))]
        y2 = [float(cm.H_eval(t, [x])[0]) for t, x in zip(ts, rng.uniform(-rho, rho, 1000))]
        for t, a, b in zip(ts, y1, y2):
            ra = cm.H_inverse_detailed(t, [a])
            rb = cm.H_inverse_detailed(t, [b])
            round_trip = max(round_trip, abs(float(cm.H_eval(t, ra.x)[0]) - a))
            if a != b:
                lip = max(lip, abs(float(ra.x[0] - rb.x[0])) / abs(a - b))
            iters = max(iters, ra.iterations, rb.iterations)
            contraction = max(contraction, ra.contraction, rb.contraction)
    ok = round_trip <= 1e-8 and lip <= 2.0 and iters <= 60 and contraction <= 0.55
    report(6, "inverse map", ok, f"round trip {round_trip:.1e}, Lipschitz {lip:.3f}, "
                                 f"iterations {iters}, contraction {contraction:.3f}")
    assert ok


def test_07_normal_form(report):
    sc = load_scenario(SCENARIOS / "scalar_normal_form.yaml")
    t0 = time.perf_counter()
    res = normal_form(sc.operator(), sc.nonlinearity, sc.spectrum["intervals"], 3, rate=sc.rate)
    elapsed = time.perf_counter() - t0
    ok = len(res.transcript) == 2 and res.max_residual_coeff <= 1e-4 and elapsed < 300
    report(7, "normal form", ok, f"{len(res.transcript)} eliminations, max coefficient "
                                 f"{res.max_residual_coeff:.1e}, time {elapsed:.1f}s")
    assert ok


def test_08_admissibility(report):
    rate = growth.exponential()
    worst = 0.0
    for psi in (adm.gaussian(1.0), adm.exp_tent(1.0), adm.bounded_const(1.0)):
        for t in (-3.0, -0.4, 0.0, 1.3, 4.0):
            for delta in (0.5, 1.0):
                worst = max(worst,
                            abs(adm.zeta_plus(psi, rate, delta, t)
                                - oracles.zeta_fixed_grid(psi, oracles.log_mu_exponential, delta, t, +1)),
                            abs(adm.zeta_minus(psi, rate, delta, t)
                                - oracles.zeta_fixed_grid(psi, oracles.log_mu_exponential, delta, t, -1)))
    verdicts = [adm.check_uniform_admissibility(adm.bounded_const(1.0), rate, 0.5).uniform,
                adm.check_uniform_admissibility(adm.gaussian(1.0), rate, 0.5).uniform]
    try:
        adm.zeta_plus(adm.exp_growth(1.0), rate, 1.0, 0.0)
        diverged = False
    except AdmissibilityDivergence:
        diverged = True
    ok = worst <= 1e-8 and all(verdicts) and diverged
    report(8, "admissibility engine", ok, f"max oracle deviation {worst:.1e}; uniform verdicts {verdicts}; "
                                         f"e^|t| divergence reported: {diverged}")
    assert ok


def test_09_invariant_suites(report):
    failures = []
    rng = np.random.default_rng(9)
    rot = linear.EvolutionOperator(linear.BlockSystem([linear.rotating_block(), linear.oscillating_block()]))
    for _ in range(20):
        t, r, s = rng.uniform(-4, 4, 3)
        err = np.max(np.abs(rot.evolve(t, s) - rot.evolve(t, r) @ rot.evolve(r, s)))
        if err > 1e-6:
            failures.append(("cocycle", err))
        h = 1e-5
        dphi = (rot.evolve(s, t + h) - rot.evolve(s, t - h)) / (2 * h)
        err = np.max(np.abs(dphi + rot.evolve(s, t) @ rot.system.A(t)))
        if err > 1e-4:
            failures.append(("D_t Phi(s,t)", err))
    for cm in (scalar_map(adm.gaussian(2.0), gaussian_profile(1.0)), two_block_map()):
        d = cm.op.system.d
        for _ in range(20):
            t = rng.uniform(-3, 3)
            x = rng.normal(size=d)
            x *= 0.5 * cm.trumpet_radius(t) / np.linalg.norm(x)
            v = rng.normal(size=d)
            v /= np.linalg.norm(v)
            fd = oracles.central_difference(lambda e: cm.h_eval(t, x + e * v, check=False), 0.0, 1e-5)
            err = np.max(np.abs(fd - cm.d2h_eval(t, x, v)))
            if err > 1e-5:
                failures.append(("d2h", err))
            fd = oracles.central_difference(lambda s: cm.h_eval(s, x, check=False), t, 1e-5)
            err = np.max(np.abs(fd - cm.d1h_eval(t, x)))
            if err > 1e-4:
                failures.append(("d1h", err))
            if np.linalg.norm(cm.h_eval(t, x)) > cm.h_bound(t, x) * (1 + 1e-9):
                failures.append(("h bound", t))
            if np.linalg.norm(cm.d2h_matrix(t, x), 2) > cm.d2h_bound(t, x) * (1 + 1e-9):
                failures.append(("d2h bound", t))
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        ivs = []
        for _ in range(n):
            a = rng.uniform(-3, 3)
            ivs.append((a, a + rng.exponential(0.3)))
        k = tuple(int(v) for v in rng.multinomial(int(rng.integers(2, 5)), [1 / n] * n))
        j = int(rng.integers(1, n + 1))
        got = check_nonresonance(ivs, j, k)
        want, dist = oracles.resonance_oracle(ivs, j, k)
        if got.status.value != want or (dist is not None and abs(got.dist - dist) > 1e-12):
            failures.append(("resonance", ivs, j, k))
    ok = not failures
    report(9, "invariant suites", ok, f"{len(failures)} failures" + (f", first {failures[0]}" if failures else ""))
    assert ok


def test_10_nonuniform_consistency(report):
    sys = linear.BlockSystem([linear.ConstantBlock([[-1.0]]), linear.ConstantBlock([[1.0]])])
    op = linear.EvolutionOperator(sys)
    spectrum = dichotomy.Spectrum(((-1.0, -1.0), (1.0, 1.0)), (0, 1, 2))
    psi = adm.bounded_const(2.0)
    nl = PolynomialNonlinearity((1, 1), {(1, (0, 2)): np.ones((1, 1, 1)), (2, (2, 0)): np.ones((1, 1, 1))},
                                psi=psi)
    rate = op.rate
    worst = 0.0
    for j, k in ((1, (0, 2)), (2, (2, 0))):
        eps = nonuniform.pair_epsilon(spectrum, j, k)
        ctx = nonuniform.fit_nonuniform_context(op, spectrum, eps, mode="uniform").without_drift()
        cm = ConjugationMap(op, nl, spectrum, j, k, K=ctx.K, epsilon=eps)
        for t in (-2.0, 0.0, 1.5):
            x = np.full(2, 0.25 * cm.trumpet_radius(t))
            eta = (nonuniform.eta_plus if cm.direction > 0 else nonuniform.eta_minus)(ctx, rate, j, k, t)
            hb = nonuniform.nonuniform_h_bound(ctx, rate, psi, spectrum, j, k, t, x, sys.dims)
            xi = nonuniform.xi_nonuniform(ctx, rate, psi, spectrum, j, k, t)
            worst = max(worst, abs(eta - 1.0), abs(hb / cm.h_bound(t, x) - 1.0),
                        abs(xi / cm.trumpet_radius(t) - 1.0))
    ok = worst <= 0.01
    report(10, "nonuniform consistency", ok, f"max relative deviation {worst:.2e}")
    assert ok
