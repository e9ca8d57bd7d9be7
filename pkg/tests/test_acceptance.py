"""Acceptance criteria, each checked at its stated tolerance and runtime budget.

Every test appends one ``PASS``/``FAIL`` line to ``RESULTS``; the lines are
printed in the terminal summary (see ``conftest.py``) and also immediately,
visible with ``pytest -s``.  Running this file as a script prints them too.
"""
import itertools
import math
import time

import numpy as np
import pytest

from lentparticle.config_space import PowerLawLevy, DiracLevy, ProcessSpec, child_seed, make_rng
from lentparticle.density import (det_lower_bound, isotropic_gamma, isotropy_check,
                                  jump_sequence_to_zero, kde_estimate, nondegeneracy_survey,
                                  poisson_two_point_bound, prop4_span_test,
                                  sample_isotropic_endpoint)
from lentparticle.lent import (gamma_total, gamma_total_oracle, make_exp, make_linear,
                               make_polar_jump_sum, relative_error, sharp_sample)
from lentparticle.marks import CircleMarkSpace
from lentparticle.sde import (euler_solve, flat_sde_sample, gamma_sde, lemma3_moment_check,
                              preset, prop4_fields, sample_driver)
from tests.conftest import random_circle_config

RESULTS: list[str] = []
SPACE = CircleMarkSpace()
X0 = np.array([0.4, -0.3])


def record(number, title, ok, detail, elapsed, budget):
    ok = bool(ok and elapsed < budget)
    line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}; "
            f"runtime {elapsed:.2f}s (budget {budget:g}s)")
    RESULTS.append(line)
    print(line)
    return ok


def f_scalar(base, theta):
    return base.attribute[0] * math.sin(theta) + 0.3 * math.cos(2 * theta)


def configs(seed, n=100, n_max=8):
    rng = make_rng(seed)
    return [random_circle_config(rng, n_max=n_max) for _ in range(n)]


def se_check(x, G):
    """Entrywise 3-standard-error comparison of the empirical second moment and mean."""
    n = len(x)
    d = np.diag(G)
    se = np.sqrt((np.outer(d, d) + G ** 2) / n)
    emp = x.T @ x / n
    cov_ok = np.abs(emp - G) <= 3 * se
    mean_ok = np.abs(x.mean(axis=0)) <= 3 * np.sqrt(d / n)
    worst = float(np.max(np.abs(emp - G) / np.where(se > 0, se, np.inf)))
    return bool(np.all(cov_ok) and np.all(mean_ok)), worst


def test_c01_oracle_equivalence():
    start = time.perf_counter()
    functionals = {"N(f)": make_linear(f_scalar), "exp(-N(f))": make_exp(f_scalar),
                   "polar jump sum": make_polar_jump_sum(analytic=False)}
    worst = {}
    for name, F in functionals.items():
        worst[name] = max(relative_error(gamma_total(F, w, SPACE), gamma_total_oracle(F, w, SPACE))
                          for w in configs(101, 100))
    elapsed = time.perf_counter() - start
    ok = all(v <= 1e-12 for v in worst.values())
    detail = ", ".join(f"{k} max rel {v:.1e}" for k, v in worst.items())
    assert record(1, "lent particle vs in-place product construction", ok, detail, elapsed, 10)


def test_c02_closed_forms():
    start = time.perf_counter()
    lin, ex = make_linear(f_scalar), make_exp(f_scalar)
    worst_lin = worst_exp = 0.0
    for w in configs(102, 100):
        n_gamma = np.zeros((1, 1))
        for p in w:
            n_gamma = n_gamma + SPACE.gamma_one(lambda u, b=p.base: f_scalar(b, u), p.mark)
        worst_lin = max(worst_lin, relative_error(gamma_total(lin, w, SPACE), n_gamma))
        expected = math.exp(-2 * lin.eval(w)[0]) * n_gamma
        worst_exp = max(worst_exp, relative_error(gamma_total(ex, w, SPACE), expected))
    elapsed = time.perf_counter() - start
    ok = worst_lin <= 1e-10 and worst_exp <= 1e-10
    assert record(2, "Gamma[N(f)] = N(gamma f), Gamma[exp(-N f)] = exp(-2N f) N(gamma f)", ok,
                  f"max rel {worst_lin:.1e} / {worst_exp:.1e}", elapsed, 5)


def test_c03_gradient_isometry():
    start = time.perf_counter()
    F = make_polar_jump_sum()
    n = 100_000
    all_ok, worst = True, 0.0
    for k, w in enumerate(configs(103, 10, n_max=6)):
        G = gamma_total(F, w, SPACE)
        x = sharp_sample(F, w, SPACE, child_seed(103, k), size=n)
        ok, dev = se_check(x, G)
        all_ok &= ok
        worst = max(worst, dev)
    elapsed = time.perf_counter() - start
    assert record(3, "E[F# F#^T] = Gamma[F] over 1e5 draws, 10 configurations", all_ok,
                  f"worst deviation {worst:.2f} standard errors", elapsed, 60)


def test_c04_isotropic_closed_form_and_pair_bound():
    start = time.perf_counter()
    F = make_polar_jump_sum()
    rel, violations, pairs = 0.0, 0, 0
    for w in configs(104, 1000):
        G = gamma_total(F, w, SPACE)
        rel = max(rel, relative_error(isotropic_gamma(w), G))
        det = float(np.linalg.det(G))
        for p, q in itertools.combinations(w.points, 2):
            pairs += 1
            if det < det_lower_bound(p, q) - 1e-10:
                violations += 1
    elapsed = time.perf_counter() - start
    ok = rel <= 1e-10 and violations == 0
    assert record(4, "isotropic closed form and two-point determinant bound", ok,
                  f"max rel {rel:.1e}, {violations} violations in {pairs} pairs", elapsed, 30)


def test_c05_nondegeneracy_fraction():
    start = time.perf_counter()
    spec = ProcessSpec(1.0, PowerLawLevy(1.5), 1e-3)
    lam = spec.horizon * spec.truncated_mass
    # the isotropic closed form is used as Gamma; criterion 4 certifies it equals the assembly
    report = nondegeneracy_survey(None, spec, SPACE, 10_000, 1e-10, seed=105,
                                  gamma_fn=lambda w: isotropic_gamma(w, 1.0))
    bound = poisson_two_point_bound(lam)
    elapsed = time.perf_counter() - start
    ok = report.fraction >= bound - 3 * report.stderr
    assert record(5, "fraction with det Gamma > 1e-10 vs Poisson two-point bound", ok,
                  f"fraction {report.fraction:.4f}, bound {bound:.6f}, Lambda {lam:.2f}",
                  elapsed, 60)


def test_c06_isotropy_of_law():
    start = time.perf_counter()
    spec = ProcessSpec(1.0, DiracLevy((1.0,), (5.0,)), 1e-3)
    samples = sample_isotropic_endpoint(spec, 100_000, 106)
    report = isotropy_check(kde_estimate(samples), [1.0], n_angles=64, tol=0.1)
    elapsed = time.perf_counter() - start
    assert record(6, "KDE angular deviation on the unit circle", report.passed,
                  f"max relative deviation {report.max_deviation:.3f}", elapsed, 120)


def test_c07_discrete_ito_isometry():
    start = time.perf_counter()
    names = ["additive", "linear", "rotation", "nonlinear", "jump_dependent"]
    all_ok, worst, additive_err = True, 0.0, None
    for k, name in enumerate(names):
        c = preset(name)
        path = sample_driver(64, c.noise_dim, 1.0, child_seed(107, k, 0))
        flow = euler_solve(c, X0, path)
        G = gamma_sde(c, X0, path, flow=flow)
        x = flat_sde_sample(c, X0, path, child_seed(107, k, 1), size=100_000, flow=flow)
        ok, dev = se_check(x, G)
        all_ok &= ok
        worst = max(worst, dev)
        if name == "additive":
            s = c.sigma(X0, X0)
            additive_err = float(np.max(np.abs(G - s @ s.T * path.horizon)))
            all_ok &= additive_err <= 1e-12
    elapsed = time.perf_counter() - start
    assert record(7, "flat_sde_sample covariance vs gamma_sde, 5 presets", all_ok,
                  f"worst {worst:.2f} standard errors, additive exact error {additive_err:.1e}",
                  elapsed, 120)


def test_c08_flow_consistency():
    start = time.perf_counter()
    eps, worst = 1e-6, 0.0
    for k, name in enumerate(["linear", "rotation", "nonlinear", "jump_dependent"]):
        c = preset(name)
        path = sample_driver(1024, c.noise_dim, 1.0, child_seed(108, k))
        flow = euler_solve(c, X0, path)
        for h in np.eye(c.dim):
            fd = (euler_solve(c, X0, path, start=X0 + eps * h).terminal - flow.terminal) / eps
            worst = max(worst, relative_error(flow.jacobian[-1] @ h, fd))
    elapsed = time.perf_counter() - start
    assert record(8, "K_T h vs finite-difference flow derivative at dt = T/1024", worst < 1e-3,
                  f"max rel {worst:.1e}", elapsed, 30)


def test_c09_moment_bound():
    start = time.perf_counter()
    grid = [np.array([0.6, 0.8]) * 10.0 ** -k for k in range(5)]
    cases = {"linear": preset("linear"),
             "linear, non-commuting": preset("linear", drift=-0.2,
                                             matrices=[[[0.4, 0.3], [-0.2, 0.5]],
                                                       [[0.1, -0.6], [0.5, 0.2]]])}
    ok, details = True, []
    for k, (name, c) in enumerate(cases.items()):
        rep = lemma3_moment_check(c, 1.0, grid, 4000, child_seed(109, k))
        ok &= rep.variation[2] < 0.2 and rep.bounded
        details.append(f"{name}: variation {rep.variation[2]:.1e}, k {rep.k:.3f}")
    elapsed = time.perf_counter() - start
    assert record(9, "E|X_t^x|^2/|x|^2 over 4 decades", ok, "; ".join(details), elapsed, 60)


def test_c10_span_rank():
    start = time.perf_counter()
    full = ["linear", "rotation", "nonlinear", "additive", "jump_dependent"]
    counts = {}
    for k, name in enumerate(full + ["constant_deficient"]):
        c = preset(name)
        ranks = [prop4_span_test(prop4_fields(c), jump_sequence_to_zero(c.dim, 25, child_seed(110, k, j)))
                 for j in range(20)]
        target = (lambda r: r == c.dim) if name in full else (lambda r: r < c.dim)
        counts[name] = sum(target(r) for r in ranks)
    elapsed = time.perf_counter() - start
    ok = all(v == 20 for v in counts.values())
    detail = ", ".join(f"{k} {v}/20" for k, v in counts.items())
    assert record(10, "span rank m for full-rank presets, < m for the deficient one", ok, detail,
                  elapsed, 5)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                pass
