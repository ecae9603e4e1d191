"""End-to-end acceptance checks, one test per criterion."""

import math

import numpy as np
from scipy import integrate

from kernadapt.adaptive import alpha_step, alternate, objective_value
from kernadapt.data import Dataset
from kernadapt.files import load_model, save_model
from kernadapt.harness import (
    ExperimentConfig,
    make_dataset,
    quadratic_roots,
    run_adaptive_experiment,
    run_nw_experiment,
    sample_feasible,
)
from kernadapt.kernels import KernelSpec, eval_matrix, gram_l2, l2_inner, l2_inner_quadrature
from kernadapt.nadaraya import NwEstimator
from kernadapt.optim import SigmaOptConfig
from kernadapt.ridge import (
    FitConfig,
    fit_rkhs,
    rkhs_matrix,
    rkhs_objective,
    rkhs_optimal_value,
    smoothed_value,
)


def test_criterion_1_gram_oracle(criterion):
    with criterion(1, "closed-form L2 inner product vs quadrature", 10) as info:
        r = np.random.default_rng(1)
        worst = 0.0
        for t in range(50):
            n = 1 + t % 2
            ci, cj = r.uniform(-2, 2, n), r.uniform(-2, 2, n)
            si, sj = r.uniform(0.1, 2.0, 2)
            exact = l2_inner(ci, si, cj, sj)
            worst = max(worst, abs(exact - l2_inner_quadrature(ci, si, cj, sj)) / exact)
        info["note"] = f"max rel err {worst:.2e}"
        assert worst < 1e-6


def test_criterion_2_rkhs_closed_form(criterion):
    with criterion(2, "ridge optimal value and interpolation", 1) as info:
        worst_gap, worst_res = 0.0, 0.0
        for seed, m in enumerate((5, 20)):
            r = np.random.default_rng(seed)
            data = Dataset(r.uniform(-2, 2, (m, 2)), r.normal(size=m))
            spec = KernelSpec.common(0.7, 2)
            K = rkhs_matrix(data, spec)
            for variant in ("plain", "mean_scaled"):
                cfg = FitConfig(lam=0.05, variant=variant)
                alpha = fit_rkhs(data, spec, cfg).weights
                closed = rkhs_optimal_value(data, K, cfg)
                direct = rkhs_objective(data, K, alpha, cfg)
                worst_gap = max(worst_gap, abs(closed - direct) / abs(direct))
            alpha0 = fit_rkhs(data, spec, FitConfig(lam=0.0)).weights
            worst_res = max(worst_res, float(np.max(np.abs(data.targets - K @ alpha0))))
        info["note"] = f"rel gap {worst_gap:.1e}, interpolation residual {worst_res:.1e}"
        assert worst_gap <= 1e-10 and worst_res < 1e-8


def _accelerated_gradient(H, g, iterations=100_000):
    L = np.linalg.eigvalsh(H).max()
    x = y = np.zeros_like(g)
    t = 1.0
    for _ in range(iterations):
        x_new = y - (H @ y - g) / L
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
    return x


def test_criterion_3_exact_alpha_step(criterion):
    with criterion(3, "exact weight step vs gradient descent and the paper_literal step", 10) as info:
        lam = 0.05
        worst, margin = 0.0, np.inf
        for seed in range(3):
            data = make_dataset(sample_feasible(10, 300 + seed))
            spec = KernelSpec.per_point(np.random.default_rng(seed).uniform(0.5, 1.5, 10), 2,
                                        1e-3, 10.0)
            E = eval_matrix(data.points, spec, data.points)
            K = gram_l2(data.points, spec)
            oracle = _accelerated_gradient(E.T @ E + lam * K, E.T @ data.targets)
            exact = objective_value(data, alpha_step(data, spec, lam, "exact"), spec, lam)
            literal = objective_value(data, alpha_step(data, spec, lam, "paper_literal"), spec, lam)
            worst = max(worst, abs(exact - objective_value(data, oracle, spec, lam)))
            margin = min(margin, literal - exact)
            assert exact <= literal
        info["note"] = f"max gap to oracle {worst:.1e}, min literal-exact {margin:.2e}"
        assert worst <= 1e-6


def test_criterion_4_descent(criterion):
    with criterion(4, "alternation objective is non-increasing", 120) as info:
        train = make_dataset(sample_feasible(50, 0))
        _, trace = alternate(train, 0.005, 15, SigmaOptConfig(method="simplex_per_point"))
        obj = trace.objectives
        rise = float(np.max(np.diff(obj)))
        info["note"] = f"objective {obj[0]:.4g} -> {obj[-1]:.4g}, max step change {rise:.1e}"
        assert len(obj) == 16 and not trace.failed
        assert rise <= 1e-9


def test_criterion_5_nw_band(criterion):
    with criterion(5, "nearest-neighbor Nadaraya-Watson error band", 30) as info:
        report = run_nw_experiment(ExperimentConfig(method="nw", m=100, seed=0, k_values=(3, 10)))
        info["note"] = ", ".join(f"k={k}: {d:.4f}" for k, d in report.rows)
        assert all(0.2 <= d <= 2.0 for _, d in report.rows)


def test_criterion_6_common_width_gain(criterion):
    with criterion(6, "common-width adaptation halves the error", 120) as info:
        report = run_adaptive_experiment(
            ExperimentConfig(method="adaptive_common", m=100, seed=0, lam=1e-4))
        ratio = report.delta_after / report.delta_before
        info["note"] = (f"{report.delta_before:.4f} -> {report.delta_after:.4f}, "
                        f"ratio {ratio:.3f}")
        assert ratio <= 0.5


def test_criterion_7_per_point_adaptation(criterion, per_point_protocol):
    with criterion(7, "per-point adaptation and lambda selection", 300,
                   extra_seconds=per_point_protocol.seconds) as info:
        fixed, swept = per_point_protocol.fixed, per_point_protocol.sweep
        rows = swept.sweep.rows
        chosen = next(r for r in rows if r.selected)
        info["note"] = (f"{fixed.delta_before:.4f} -> {fixed.delta_after:.4f}; "
                        f"selected lambda {chosen.lam:.4g} test {chosen.test_sup:.4f} vs "
                        f"endpoints {rows[0].test_sup:.4f}, {rows[-1].test_sup:.4f}")
        assert len(rows) == 13
        assert fixed.delta_after <= fixed.delta_before
        assert chosen.test_sup <= rows[0].test_sup and chosen.test_sup <= rows[-1].test_sup


def test_criterion_8_mollifier_bound(criterion):
    with criterion(8, "kernel smoothing bound for f(x) = x", 5) as info:
        mean_abs, _ = integrate.quad(lambda z: abs(z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi),
                                     -math.inf, math.inf, epsabs=1e-14)
        worst = 0.0
        for sigma in (0.1, 0.05):
            bound = sigma * mean_abs + 1e-6
            for x in np.linspace(-1, 1, 21):
                err = abs(x - smoothed_value(lambda t: t, x, sigma, (-2.0, 2.0)))
                worst = max(worst, err / bound)
        info["note"] = f"max error / bound {worst:.2e}"
        assert worst <= 1.0


def test_criterion_9_property_suites(criterion, tmp_path):
    with criterion(9, "randomized property suites", 60) as info:
        r = np.random.default_rng(9)
        for _ in range(100):
            m = int(r.integers(1, 15))
            data = Dataset(r.uniform(-2, 2, (m, 2)), r.normal(size=(m, 2)))
            k = None if r.random() < 0.5 else int(r.integers(1, m + 1))
            est = NwEstimator(data, KernelSpec.common(float(r.uniform(0.05, 2)), 2), k=k)
            pred = est.predict(r.uniform(-3, 3, (10, 2)))
            tol = 1e-12 * (1 + np.ptp(data.targets, axis=0))
            assert np.all(pred >= data.targets.min(axis=0) - tol)
            assert np.all(pred <= data.targets.max(axis=0) + tol)

        for p in sample_feasible(100, 99):
            hi, lo = quadratic_roots(p.a, p.b)
            assert hi >= lo
            assert abs(hi * lo - p.b) <= 1e-10 and abs(hi + lo + p.a) <= 1e-10

        for _ in range(100):
            m = int(r.integers(1, 12))
            X = r.uniform(-2, 2, (m, 2))
            K = gram_l2(X, KernelSpec.per_point(r.uniform(0.1, 2, m), 2))
            assert np.array_equal(K, K.T)
            assert np.linalg.eigvalsh(K).min() > 0

        for seed in range(100):
            a = make_dataset(sample_feasible(10, seed))
            b = make_dataset(sample_feasible(10, seed))
            assert np.array_equal(a.points, b.points) and np.array_equal(a.targets, b.targets)
            spec = KernelSpec.common(0.5, 2)
            fa = fit_rkhs(a, spec, FitConfig(lam=1e-3)).predict(a.points)
            fb = fit_rkhs(b, spec, FitConfig(lam=1e-3)).predict(b.points)
            assert np.array_equal(fa, fb)

        for i in range(100):
            m = int(r.integers(1, 10))
            data = make_dataset(sample_feasible(m, 1000 + i))
            spec = KernelSpec.per_point(r.uniform(0.2, 1.0, m), 2, 1e-3, 10.0)
            model = fit_rkhs(data, KernelSpec.common(0.4, 2), FitConfig(lam=0.01)) if i % 2 else \
                alternate(data, 0.01, 0, SigmaOptConfig(), init_spec=spec)[0]
            path = tmp_path / f"m{i}.json"
            save_model(model, path)
            back = load_model(path)
            Q = r.uniform(-2, 2, (100, 2))
            assert np.array_equal(back.weights, model.weights)
            np.testing.assert_allclose(back.predict(Q), model.predict(Q), rtol=1e-15, atol=0)
        info["note"] = "5 suites x 100 instances"
