import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernadapt.errors import InputError
from kernadapt.files import load_model
from kernadapt.harness import (
    ExperimentConfig,
    QuadraticParams,
    build_samples,
    eval_grid,
    make_dataset,
    quadratic_roots,
    root,
    run_adaptive_experiment,
    run_nw_experiment,
    sample_feasible,
)
from kernadapt.kernels import KernelSpec
from kernadapt.modelsel import common_width_init, sup_error_grid
from kernadapt.nadaraya import NwEstimator
from kernadapt.optim import SigmaOptConfig

feasible = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).filter(lambda p: p[0] ** 2 - 4 * p[1] >= 0)


def test_roots_examples():
    assert quadratic_roots(0.0, -1.0) == (1.0, -1.0)
    assert quadratic_roots(2.0, 1.0) == (-1.0, -1.0)
    with pytest.raises(InputError):
        quadratic_roots(0.0, 1.0)


def test_tiny_negative_discriminant_is_a_double_root():
    b = 0.25 + 1e-13 / 4
    assert quadratic_roots(1.0, b) == (-0.5, -0.5)
    with pytest.raises(InputError):
        quadratic_roots(1.0, 0.25 + 1e-11)


@settings(max_examples=100, deadline=None)
@given(feasible)
def test_vieta_identities_and_ordering(p):
    a, b = p
    hi, lo = quadratic_roots(a, b)
    assert hi >= lo
    assert hi * lo == pytest.approx(b, abs=1e-10)
    assert hi + lo == pytest.approx(-a, abs=1e-10)
    for x in (hi, lo):
        assert abs(x * x + a * x + b) < 1e-10


def test_sample_feasible_contract():
    pts = sample_feasible(100, 7)
    assert len(pts) == 100
    assert all(-2 <= p.a <= 2 and -2 <= p.b <= 2 and p.feasible for p in pts)
    assert pts == sample_feasible(100, 7)
    assert pts != sample_feasible(100, 8)
    with pytest.raises(InputError):
        sample_feasible(0, 1)


def test_sample_feasible_accepts_seed_sequences():
    seq = np.random.SeedSequence([3, 1])
    assert sample_feasible(5, seq) == sample_feasible(5, np.random.SeedSequence([3, 1]))


def test_make_dataset_rows():
    plus = make_dataset([QuadraticParams(0.0, -1.0)], "plus")
    minus = make_dataset([QuadraticParams(0.0, -1.0)], "minus")
    assert plus.points.tolist() == [[0.0, -1.0]] and plus.targets.tolist() == [[1.0]]
    assert minus.targets.tolist() == [[-1.0]]
    assert make_dataset(sample_feasible(10, 0)).dimension == 2
    with pytest.raises(InputError):
        make_dataset([QuadraticParams(0.0, 1.0)])
    with pytest.raises(InputError):
        root("sideways")


def test_grid_corners():
    assert sorted(map(tuple, eval_grid(2))) == [(-2.0, -2.0), (2.0, -2.0)]


def test_grid_points_feasible_and_lattice_count():
    grid = eval_grid(101)
    assert np.all(grid[:, 0] ** 2 - 4 * grid[:, 1] >= -1e-12)
    # node (i, j) is (a, b) = ((i - 50) / 25, (j - 50) / 25); feasibility in integers
    count = sum(1 for i in range(101) for j in range(101) if (i - 50) ** 2 - 100 * (j - 50) >= 0)
    assert len(grid) == count
    with pytest.raises(InputError):
        eval_grid(1)


def test_config_validation():
    for bad in (dict(m=1), dict(grid_resolution=1), dict(method="svm"), dict(branch="up"),
                dict(test_mode="later"), dict(iterations=-1)):
        with pytest.raises(InputError):
            ExperimentConfig(**bad)


def test_test_modes_draw_distinct_samples():
    train, test, holdout = build_samples(ExperimentConfig(m=20, seed=3))
    assert not np.array_equal(train.points, test.points)
    assert not np.array_equal(test.points, holdout.points)
    tr2, te2, _ = build_samples(ExperimentConfig(m=20, seed=3, test_mode="indices"))
    both = sample_feasible(40, 3)
    assert tr2.points.tolist() == [[p.a, p.b] for p in both[:20]]
    assert te2.points.tolist() == [[p.a, p.b] for p in both[20:]]


def test_nw_experiment_rows_and_full_neighborhood():
    cfg = ExperimentConfig(m=30, seed=2, k_values=(3, 30), grid_resolution=41)
    report = run_nw_experiment(cfg)
    assert [k for k, _ in report.rows] == [3, 30]
    train, _, _ = build_samples(cfg)
    est = NwEstimator(train, KernelSpec.common(common_width_init(train.points), 2))
    assert report.rows[1][1] == sup_error_grid(est, root("plus"), eval_grid(41))


def test_nw_experiment_files_are_deterministic(tmp_path):
    cfg = ExperimentConfig(m=40, seed=9, grid_resolution=31)
    run_nw_experiment(cfg, tmp_path / "a")
    run_nw_experiment(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["grid_k10.csv", "grid_k3.csv", "nw_summary.csv", "train.csv"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _small(method, **kw):
    base = dict(method=method, m=25, seed=1, grid_resolution=31, iterations=2,
                opt=SigmaOptConfig(method="simplex_per_point", max_evaluations=150)
                if method == "adaptive_per_point" else None)
    base.update(kw)
    return ExperimentConfig(**base)


def test_adaptive_zero_iterations_before_equals_after():
    report = run_adaptive_experiment(_small("adaptive_per_point", iterations=0))
    assert report.delta_before == report.delta_after
    assert np.array_equal(report.model_before.weights, report.model_after.weights)


@pytest.mark.parametrize("method", ["rkhs", "adaptive_common", "adaptive_per_point"])
def test_adaptive_outputs_match_persisted_models(method, tmp_path):
    cfg = _small(method)
    report = run_adaptive_experiment(cfg, tmp_path)
    truth, grid = root("plus"), eval_grid(31)
    after = load_model(tmp_path / "model_after.json")
    before = load_model(tmp_path / "model_before.json")
    assert abs(sup_error_grid(after, truth, grid) - report.delta_after) <= 1e-12
    assert abs(sup_error_grid(before, truth, grid) - report.delta_before) <= 1e-12
    assert (tmp_path / "summary.json").exists() and (tmp_path / "grid_after.csv").exists()
    if method != "rkhs":
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "iter,objective,train_sup,test_sup" and len(lines) == 4


def test_adaptive_sweep_outputs_are_deterministic(tmp_path):
    cfg = _small("adaptive_common", lambda_grid=(1e-4, 1e-3, 1e-2))
    r1 = run_adaptive_experiment(cfg, tmp_path / "a")
    run_adaptive_experiment(cfg, tmp_path / "b")
    assert r1.lam == r1.sweep.selected_lambda
    for name in r1.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "sweep.csv" in r1.files


def test_adaptive_rejects_nw():
    with pytest.raises(InputError):
        run_adaptive_experiment(ExperimentConfig(method="nw"))


def test_minus_branch():
    report = run_nw_experiment(ExperimentConfig(m=30, branch="minus", grid_resolution=21))
    assert all(0 < d < 3 for _, d in report.rows)
    assert math.isfinite(report.width)
