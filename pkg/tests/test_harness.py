"""Tests for tuning and benchmarking (src/harness.py)."""

import logging

import numpy as np
import pandas as pd
import pytest

from src import harness
from src.bag_io import write_bags_csv
from src.config import DEFAULT_C_GRID, DEFAULT_ZETA_GRID, ExperimentConfig
from src.estimators import Method, WeightMatrix, theory_gamma
from src.exceptions import ConfigurationError
from src.harness import (
    BenchReport,
    BenchRow,
    GaussianTrial,
    KernelTrial,
    build_trial,
    grid_edges,
    load_experiment_data,
    parameter_candidates,
    percent_decrease,
    run_benchmark,
    run_sweep,
    split_bags,
    task_bag_sizes,
    task_loss_records,
    tune,
)
from src.kernel_core import Bag, KernelSpec, estimator_loss
from src.random_streams import EVAL_STREAM, TUNE_STREAM

STB_CASES = [
    (Method.STB_ZERO, {"zeta": 2.0}),
    (Method.STB_WEIGHT, {"zeta": 2.0, "gamma": 0.3}),
    (Method.STB_THEORY, {"zeta": 2.0, "c": 0.5}),
]


@pytest.fixture
def gaussian_trial(small_gaussian_config):
    return build_trial(small_gaussian_config, TUNE_STREAM, 0)


@pytest.fixture
def kernel_trial(small_kme_config):
    return build_trial(small_kme_config, TUNE_STREAM, 0)


@pytest.fixture
def same_distribution_csv(temp_dir):
    """Eight bags of 60 samples, all from one two-dimensional Gaussian."""
    rng = np.random.default_rng(77)
    bags = [Bag(f"bag{i}", rng.standard_normal((60, 2))) for i in range(8)]
    path = temp_dir / "bags.csv"
    write_bags_csv(bags, path)
    return path


class TestGaussianTrial:
    """Test exact squared-error losses in the Gaussian setting."""

    def test_naive_loss_near_sigma_bar(self, gaussian_trial):
        """Test that the naive estimator's mean loss is about d / N."""
        assert gaussian_trial.loss(Method.NE, {}) == pytest.approx(30.0, rel=0.15)

    @pytest.mark.parametrize("method,params", STB_CASES)
    def test_shrinkage_statistics_match_weights(self, gaussian_trial, method, params):
        """Test the quadratic-in-gamma losses against explicit weights."""
        fast = gaussian_trial.task_losses(method, params)
        explicit = gaussian_trial.weight_losses(gaussian_trial.weights(method, params))
        np.testing.assert_allclose(fast, explicit, rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("method", [Method.MTA_CONST, Method.MTA_STB])
    def test_spectral_mta_matches_solve(self, gaussian_trial, method):
        """Test the eigenbasis grid against one linear solve per strength."""
        candidates = parameter_candidates(
            method, ExperimentConfig(setting="gaussian", mta_strength_grid=[0.25, 4.0]), zeta=2.0
        )
        fast = gaussian_trial.grid_losses(method, candidates)
        explicit = [gaussian_trial.loss(method, params) for params in candidates]
        np.testing.assert_allclose(fast, explicit, rtol=1e-8)

    def test_james_stein_loss(self, gaussian_trial):
        """Test that PP-James-Stein scores the explicit shrunk estimates."""
        weights = gaussian_trial.weights(Method.PP_JAMES_STEIN, {})
        np.testing.assert_allclose(
            gaussian_trial.task_losses(Method.PP_JAMES_STEIN, {}),
            gaussian_trial.weight_losses(weights),
            rtol=1e-10,
        )

    def test_rkmse_unavailable(self, gaussian_trial):
        """Test that R-KMSE is a kme-only method."""
        with pytest.raises(ConfigurationError):
            gaussian_trial.weights(Method.RKMSE, {})

    def test_graph_cached(self, gaussian_trial):
        """Test that one graph is built per threshold."""
        assert gaussian_trial.graph(1.0) is gaussian_trial.graph(1.0)

    def test_sparse_and_dense_averages_agree(self, rng):
        """Test the neighbor averages on both sides of the density switch."""
        means = np.zeros((50, 3))
        observations = rng.standard_normal((50, 3))
        trial = GaussianTrial(means, observations)
        for zeta in (0.01, 100.0):
            graph = trial.graph(zeta)
            expected = graph.adjacency.astype(float) @ observations
            expected /= graph.neighbor_counts[:, None]
            np.testing.assert_allclose(trial.neighbor_averages(graph), expected)


class TestKernelTrial:
    """Test losses against reference bags in the kme setting."""

    @pytest.mark.parametrize("method,params", STB_CASES)
    def test_shrinkage_statistics_match_weights(self, kernel_trial, method, params):
        """Test the quadratic-in-gamma losses against explicit weights."""
        fast = kernel_trial.task_losses(method, params)
        explicit = kernel_trial.weight_losses(kernel_trial.weights(method, params))
        np.testing.assert_allclose(fast, explicit, rtol=1e-9, atol=1e-12)

    def test_weight_losses_match_direct_evaluation(self, kernel_trial):
        """Test the cached loss against the direct unbiased loss per task."""
        weights = kernel_trial.weights(Method.MTA_CONST, {"strength": 1.0})
        losses = kernel_trial.weight_losses(weights)
        for i in range(kernel_trial.B):
            expected = estimator_loss(
                weights.values[i], kernel_trial.bags, kernel_trial.refs[i], kernel_trial.kernel
            )
            assert losses[i] == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_naive_losses(self, kernel_trial):
        """Test that the naive loss equals identity weights."""
        identity = WeightMatrix(np.eye(kernel_trial.B), Method.NE)
        np.testing.assert_allclose(
            kernel_trial.naive_losses(), kernel_trial.weight_losses(identity), atol=1e-12
        )

    def test_rkmse_available(self, kernel_trial):
        """Test that R-KMSE weights are diagonal."""
        values = kernel_trial.weights(Method.RKMSE, {}).values
        assert np.array_equal(values, np.diag(np.diag(values)))

    def test_james_stein_unavailable(self, kernel_trial):
        """Test that PP-James-Stein is a gaussian-only method."""
        with pytest.raises(ConfigurationError):
            kernel_trial.weights(Method.PP_JAMES_STEIN, {})

    def test_reference_count_must_match(self):
        """Test that every bag needs a reference bag."""
        bags = [Bag("a", [[0.0], [1.0]]), Bag("b", [[1.0], [2.0]])]
        with pytest.raises(ConfigurationError):
            KernelTrial(bags, bags[:1], KernelSpec.linear())


class TestTrialConstruction:
    """Test how trials are drawn."""

    def test_phases_use_different_data(self, small_kme_config):
        """Test that tuning and evaluation trials are disjoint draws."""
        tuning = build_trial(small_kme_config, TUNE_STREAM, 0)
        evaluation = build_trial(small_kme_config, EVAL_STREAM, 0)
        assert not np.array_equal(tuning.bags[0].samples, evaluation.bags[0].samples)

    def test_trials_reproducible(self, small_gaussian_config):
        """Test that a trial is identical when rebuilt."""
        first = build_trial(small_gaussian_config, EVAL_STREAM, 3)
        second = build_trial(small_gaussian_config, EVAL_STREAM, 3)
        np.testing.assert_array_equal(first.observations, second.observations)

    def test_split_bags(self):
        """Test a partition into train and test halves."""
        bags = [Bag(str(i), [[float(i)], [0.0]]) for i in range(10)]
        train, test = split_bags(bags, 0.5, seed=1, index=0)
        assert len(train) == 5
        assert sorted(b.id for b in train + test) == sorted(b.id for b in bags)

    def test_split_keeps_two_per_side(self):
        """Test that each side keeps at least two bags."""
        bags = [Bag(str(i), [[float(i)], [0.0]]) for i in range(4)]
        train, test = split_bags(bags, 0.9, seed=1, index=0)
        assert (len(train), len(test)) == (2, 2)

    def test_real_data_trial(self, same_distribution_csv):
        """Test subsampled training bags scored against their complete bags."""
        config = ExperimentConfig(
            input_path=str(same_distribution_csv), subsample_size=10, kernel="linear"
        )
        data = load_experiment_data(config)
        trial = build_trial(config, EVAL_STREAM, 0, data)
        assert trial.B == 4
        assert all(bag.size == 10 for bag in trial.bags)
        assert all(ref.size == 60 for ref in trial.refs)
        assert [bag.id for bag in trial.bags] == [ref.id for ref in trial.refs]

    def test_real_data_needs_bags(self, same_distribution_csv):
        """Test that real-data trials need loaded data."""
        config = ExperimentConfig(input_path=str(same_distribution_csv))
        with pytest.raises(ConfigurationError):
            build_trial(config, TUNE_STREAM, 0)


class TestTune:
    """Test grid search."""

    def test_candidates_order(self, small_kme_config):
        """Test zeta-major ordering of the grid."""
        candidates = parameter_candidates(Method.STB_WEIGHT, small_kme_config)
        assert candidates[:2] == [{"zeta": 0.5, "gamma": 0.0}, {"zeta": 0.5, "gamma": 0.5}]
        assert parameter_candidates(Method.NE, small_kme_config) == [{}]

    def test_selected_params_on_grid(self, small_kme_config):
        """Test that every tuned parameter comes from its grid."""
        best = tune(small_kme_config)
        assert set(best) == set(small_kme_config.method_list)
        assert best[Method.STB_WEIGHT]["gamma"] in small_kme_config.gamma_grid
        assert best[Method.MTA_CONST]["strength"] in small_kme_config.mta_strength_grid
        assert best[Method.STB_THEORY]["c"] in small_kme_config.c_grid

    def test_grid_edges(self):
        """Test that only open-ended parameters at an end of their grid are reported."""
        candidates = [{"zeta": z, "gamma": g} for z in (1.0, 2.0, 4.0) for g in (0.0, 1.0)]
        positions = list(range(len(candidates)))
        assert grid_edges(candidates, positions, 0) == ["zeta"]
        assert grid_edges(candidates, positions, 2) == []
        assert grid_edges(candidates, [0, 1], 0) == []

    def test_grid_end_warning(self, small_kme_config, caplog):
        """Test the warning when the selected strength is an end of its grid."""
        with caplog.at_level(logging.WARNING, logger="src.harness"):
            tune(small_kme_config.replace(methods=["NE", "MTA-const"]))
        assert "MTA-const: selected strength=" in caplog.text
        assert "consider widening it" in caplog.text

    def test_mta_const_improves_on_naive(self):
        """Test that the default strength grid brackets a useful MTA-const on UNIF."""
        config = ExperimentConfig(
            setting="gaussian",
            generator="UNIF",
            B=200,
            d=1000,
            methods=["NE", "MTA-const"],
            trials_tune=2,
            trials_eval=2,
        )
        report = run_benchmark(config)
        assert report.row(Method.MTA_CONST).pct_decrease > 30.0
        assert 0.0 < report.row(Method.MTA_CONST).params["strength"] < 8.0

    def test_smallest_c_nearly_pools(self):
        """Test that the default c grid reaches gamma_i close to the STB-0 limit."""
        tau = min(DEFAULT_C_GRID) * max(DEFAULT_ZETA_GRID)
        assert theory_gamma(tau, np.array([50]))[0] < 0.12

    def test_one_trial_per_tuning_index(self, small_kme_config, mocker):
        """Test that each tuning trial is built once and scores every method."""
        spy = mocker.spy(harness, "build_trial")
        tune(small_kme_config.replace(threads=1))
        assert sorted(call.args[2] for call in spy.call_args_list) == [0, 1]
        assert all(call.args[1] == TUNE_STREAM for call in spy.call_args_list)

    def test_shared_zeta(self, small_gaussian_config):
        """Test that STB-0's threshold is reused by the other test-based methods."""
        best = tune(small_gaussian_config)
        zeta = best[Method.STB_ZERO]["zeta"]
        for method in (Method.STB_WEIGHT, Method.STB_THEORY, Method.MTA_STB):
            assert best[method]["zeta"] == zeta

    def test_shared_zeta_without_stb_zero(self, small_gaussian_config):
        """Test that STB-0 is scored for the shared threshold even when not reported."""
        config = small_gaussian_config.replace(methods=["NE", "STB-weight"])
        best = tune(config)
        assert set(best) == {Method.NE, Method.STB_WEIGHT}

    def test_pooling_selected_for_identical_distributions(self, same_distribution_csv):
        """Test that full averaging beats the naive estimate when all bags agree."""
        config = ExperimentConfig(
            input_path=str(same_distribution_csv),
            subsample_size=10,
            kernel="linear",
            methods=["NE", "STB-weight"],
            zeta_grid=[1e6],
            gamma_grid=[0.0, 1.0],
            trials_tune=5,
        )
        best = tune(config, load_experiment_data(config))
        assert best[Method.STB_WEIGHT] == {"zeta": 1e6, "gamma": 0.0}


class TestBenchmark:
    """Test evaluation of tuned parameters."""

    def test_naive_always_reported(self, small_kme_config):
        """Test that NE is added and has zero decrease."""
        config = small_kme_config.replace(methods=["STB-0"])
        report = run_benchmark(config, {Method.STB_ZERO: {"zeta": 2.0}})
        assert [row.method for row in report.rows] == [Method.NE, Method.STB_ZERO]
        assert report.row(Method.NE).pct_decrease == 0.0

    def test_missing_params(self, small_kme_config):
        """Test that every tuned method needs its parameters."""
        config = small_kme_config.replace(methods=["NE", "STB-0", "R-KMSE"])
        with pytest.raises(ConfigurationError, match="STB-0"):
            run_benchmark(config, {})

    def test_report_shapes(self, small_gaussian_config):
        """Test the per-trial and per-task loss arrays."""
        report = run_benchmark(small_gaussian_config)
        methods = small_gaussian_config.method_list
        assert report.trial_losses.shape == (4, len(methods))
        assert report.task_losses.shape == (len(methods), 40)
        assert all(row.stderr >= 0 for row in report.rows)
        np.testing.assert_allclose(
            [row.mean_loss for row in report.rows], report.trial_losses.mean(axis=0)
        )

    def test_threads_do_not_change_results(self, small_kme_config):
        """Test bit-identical reports for one and three threads."""
        params = {Method.STB_WEIGHT: {"zeta": 2.0, "gamma": 0.5}}
        config = small_kme_config.replace(methods=["NE", "STB-weight"])
        one = run_benchmark(config.replace(threads=1), params)
        three = run_benchmark(config.replace(threads=3), params)
        assert np.array_equal(one.trial_losses, three.trial_losses)

    def test_to_csv(self, small_kme_config, temp_dir):
        """Test the report CSV header."""
        config = small_kme_config.replace(methods=["NE"])
        path = temp_dir / "report.csv"
        run_benchmark(config, {}).to_csv(str(path))
        frame = pd.read_csv(path)
        assert list(frame.columns) == [
            "method",
            "param_json",
            "mean_loss",
            "stderr",
            "pct_decrease",
        ]

    def test_percent_decrease(self):
        """Test 100 (1 - loss / loss_NE)."""
        assert percent_decrease(0.25, 1.0) == 75.0
        assert percent_decrease(1.0, 0.0) == 0.0

    def test_task_loss_records(self):
        """Test the per-task plot rows."""
        row = BenchRow(Method.NE, {}, 1.0, 0.0, 0.0)
        report = BenchReport([row], np.ones((1, 1)), np.array([[0.5, 1.5]]))
        records = task_loss_records(report, [10, 20])
        assert records == [
            {"method": "NE", "task": 0, "bag_size": 10, "mean_loss": 0.5},
            {"method": "NE", "task": 1, "bag_size": 20, "mean_loss": 1.5},
        ]

    def test_task_bag_sizes(self, small_kme_config):
        """Test the bag size column of the per-task rows in each setting."""
        assert task_bag_sizes(ExperimentConfig(setting="gaussian", N=3), 4) == [3, 3, 3, 3]
        imbalanced = small_kme_config.replace(generator="c_imbalanced", B=5, n_range=(10, 50))
        assert task_bag_sizes(imbalanced, 5) == [10, 20, 30, 40, 50]
        real = ExperimentConfig(input_path="bags.csv", subsample_size=7)
        assert task_bag_sizes(real, 2) == [7, 7]

    def test_sweep(self, small_kme_config):
        """Test one block of rows per value of the swept field."""
        config = small_kme_config.replace(methods=["NE", "STB-0"], trials_tune=1, trials_eval=2)
        rows = run_sweep(config, "B", [4, 6])
        assert [(row["value"], row["method"]) for row in rows] == [
            (4, "NE"),
            (4, "STB-0"),
            (6, "NE"),
            (6, "STB-0"),
        ]

    def test_sweep_unknown_field(self, small_kme_config):
        """Test that only configuration fields can be swept."""
        with pytest.raises(ConfigurationError):
            run_sweep(small_kme_config, "colour", ["red"])


# fraction of the naive loss removed at B = 2000, per Gaussian model and method
GAUSSIAN_DECREASE = {
    "UNIF": {
        "PP-James-Stein": 0.439,
        "MTA-const": 0.427,
        "MTA-stb": 0.653,
        "STB-0": 0.796,
        "STB-theory": 0.813,
        "STB-weight": 0.813,
    },
    "CLUSTER": {
        "PP-James-Stein": 0.495,
        "MTA-const": 0.508,
        "MTA-stb": 0.979,
        "STB-0": 0.980,
        "STB-theory": 0.980,
        "STB-weight": 0.980,
    },
    "SPHERE": {
        "PP-James-Stein": 0.285,
        "MTA-const": 0.285,
        "MTA-stb": 0.745,
        "STB-0": 0.894,
        "STB-theory": 0.898,
        "STB-weight": 0.898,
    },
    "SPARSE": {
        "PP-James-Stein": 0.224,
        "MTA-const": 0.162,
        "MTA-stb": 0.367,
        "STB-0": 0.402,
        "STB-theory": 0.441,
        "STB-weight": 0.443,
    },
}
GAUSSIAN_CELLS = [
    (model, method, expected)
    for model, row in GAUSSIAN_DECREASE.items()
    for method, expected in row.items()
]


@pytest.fixture(scope="module")
def gaussian_reports():
    """Full-size benchmark per Gaussian model, run once on first use."""
    reports = {}

    def report(model: str) -> BenchReport:
        if model not in reports:
            config = ExperimentConfig(
                setting="gaussian",
                generator=model,
                B=2000,
                trials_tune=20,
                trials_eval=20,
                threads=4,
            )
            reports[model] = run_benchmark(config)
        return reports[model]

    return report


def paired_gap(report: BenchReport, better: Method, worse: Method):
    """Mean and standard error of the per-trial loss gap, in percent of the naive loss."""
    columns = [row.method for row in report.rows]
    losses = report.trial_losses
    gaps = losses[:, columns.index(worse)] - losses[:, columns.index(better)]
    gaps = 100.0 * gaps / report.row(Method.NE).mean_loss
    return gaps.mean(), gaps.std(ddof=1) / np.sqrt(len(gaps))


@pytest.mark.slow
class TestAcceptance:
    """Full-size runs."""

    @pytest.mark.parametrize("model,method,expected", GAUSSIAN_CELLS)
    def test_gaussian_decrease(self, gaussian_reports, model, method, expected):
        """Test every model and method against its reference decrease within 0.05."""
        decrease = gaussian_reports(model).row(Method(method)).pct_decrease / 100
        assert decrease == pytest.approx(expected, abs=0.05)

    def test_toy_ordering(self):
        """Test the ordering of the methods on rotated bags around one centre."""
        config = ExperimentConfig(
            generator="b_num_bags", B=100, N=50, trials_tune=5, trials_eval=20, threads=4
        )
        report = run_benchmark(config)
        for method in (Method.STB_THEORY, Method.STB_WEIGHT):
            gap, se = paired_gap(report, method, Method.STB_ZERO)
            assert gap >= -3 * se
        assert paired_gap(report, Method.STB_ZERO, Method.MTA_CONST)[0] > 0
        assert paired_gap(report, Method.MTA_CONST, Method.RKMSE)[0] > 0
        assert report.row(Method.RKMSE).pct_decrease > 0
