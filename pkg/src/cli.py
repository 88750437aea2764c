"""Command-line interface of bagshrink.

Every subcommand writes CSV. Global flags (``--seed``, ``--threads``,
``--config``, ``--debug``) go before the subcommand.
"""

import argparse
import json
import logging
from dataclasses import asdict
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml  # type: ignore[import-untyped]

from .bag_io import (
    load_bags_csv,
    write_bags_csv,
    write_edges_csv,
    write_matrix_csv,
    write_records_csv,
)
from .concentration import CheckKind, fwer_calibration, verify_bounds
from .config import ExperimentConfig
from .datagen import (
    GaussianKind,
    GaussianModel,
    ToyKind,
    ToySetup,
    gen_means,
    gen_toy,
    sample_reference_bags,
)
from .estimators import (
    Method,
    ShrinkageMode,
    WeightMatrix,
    apply_weights,
    james_stein_weights,
    mta_weights,
    mta_weights_from_statistics,
    naive_weights,
    rkmse_weights,
    shared_data_gamma,
    stb_weights,
)
from .exceptions import BagShrinkError, ConfigurationError
from .gram_cache import GramCache
from .harness import (
    load_experiment_data,
    run_benchmark,
    run_sweep,
    task_bag_sizes,
    task_loss_records,
    tune,
)
from .kernel_core import Bag, KernelSpec, check_same_dimension, kernel_bound, pooled_width
from .random_streams import GENERATE_STREAM, stream
from .similarity_tests import (
    NeighborGraph,
    TestConfig,
    TestMode,
    build_neighbor_graph_gaussian,
    build_neighbor_graph_kme,
    pairwise_sq_distances,
)
from .theory_bounds import (
    BoundInputs,
    BoundMode,
    bag_effective_dimension,
    covering_number,
    covering_radius,
)

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bagshrink",
        description="Multi-task mean estimation by test-based neighborhood shrinkage",
    )
    parser.add_argument("--seed", type=int, default=None, help="Root random seed")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads")
    parser.add_argument(
        "--config",
        default=None,
        help="Path to experiment configuration YAML (e.g. config/bagshrink.yaml)",
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Generate synthetic bags as CSV")
    generate.add_argument(
        "--model",
        required=True,
        choices=[k.value for k in GaussianKind] + [k.value for k in ToyKind],
        help="Gaussian model or toy setup",
    )
    generate.add_argument("--B", type=int, default=None, help="Number of tasks")
    generate.add_argument("--d", type=int, default=None, help="Dimension (Gaussian models)")
    generate.add_argument("--N", type=int, default=None, help="Samples per bag")
    generate.add_argument("--n-range", default="10,300", help="Bag sizes of setup c_imbalanced")
    generate.add_argument("--radius", type=float, default=0.0, help="Circle radius (setup d)")
    generate.add_argument("--out", required=True, help="Bag CSV to write")
    generate.add_argument("--means-out", help="True means (Gaussian models)")
    generate.add_argument("--refs-out", help="Reference bags of size 1000 (toy setups)")

    test = commands.add_parser("test", help="Run the pairwise tests and write the neighbor graph")
    _add_bag_arguments(test)
    _add_threshold_arguments(test)
    test.add_argument("--out", required=True, help="Edge CSV to write (bag_id,neighbor_id)")

    estimate = commands.add_parser("estimate", help="Compute one estimator's weights")
    _add_bag_arguments(estimate)
    _add_threshold_arguments(estimate)
    estimate.add_argument(
        "--method", required=True, choices=[m.value for m in Method], help="Estimator"
    )
    estimate.add_argument("--gamma", type=float, default=None, help="STB-weight or MTA gamma")
    estimate.add_argument(
        "--strength",
        type=float,
        default=None,
        help="MTA strength: gamma chosen so (gamma/B) D L(A) has this typical size",
    )
    estimate.add_argument("--c", type=float, default=1.0, help="STB-theory constant")
    estimate.add_argument(
        "--gamma-shared-data",
        "--gamma-thm2",
        dest="gamma_shared_data",
        action="store_true",
        help="STB-weight with gamma = tau / (1 + tau) (tests and estimates share data)",
    )
    estimate.add_argument("--weights-out", required=True, help="Weight matrix CSV")
    estimate.add_argument("--means-out", help="Estimated means CSV (explicit features only)")

    tune_cmd = commands.add_parser("tune", help="Tune every method's parameters")
    tune_cmd.add_argument("--out", default=None, help="CSV of selected parameters")

    bench = commands.add_parser("bench", help="Tune, then benchmark on fresh trials")
    bench.add_argument("--out", default=None, help="Report CSV (default: config output)")
    bench.add_argument("--params", default=None, help="Parameter CSV from `tune` (skips tuning)")
    bench.add_argument("--task-losses-out", default=None, help="Per-task mean losses CSV")

    bounds = commands.add_parser("bounds", help="Per-bag theory radii and error-bound factors")
    _add_bag_arguments(bounds)
    _add_threshold_arguments(bounds)
    bounds.add_argument(
        "--tau-prime", type=float, default=None, help="Covering scale tau' (default: tau)"
    )
    bounds.add_argument("--t", type=float, default=1.0, help="Confidence parameter t")
    bounds.add_argument("--means", default=None, help="True means CSV to compute the covering")
    bounds.add_argument("--out", required=True, help="Per-bag bounds CSV")

    verify = commands.add_parser("verify-bounds", help="Monte-Carlo check of deviation bounds")
    verify.add_argument(
        "--kinds",
        default=",".join(k.value for k in CheckKind),
        help="Comma-separated check kinds",
    )
    verify.add_argument("--ts", default="1,2,3", help="Comma-separated t values")
    verify.add_argument("--reps", type=int, default=100_000, help="Replicates per check")
    verify.add_argument("--d", type=int, default=50, help="Dimension")
    verify.add_argument("--N", type=int, default=20, help="Samples per mean (bounded kinds)")
    verify.add_argument("--L", type=float, default=1.0, help="Norm bound (bounded kinds)")
    verify.add_argument("--mu-norm", type=float, default=0.0, help="Norm of the mean")
    verify.add_argument(
        "--delta-norm", type=float, default=0.0, help="Distance of the means (U-statistic kinds)"
    )
    verify.add_argument("--sigma", type=float, default=1.0, help="Noise scale (Gaussian kinds)")
    verify.add_argument("--B", type=int, default=10, help="Tasks per instance (gram_frobenius)")
    verify.add_argument("--fwer-out", default=None, help="Also calibrate the Gaussian tests")
    verify.add_argument("--out", required=True, help="CSV of kind,t,reps,bound,rate,pass")

    sweep = commands.add_parser("sweep", help="Benchmark over values of one config field")
    sweep.add_argument("--variable", required=True, help="Configuration field, e.g. B or radius")
    sweep.add_argument("--values", required=True, help="Comma-separated values")
    sweep.add_argument("--out", required=True, help="Plot-data CSV")
    return parser


def _add_bag_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bags", required=True, help="Bag CSV (bag_id,f0,...)")
    parser.add_argument(
        "--mode", default="kme", choices=[m.value for m in TestMode], help="Setting"
    )
    parser.add_argument("--kernel", default="rbf", choices=["linear", "rbf"], help="Kernel")
    parser.add_argument("--width", type=float, default=None, help="RBF width (default: pooled)")


def _add_threshold_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--zeta", type=float, default=None, help="Test threshold")
    parser.add_argument("--tau", type=float, default=None, help="Separation for theory values")
    parser.add_argument("--alpha", type=float, default=0.05, help="Gaussian test level")


# ============================================================================
# Subcommands
# ============================================================================


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    return config.replace(**changes) if changes else config


def cmd_generate(args: argparse.Namespace) -> None:
    seed = 0 if args.seed is None else args.seed
    if args.model in [k.value for k in GaussianKind]:
        model = GaussianModel(args.model, B=args.B or 2000, d=args.d, N=args.N or 1)
        means = gen_means(model, stream(seed, GENERATE_STREAM))
        shape = (model.N, model.d)
        bags = [
            Bag(str(i), mean + stream(seed, GENERATE_STREAM, i).standard_normal(shape))
            for i, mean in enumerate(means)
        ]
        if args.means_out:
            write_matrix_csv(means, [bag.id for bag in bags], args.means_out)
    else:
        low, high = (int(v) for v in _floats(args.n_range))
        setup = ToySetup(
            args.model, B=args.B or 50, N=args.N or 50, n_range=(low, high), radius=args.radius
        )
        bags, params = gen_toy(setup, seed, (GENERATE_STREAM,))
        if args.refs_out:
            refs = sample_reference_bags(params, setup.test_size, seed, (GENERATE_STREAM, 1))
            write_bags_csv(refs, args.refs_out)
    write_bags_csv(bags, args.out)


def _kernel(args: argparse.Namespace, bags: Sequence[Bag]) -> KernelSpec:
    if args.kernel == "linear":
        return KernelSpec.linear()
    return KernelSpec.rbf(args.width if args.width is not None else pooled_width(bags))


def _common_size(bags: Sequence[Bag]) -> int:
    sizes = {bag.size for bag in bags}
    if len(sizes) != 1:
        raise ConfigurationError("Gaussian mode needs bags of equal size")
    return sizes.pop()


def _graph(args: argparse.Namespace, bags: Sequence[Bag], cache: Optional[GramCache]):
    d = check_same_dimension(bags)
    zeta = TestConfig(args.mode, args.zeta, args.tau, alpha=args.alpha).threshold(len(bags), d)
    if args.mode == TestMode.GAUSSIAN.value:
        muhats = np.vstack([bag.mean() for bag in bags])
        return build_neighbor_graph_gaussian(muhats, zeta, _common_size(bags)), zeta
    assert cache is not None
    return build_neighbor_graph_kme(bags, cache.kernel, zeta, cache), zeta


def cmd_test(args: argparse.Namespace) -> None:
    bags = load_bags_csv(args.bags)
    cache = None if args.mode == TestMode.GAUSSIAN.value else GramCache(_kernel(args, bags))
    graph, zeta = _graph(args, bags, cache)
    logger.info(f"zeta={zeta:.6g}: mean |V_i| = {graph.neighbor_counts.mean():.3f}")
    write_edges_csv(graph, [bag.id for bag in bags], args.out)


def _estimate_weights(args: argparse.Namespace, bags: Sequence[Bag]) -> WeightMatrix:
    method = Method(args.method)
    gaussian = args.mode == TestMode.GAUSSIAN.value
    kernel = KernelSpec.linear() if gaussian else _kernel(args, bags)
    cache = GramCache(kernel)
    muhats = np.vstack([bag.mean() for bag in bags])
    if method == Method.NE:
        return naive_weights(len(bags))
    if method == Method.RKMSE:
        if gaussian:
            raise ConfigurationError("R-KMSE is only available in the kme setting")
        return rkmse_weights(bags, kernel, cache)
    if method == Method.PP_JAMES_STEIN:
        if not gaussian:
            raise ConfigurationError("PP-James-Stein is only available in the gaussian setting")
        return james_stein_weights(muhats, 1.0 / _common_size(bags))
    if method == Method.MTA_CONST:
        return _mta(args, bags, kernel, cache, None)

    graph, zeta = _graph(args, bags, None if gaussian else cache)
    if method == Method.MTA_STB:
        return _mta(args, bags, kernel, cache, graph)
    if method == Method.STB_ZERO:
        mode = ShrinkageMode.zero()
    elif method == Method.STB_THEORY:
        mode = ShrinkageMode.theory(args.c, zeta)
    elif args.gamma_shared_data:
        if args.tau is None:
            raise ConfigurationError("--gamma-shared-data needs --tau")
        mode = ShrinkageMode.weight(shared_data_gamma(args.tau))
    else:
        if args.gamma is None:
            raise ConfigurationError("STB-weight needs --gamma or --gamma-shared-data")
        mode = ShrinkageMode.weight(args.gamma)
    return stb_weights(graph, mode)


def _mta(args, bags, kernel, cache, graph: Optional[NeighborGraph]) -> WeightMatrix:
    if (args.gamma is None) == (args.strength is None):
        raise ConfigurationError(f"{args.method} needs exactly one of --gamma and --strength")
    if args.mode == TestMode.GAUSSIAN.value:
        muhats = np.vstack([bag.mean() for bag in bags])
        sigma_bar2 = muhats.shape[1] / _common_size(bags)
        mse = np.full(len(bags), sigma_bar2)
        sq_distances = pairwise_sq_distances(muhats)
        return mta_weights_from_statistics(sq_distances, mse, args.gamma, graph, args.strength)
    similarity = "const" if graph is None else graph
    return mta_weights(bags, kernel, args.gamma, similarity, cache, args.strength)


def cmd_estimate(args: argparse.Namespace) -> None:
    bags = load_bags_csv(args.bags)
    weights = _estimate_weights(args, bags)
    ids = [bag.id for bag in bags]
    write_matrix_csv(weights.values, ids, args.weights_out, prefix="w")
    if args.means_out:
        if args.mode != TestMode.GAUSSIAN.value and args.kernel != "linear":
            raise ConfigurationError("Explicit means need the gaussian mode or a linear kernel")
        muhats = np.vstack([bag.mean() for bag in bags])
        write_matrix_csv(apply_weights(weights, muhats), ids, args.means_out)
    logger.info(f"{weights.method.value} weights for {len(bags)} bags written")


def _params_records(params) -> List[dict]:
    return [
        {"method": method.value, "param_json": json.dumps(values, sort_keys=True)}
        for method, values in params.items()
    ]


def _read_params(path: str):
    frame = pd.read_csv(path)
    return {Method(row.method): json.loads(row.param_json) for row in frame.itertuples()}


def cmd_tune(args: argparse.Namespace) -> None:
    config = _load_config(args)
    params = tune(config, load_experiment_data(config))
    write_records_csv(_params_records(params), args.out or config.output)


def cmd_bench(args: argparse.Namespace) -> None:
    config = _load_config(args)
    params = _read_params(args.params) if args.params else None
    report = run_benchmark(config, params, load_experiment_data(config))
    report.to_csv(args.out or config.output)
    if args.task_losses_out:
        sizes = task_bag_sizes(config, report.task_losses.shape[1])
        records = task_loss_records(report, sizes)
        write_records_csv(records, args.task_losses_out)


def _read_means(path: str, count: int) -> np.ndarray:
    means = pd.read_csv(path).iloc[:, 1:].to_numpy(dtype=float)
    if means.shape[0] != count:
        raise ConfigurationError(f"{means.shape[0]} means for {count} bags")
    return means


def cmd_bounds(args: argparse.Namespace) -> None:
    if args.tau is None:
        raise ConfigurationError("bounds needs --tau")
    bags = load_bags_csv(args.bags)
    gaussian = args.mode == TestMode.GAUSSIAN.value
    kernel = KernelSpec.linear() if gaussian else _kernel(args, bags)
    cache = GramCache(kernel)
    graph, _ = _graph(args, bags, None if gaussian else cache)
    B = len(bags)
    if gaussian:
        # unit noise per coordinate
        d = check_same_dimension(bags)
        sigma_bar2 = np.full(B, d / _common_size(bags))
        d_eff = np.full(B, float(d))
    else:
        sigma_bar2 = cache.naive_mse_vector(bags)
        d_eff = np.array([bag_effective_dimension(bag, kernel) for bag in bags])
    L = kernel_bound(kernel, bags)
    tau_prime = args.tau if args.tau_prime is None else args.tau_prime
    covering_N = B
    if args.means:
        radius = covering_radius(tau_prime, float(sigma_bar2.max()))
        covering_N = covering_number(_read_means(args.means, B), radius)
        logger.info(f"Means covered by {covering_N} balls of radius {radius:.4g}")

    records = []
    for i, bag in enumerate(bags):
        inputs = BoundInputs(
            tau=args.tau,
            tau_prime=tau_prime,
            V_size=int(graph.neighbor_counts[i]) - 1,
            B=B,
            covering_N=covering_N,
            sigma_bar2=float(sigma_bar2[i]),
            d_eff=float(d_eff[i]),
            L=L,
            N=bag.size,
            t=args.t,
        )
        r, tau_min = inputs.radius()
        records.append(
            {
                "bag_id": bag.id,
                "size": bag.size,
                "d_eff": inputs.d_eff,
                "sigma_bar2": inputs.sigma_bar2,
                "neighbors": inputs.V_size,
                "r": r,
                "tau_min": tau_min,
                "factor_indep": inputs.single_factor(BoundMode.INDEP),
                "factor_onesample": inputs.single_factor(BoundMode.ONESAMPLE),
                "factor_rough": inputs.rough_factor(),
                "covering_N": covering_N,
                "avg_factor_indep": inputs.average_factor(BoundMode.INDEP),
            }
        )
    write_records_csv(records, args.out)


def cmd_verify_bounds(args: argparse.Namespace) -> None:
    seed = 0 if args.seed is None else args.seed
    threads = args.threads or 1
    kinds = [CheckKind(kind.strip()) for kind in args.kinds.split(",") if kind.strip()]
    results = verify_bounds(
        kinds,
        _floats(args.ts),
        reps=args.reps,
        seed=seed,
        threads=threads,
        d=args.d,
        N=args.N,
        L=args.L,
        mu_norm=args.mu_norm,
        delta_norm=args.delta_norm,
        sigma=args.sigma,
        B=args.B,
    )
    write_records_csv([result.to_row() for result in results], args.out)
    failed = [r for r in results if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} of {len(results)} checks exceeded their bound")
    if args.fwer_out:
        calibration = fwer_calibration(seed=seed, threads=threads)
        write_records_csv([asdict(calibration)], args.fwer_out)


def cmd_sweep(args: argparse.Namespace) -> None:
    config = _load_config(args)
    values = [yaml.safe_load(item) for item in args.values.split(",") if item.strip()]
    rows = run_sweep(config, args.variable, values, load_experiment_data(config))
    write_records_csv(rows, args.out)


COMMANDS = {
    "generate": cmd_generate,
    "test": cmd_test,
    "estimate": cmd_estimate,
    "tune": cmd_tune,
    "bench": cmd_bench,
    "bounds": cmd_bounds,
    "verify-bounds": cmd_verify_bounds,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit status."""
    args = build_parser().parse_args(argv)

    # Configure logging level
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.debug("Debug logging enabled")

    try:
        COMMANDS[args.command](args)
    except BagShrinkError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    return 0
