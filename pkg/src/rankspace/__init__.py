"""Index-based cardinality estimation by sampling in rank space."""
from .baseline import Reservoir
from .bench import BenchReport, MethodConfig, qerror, run_benchmark, run_benchmark_files, sweep
from .estimator import EstimateResult, Estimator, EstimatorConfig, estimate
from .filtering import FilterConfig, SplitStrategy, ZInterval, find_separation_point, recursive_filter
from .index import CountedIndex, KeyNotFoundError
from .workload import Table, WorkloadSpec, build_workload_stream, generate_queries, ingest_csv
from .zorder import AttributeSchema, QueryBox, bigmin, decode, encode, litmax

__all__ = [
    "AttributeSchema", "BenchReport", "CountedIndex", "EstimateResult", "Estimator", "EstimatorConfig",
    "FilterConfig", "KeyNotFoundError", "MethodConfig", "QueryBox", "Reservoir", "SplitStrategy", "Table",
    "WorkloadSpec", "ZInterval", "bigmin", "build_workload_stream", "decode", "encode", "estimate",
    "find_separation_point", "generate_queries", "ingest_csv", "litmax", "qerror", "recursive_filter",
    "run_benchmark", "run_benchmark_files", "sweep",
]
__version__ = "0.1.0"
