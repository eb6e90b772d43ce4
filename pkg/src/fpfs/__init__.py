"""Static membership filters with a guaranteed false-positive-free set."""

from .filters import (
    BuildConfig,
    DisjointnessViolation,
    FpfsFilter,
    ResidualSet,
    build_filter,
    build_if,
    build_naive,
    build_plain,
    build_tf,
    compute_a_if_c1,
    compute_a_tf,
    compute_c_min,
    query,
    residual_set,
    select_if_params,
)
from .harness import (
    EvalReport,
    bench,
    gen_disjoint_sets,
    gen_disjoint_stream,
    measure_fpp,
    verify,
)
from .keys import DatasetError, KeyBatch, StreamedKeys, read_dataset, write_dataset
from .sizing import (
    SizingReport,
    extra_bits_if,
    lower_bound,
    m_if,
    m_naive,
    m_tf,
    predicted_fpp,
    sweep,
)
from .storage import FilterFileError, load_filter, save_filter
from .xorfunc import (
    BuildExhausted,
    PeelFailure,
    PeelOrder,
    XorTable,
    build_with_retries,
    table_size,
)

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "BuildExhausted",
    "DatasetError",
    "DisjointnessViolation",
    "EvalReport",
    "FilterFileError",
    "FpfsFilter",
    "KeyBatch",
    "PeelFailure",
    "PeelOrder",
    "ResidualSet",
    "SizingReport",
    "StreamedKeys",
    "XorTable",
    "bench",
    "build_filter",
    "build_if",
    "build_naive",
    "build_plain",
    "build_tf",
    "build_with_retries",
    "compute_a_if_c1",
    "compute_a_tf",
    "compute_c_min",
    "extra_bits_if",
    "gen_disjoint_sets",
    "gen_disjoint_stream",
    "load_filter",
    "lower_bound",
    "m_if",
    "m_naive",
    "m_tf",
    "measure_fpp",
    "predicted_fpp",
    "query",
    "read_dataset",
    "residual_set",
    "save_filter",
    "select_if_params",
    "sweep",
    "table_size",
    "verify",
    "write_dataset",
]
