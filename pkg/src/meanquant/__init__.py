"""Quantization of the mean measure of a sample of discrete measures.

Learn a k-point codebook for the empirical mean measure (batch Lloyd or
mini-batch MacQueen), turn every measure into a k-vector of kernel-smoothed
masses around the codepoints, then cluster and score the vectors.
"""

from .errors import *  # noqa: F401,F403
from .measure import (
    DiscreteMeasure,
    MeasureSample,
    ball_mass,
    coalesce,
    make_measure,
    mean_measure,
    read_ndjson,
    write_ndjson,
)
from .quantization import (
    Codebook,
    QuantizeConfig,
    QuantizeReport,
    auto_iterations,
    batch_quantize,
    cell_stats,
    distortion,
    kmeanspp_init,
    lloyd_step,
    make_codebook,
    minibatch_quantize,
    quantize,
    voronoi_assign,
)
from .vectorization import (
    Embedding,
    Kernel,
    VectorizeConfig,
    check_kernel,
    default_sigma,
    kernel_eval,
    vectorize,
    vectorize_sample,
)
from .cluster import ClusterLabels, LinkageResult, kmeans_vectors, linf_distances, linkage, nmi, single_linkage
from .verify import (
    brute_force_kmeans,
    check_concentration,
    check_shattering,
    codebook_diagnostics,
    w1_exact,
)
from .synth import (
    BenchResult,
    MixtureSpec,
    baseline_codebook,
    gen_centers,
    gen_sample,
    histogram_vectorize,
    run_q1,
    run_q2,
    sample_measure,
)

__version__ = "0.1.0"
