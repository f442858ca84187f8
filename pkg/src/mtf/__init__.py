"""Score, threshold, and curate image-text pools with pluggable quality scorers."""

from .core import (
    Combiner,
    FilterSpec,
    ImageRef,
    ImageTextPair,
    IngestConfig,
    Metric,
    MtfError,
    QualityScore,
    RunManifest,
    ScoreRecord,
    config_digest,
    parse_metric,
    parse_metrics,
)
from .curation import (
    ClusterConfig,
    InstructionRecord,
    MixtureComponent,
    MixtureSpec,
    SamplerConfig,
    TeacherJob,
    assemble_mixture,
    balanced_sample,
    cluster_representatives,
    emit_teacher_jobs,
    kmeans_fit,
)
from .filtering import (
    FilterOutcome,
    Histogram101,
    apply_filter,
    build_histogram,
    compute_threshold,
    resolve_spec,
)
from .ingest import (
    FieldMap,
    PairSource,
    ProgressLog,
    open_pair_stream,
    read_pairs,
    read_score_records,
    resume_filter,
    write_pairs,
    write_score_records,
)
from .prompts import DENSE_CAPTION_PROMPT, Mode, TeacherPath
from .scorer import (
    EmbeddingTable,
    HttpScorerBackend,
    MockScorerBackend,
    RetryPolicy,
    ScorerEndpoint,
    ScoreRequest,
    assemble_prompt,
    cosine_score,
    cosine_similarity,
    mock_quality_score,
    parse_score,
    score_batch,
    score_to_file,
)
from .stats import (
    CorrelationResult,
    PairedSample,
    distribution_report,
    fraction_sweep,
    pearson,
    spearman,
)

__version__ = "0.1.0"
