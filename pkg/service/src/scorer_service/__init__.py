"""Reference HTTP scorer service with a deterministic mock model."""

from .server import (
    MOCK_MODEL_NAME,
    BindError,
    ScorerService,
    ServiceConfig,
    fnv1a64,
    mock_score,
    serve,
    truncate_tokens,
)

__version__ = "0.1.0"
