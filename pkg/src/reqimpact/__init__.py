"""Change impact analysis for natural-language requirements.

Given a change rationale and a requirements corpus, the pipeline produces a
filtered, justified impact set: a full-context LLM pass over the requirement
list, a refinement pass over the complement, an LLM ranking pass, and an
entailment-gated selection step. The package also ships embedding-similarity
baselines with three cutoff strategies, an iterative per-requirement baseline,
a retrieve-then-classify baseline, evaluation metrics (precision/recall/F2,
effectiveness, cost), and a gradient-boosting analysis of which prompt details
matter.
"""

from reqimpact.corpus import (
    ChangeRationale,
    Dataset,
    DatasetParseError,
    DatasetValidationError,
    GoldImpact,
    Requirement,
    load_dataset,
)
from reqimpact.pipeline import ImpactCandidate, ImpactSet, PipelineConfig

__all__ = [
    "ChangeRationale",
    "Dataset",
    "DatasetParseError",
    "DatasetValidationError",
    "GoldImpact",
    "ImpactCandidate",
    "ImpactSet",
    "PipelineConfig",
    "Requirement",
    "load_dataset",
]

__version__ = "0.1.0"
