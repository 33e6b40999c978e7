"""Toolkit for building, baselining, and evaluating local citation recommendation.

Pipeline: ingest raw benchmark records -> preprocess and split -> build
masked Base/Global inputs -> rank candidates with BM25 or consume any
generator's prediction files -> score (R@k, EM, MRR) and dissect
hallucinations against the dataset's citation pool.
"""

__version__ = "0.1.0"

from .grammar import (  # noqa: F401
    CitationToken,
    FormatError,
    NormalizedKey,
    OverlapReport,
    format_token,
    normalize,
    overlap,
    parse,
)
from .corpus import (  # noqa: F401
    CitationPool,
    Dataset,
    LocalContext,
    PaperMeta,
    SplitManifest,
    build_pool,
    ingest,
    repair_citation,
    split,
    strip_nontarget_citations,
)
from .masking import (  # noqa: F401
    MaskedExample,
    Scheme,
    SchemeConfig,
    WhitespaceTokenizer,
    build,
    build_dataset,
    default_config,
)
from .evaluation import (  # noqa: F401
    EvalReport,
    PredictionRecord,
    bootstrap_ci,
    evaluate,
)
from .hallucination import (  # noqa: F401
    Condition,
    HallucinationBreakdown,
    HallucinationLabel,
    analyze,
    classify,
    conditioned_mahr,
)
