"""Word predictability estimation and reading-time regression toolkit."""

__version__ = "0.1.0"

from .cloze import (
    PAPER_SMOOTHING_FACTORS,
    PAPER_TRANSFORMS,
    RAW_PROB,
    SURPRISAL,
    Transform,
    cloze_probability,
    surprisal_pow,
    transform,
)
from .corpus import (
    ClozeResponseSet,
    ContextId,
    FilterConfig,
    RTObservation,
    StimulusCorpus,
    filter_rt,
    load_cloze_responses,
    load_rt_data,
    load_stimuli,
)
from .lmcore import (
    DistributionProvider,
    EmbeddingMatrix,
    TokenDistribution,
    Tokenization,
    TokenVocab,
    is_word_end,
    load_distribution_dump,
    load_embeddings,
    replay_provider,
    toy_provider,
    word_probability,
)
from .manip import (
    ClusterAssignment,
    FrequencyTable,
    SampleSet,
    SimilarityConfig,
    h1_probability,
    h2_probability,
    h3_probability,
    kmeans_cluster,
    sa_probability,
    sample_words,
)
from .stats import (
    ComparisonResult,
    CVPlan,
    LMEFit,
    PredictorTable,
    bonferroni,
    compare_models,
    fit_lme,
    heldout_loglik,
    make_folds,
    paired_permutation_test,
    pearson_with_ci,
    unigram_surprisal,
)
