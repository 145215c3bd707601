"""Bidirectional propagation: approximate Generalized PageRank embeddings.

Monte-Carlo walks from the target nodes are combined with a level-wise
reverse push from the feature columns into an unbiased estimate of
``P = sum_l w_l (D^{r-1} A D^{-r})^l X``.
"""

from .errors import FormatError, GBPError, ValidationError
from .estimator import (
    EmbeddingMatrix,
    PlannedParameters,
    PropagationConfig,
    WeightScheme,
    combine,
    make_weights,
    plan_parameters,
    propagate,
    read_embedding,
    write_embedding,
    write_embedding_tsv,
)
from .features import NormalizedSeed, load_features, normalize
from .graph import Graph, NodeSet, degree_power, from_edges, load_edge_list
from .oracle import exact_propagate, exact_transition_rows
from .random_walks import WalkFrequencies, expected_transition, sample_walks
from .reverse_push import PushState, push, push_count_bound

__version__ = "0.1.0"
