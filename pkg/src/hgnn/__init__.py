"""Hierarchical graph neural networks: layer stacks, propagation, embeddings and training."""

from .embedding import (
    AssemblyRule,
    EmbeddingResult,
    assemble_hierarchical_embedding,
    effective_dimensionality,
    hierarchical_svd_embedding,
    reconstruction_nmse,
    svd_embedding,
)
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    EmptyInputError,
    HGNNError,
    NonConvergenceError,
    NumericError,
    NumericOverflowError,
    ParseError,
    ValidationError,
)
from .graph import DerivativeMatrixKind, Graph, derivative_matrix, load_edge_list, write_edge_list
from .hierarchy import (
    InterLayerScheme,
    LayerStack,
    Partition,
    PartitionKind,
    aggregate_graph,
    aggregate_weights,
    build_layer_stack,
    interlayer_ops,
)
from .community import infer_nested_hierarchy, infer_partition_modularity
from .objectives import EdgeModel, EdgeModelKind, PairSet, log_likelihood, modularity, nmse
from .propagation import ActivationParams, FeatureState, Mode, OutputHead, PropagationConfig, hgnn_step, run
from .training import ModelParams, TrainConfig, train

__version__ = "0.1.0"
