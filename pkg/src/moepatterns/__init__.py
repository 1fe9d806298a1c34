"""Expert collaboration pattern mining and pruning for MoE activation data."""

from .activations import (
    ActivationTensor,
    DomainLabels,
    ExpertActivationMatrix,
    ExpertLayout,
    aggregate_tokens,
    flatten_to_matrix,
    read_labels,
    read_moeact,
    write_labels,
    write_moeact,
)
from .dictionary import (
    DictionaryLevel,
    Hierarchy,
    DictionaryConfig,
    encode,
    fit_hierarchy,
    fit_level,
    hierarchy_from_json,
    hierarchy_to_json,
    loss_data,
    loss_hier,
    loss_rec,
    loss_sparse,
    loss_total,
)
from .metrics import pruned_param_count, relative_change
from .mining import (
    CoactivationTable,
    DomainProfile,
    PatternAtom,
    TokenAnnotation,
    annotate_tokens,
    binarize_atoms,
    coverage,
    default_activation_threshold,
    domain_profiles,
    exhaustive_coactivation,
    similarity_matrix,
)
from .pruning import (
    ContributionState,
    MaskedActivationMatrix,
    PruneMask,
    apply_mask,
    contribution_scores,
    prune,
    prune_mask_to_json,
    threshold_mask,
)
from .synth import PlantedPattern, SynthConfig, generate, random_patterns

__version__ = "0.1.0"

__all__ = [
    "ActivationTensor",
    "CoactivationTable",
    "ContributionState",
    "DictionaryLevel",
    "DomainLabels",
    "DomainProfile",
    "ExpertActivationMatrix",
    "ExpertLayout",
    "Hierarchy",
    "DictionaryConfig",
    "MaskedActivationMatrix",
    "PatternAtom",
    "PlantedPattern",
    "PruneMask",
    "SynthConfig",
    "TokenAnnotation",
    "aggregate_tokens",
    "annotate_tokens",
    "apply_mask",
    "binarize_atoms",
    "contribution_scores",
    "coverage",
    "default_activation_threshold",
    "domain_profiles",
    "encode",
    "exhaustive_coactivation",
    "fit_hierarchy",
    "fit_level",
    "flatten_to_matrix",
    "generate",
    "hierarchy_from_json",
    "hierarchy_to_json",
    "loss_data",
    "loss_hier",
    "loss_rec",
    "loss_sparse",
    "loss_total",
    "prune",
    "prune_mask_to_json",
    "pruned_param_count",
    "random_patterns",
    "read_labels",
    "read_moeact",
    "relative_change",
    "similarity_matrix",
    "threshold_mask",
    "write_labels",
    "write_moeact",
]
