"""Non-local attention blocks with an associativity-reordered, low-memory
variant and a low-rank DCT position encoding."""

__version__ = "0.1.0"

from .dct_pos import (
    DctBasis,
    FrequencyMask,
    build_basis,
    default_mask,
    dense_l,
    extract_filter,
    position_term,
)
from .enl import EnlConfig, EnlGradients, enl_backward, enl_forward, enl_forward_pos, enl_module
from .nl_reference import (
    Combine,
    ModuleWeights,
    Normalization,
    SimilarityKind,
    nl_affinity,
    nl_forward,
    nl_forward_pos,
    nl_module,
    residual_wrap,
)
from .tensor import FeatureMap, ShapeError

__all__ = [
    "__version__",
    "Combine",
    "DctBasis",
    "EnlConfig",
    "EnlGradients",
    "FeatureMap",
    "FrequencyMask",
    "ModuleWeights",
    "Normalization",
    "ShapeError",
    "SimilarityKind",
    "build_basis",
    "default_mask",
    "dense_l",
    "enl_backward",
    "enl_forward",
    "enl_forward_pos",
    "enl_module",
    "extract_filter",
    "nl_affinity",
    "nl_forward",
    "nl_forward_pos",
    "nl_module",
    "position_term",
    "residual_wrap",
]
