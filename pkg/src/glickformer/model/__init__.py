from .blocks import (
    FactorizedSelfAttentionLayer, Head, Smolgen, SpatialBlock, TemporalLayer, TokenTransform,
    shared_smolgen_weight, tokenize_board,
)
from .config import VARIANTS, ModelConfig, canonical_variant
from .variants import (
    FactorizedEncoder, FactorizedSelfAttention, GlickFormerBase, StackedBaseline,
    build_model, count_parameters, load_model, save_model, sidecar_path,
)

__all__ = [
    "FactorizedSelfAttentionLayer", "Head", "Smolgen", "SpatialBlock", "TemporalLayer",
    "TokenTransform", "shared_smolgen_weight", "tokenize_board", "VARIANTS", "ModelConfig",
    "canonical_variant", "FactorizedEncoder", "FactorizedSelfAttention", "GlickFormerBase",
    "StackedBaseline", "build_model", "count_parameters", "load_model", "save_model",
    "sidecar_path",
]
