from .algebraic import EmbeddedModel, TruthModel, generate_data, linear_pair, sinexp_pair
from .adr import AdrGrid, AdrEmbeddedModel, adr_embedded_model, adr_solve, adr_truth_field, sample_field_nodes

__all__ = [
    "EmbeddedModel",
    "TruthModel",
    "generate_data",
    "linear_pair",
    "sinexp_pair",
    "AdrGrid",
    "AdrEmbeddedModel",
    "adr_embedded_model",
    "adr_solve",
    "adr_truth_field",
    "sample_field_nodes",
]
