"""Transition-based and graph-based dependency parsers over a shared BiLSTM
encoder, with contextual-vector input and an error-analysis toolkit."""

from .analysis import attachment_scores, compute_profile, error_reduction, wilcoxon_signed_rank
from .graph import brute_force_arborescence, cle, single_root_cle
from .model import GraphParser, ModelConfig, TransitionParser, load_parser
from .training import TrainConfig, multi_seed, train
from .transition import dynamic_costs, static_oracle
from .treebank import DepTree, Sentence, Token, read_conllu, validate_tree, write_conllu

__all__ = [
    "attachment_scores", "compute_profile", "error_reduction", "wilcoxon_signed_rank",
    "brute_force_arborescence", "cle", "single_root_cle",
    "GraphParser", "ModelConfig", "TransitionParser", "load_parser",
    "TrainConfig", "multi_seed", "train",
    "dynamic_costs", "static_oracle",
    "DepTree", "Sentence", "Token", "read_conllu", "validate_tree", "write_conllu",
]

__version__ = "0.1.0"
