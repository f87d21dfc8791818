from .behavioral import (
    eval_cloze,
    eval_minimal_pairs,
    eval_multichoice,
    pll_score,
    pll_score_bruteforce,
)
from .data import (
    MASK_PLACEHOLDER,
    ArcSentence,
    ClozeItem,
    MinimalPairItem,
    MultiChoiceItem,
    TokenLabelSentence,
    dump_jsonl,
    load_arcs,
    load_cloze,
    load_minimal_pairs,
    load_multichoice,
    load_token_labels,
)
from .structural import (
    LinearProbeModel,
    ProbeHyper,
    ScalarMix,
    arc_candidates,
    bio_spans,
    eval_arcs,
    eval_segmentation,
    eval_token_labeling,
    mix,
    pair_feature_stacks,
    span_f1,
    token_feature_stacks,
    train_linear_probe,
)

__all__ = [
    "ArcSentence",
    "ClozeItem",
    "LinearProbeModel",
    "MASK_PLACEHOLDER",
    "MinimalPairItem",
    "MultiChoiceItem",
    "ProbeHyper",
    "ScalarMix",
    "TokenLabelSentence",
    "arc_candidates",
    "bio_spans",
    "dump_jsonl",
    "eval_arcs",
    "eval_cloze",
    "eval_minimal_pairs",
    "eval_multichoice",
    "eval_segmentation",
    "eval_token_labeling",
    "load_arcs",
    "load_cloze",
    "load_minimal_pairs",
    "load_multichoice",
    "load_token_labels",
    "mix",
    "pair_feature_stacks",
    "pll_score",
    "pll_score_bruteforce",
    "span_f1",
    "token_feature_stacks",
    "train_linear_probe",
]
