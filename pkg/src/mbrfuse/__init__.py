"""Speech-translation evaluation toolkit: normalization, metrics, MBR combination, MCD."""

__version__ = "0.1.0"

from .textnorm import NormalizedText, NormProfile, apply_profile, normalize_dialect, normalize_eval
from .metrics import bleu_corpus, bleu_sentence, cer, chrf, edit_distance, wer
from .mbr import Hypothesis, HypothesisPool, expected_utility, mbr_combine_corpus, mbr_select, merge_pools, utility_matrix
from .mcd import FeatureSequence, dtw_align, mcd_frame, mcd_score
from .datakit import SampleRecord, add_gaussian_noise, filter_duration, filter_length_ratio, spec_mask, subsample

__all__ = [
    "NormalizedText", "NormProfile", "apply_profile", "normalize_dialect", "normalize_eval",
    "bleu_corpus", "bleu_sentence", "cer", "chrf", "edit_distance", "wer",
    "Hypothesis", "HypothesisPool", "expected_utility", "mbr_combine_corpus", "mbr_select", "merge_pools", "utility_matrix",
    "FeatureSequence", "dtw_align", "mcd_frame", "mcd_score",
    "SampleRecord", "add_gaussian_noise", "filter_duration", "filter_length_ratio", "spec_mask", "subsample",
]
