"""HMM-guided constrained text generation.

Compile logical constraints over token sequences into deterministic finite
automata, and steer any autoregressive token model so that every sampled
sequence provably satisfies them, using a hidden Markov model's exact
success marginals as guidance.
"""

__version__ = "0.1.0"

from .constraints import ConstraintSpec, GapWindow, Segment, compile_spec, estimate_size
from .dfa import Dfa, accepts, build_multi_pattern_dfa, build_substring_dfa
from .engine import (
    BackwardTable,
    GenerationSession,
    precompute_backward,
    sample_and_rerank,
    sample_sequence,
)
from .hmm import Hmm, fit_baum_welch, forward_init, forward_step, sequence_loglik

__all__ = [
    "BackwardTable",
    "ConstraintSpec",
    "Dfa",
    "GapWindow",
    "GenerationSession",
    "Hmm",
    "Segment",
    "accepts",
    "build_multi_pattern_dfa",
    "build_substring_dfa",
    "compile_spec",
    "estimate_size",
    "fit_baum_welch",
    "forward_init",
    "forward_step",
    "precompute_backward",
    "sample_and_rerank",
    "sample_sequence",
    "sequence_loglik",
    "__version__",
]
