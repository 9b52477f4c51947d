"""deskvla: desk-scale instruction-generalization fine-tuning for VLA policies.

Workflow: synthesize or load trajectory datasets, generate and curate
paraphrase instruction sets, LoRA-adapt a small surrogate policy over
discretized action tokens, and score k-bin tolerance accuracy.
"""

from .actions import (
    ACTION_DIMS,
    NUM_BINS,
    NormalizationStats,
    TokenMap,
    bins_to_tokens,
    dequantize,
    fit_stats,
    normalize,
    quantize,
    tokens_to_bins,
)
from .evaluation import EvalReport, PredictionRecord, compare, evaluate, kbin_accuracy
from .instructions import (
    CandidateSet,
    CuratedSet,
    InstructionStore,
    PromptBundle,
    build_prompt,
    canonical_instruction,
    pair,
    parse_candidates,
)
from .llm import HttpLlmClient, LlmConfig, MockLlmClient
from .lora import AdapterGrads, LoraAdapter
from .policy import PolicyConfig, PolicyModel, TrainingExample
from .training import AdamW, TrainConfig, pretrain_base, train
from .trajectories import DatasetSplit, Trajectory, load, split, synthesize

__version__ = "0.1.0"

__all__ = [
    "ACTION_DIMS",
    "NUM_BINS",
    "AdamW",
    "AdapterGrads",
    "CandidateSet",
    "CuratedSet",
    "DatasetSplit",
    "EvalReport",
    "HttpLlmClient",
    "InstructionStore",
    "LlmConfig",
    "LoraAdapter",
    "MockLlmClient",
    "NormalizationStats",
    "PolicyConfig",
    "PolicyModel",
    "PredictionRecord",
    "PromptBundle",
    "TokenMap",
    "TrainConfig",
    "Trajectory",
    "TrainingExample",
    "bins_to_tokens",
    "build_prompt",
    "canonical_instruction",
    "compare",
    "dequantize",
    "evaluate",
    "fit_stats",
    "kbin_accuracy",
    "load",
    "normalize",
    "pair",
    "parse_candidates",
    "pretrain_base",
    "quantize",
    "split",
    "synthesize",
    "tokens_to_bins",
    "train",
]
