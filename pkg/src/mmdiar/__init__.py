"""Multimodal speaker diarization with constraint propagation."""

from .cluster import ClusterConfig, ahc_cluster, estimate_k, spectral_cluster
from .corpus import Diarization, Segment, Turn, emit_rttm, parse_rttm
from .fusion import FusionConfig, adjust_affinity, e2cp_propagate
from .metrics import MetricsConfig, compute_cpwer, compute_der, compute_jer
from .pipeline import PipelineConfig, diarize
from .synth import SynthSpec, gen_conversation, run_ablation
from .verify import VerificationConfig, compute_eer, compute_min_dcf

__version__ = "0.1.0"

__all__ = [
    "ClusterConfig", "Diarization", "FusionConfig", "MetricsConfig", "PipelineConfig",
    "Segment", "SynthSpec", "Turn", "VerificationConfig", "adjust_affinity", "ahc_cluster",
    "compute_cpwer", "compute_der", "compute_eer", "compute_jer", "compute_min_dcf",
    "diarize", "e2cp_propagate", "emit_rttm", "estimate_k", "gen_conversation",
    "parse_rttm", "run_ablation", "spectral_cluster",
]
