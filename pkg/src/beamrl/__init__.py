"""Learning a single analog beam with quantized phase shifters from receive power alone."""

from .array_core import PhaseCodebook, build_codebook, quantize_phases
from .channel import ArrayGeometry, ChannelConfig, ChannelSet
from .agent import AgentConfig, DDPGAgent
from .harness import ExperimentConfig, run_baselines, run_training

__version__ = "0.1.0"

__all__ = [
    "PhaseCodebook", "build_codebook", "quantize_phases",
    "ArrayGeometry", "ChannelConfig", "ChannelSet",
    "AgentConfig", "DDPGAgent",
    "ExperimentConfig", "run_baselines", "run_training",
]
