"""Event-driven training of multi-spike LIF networks with exact spike-time gradients."""
from .backward import GradientSet, GradientTape, backward, forward_with_tape, spike_time_partials
from .config import ConfigError, RunConfig
from .core import (CoefficientAccumulator, CoefficientPair, NeuronParams, SpikeEvent, SpikeTrain,
                   accumulate_coefficients, kernel_eval, membrane_potential_at, solve_next_spike,
                   time_to_z, z_to_time)
from .data import Dataset, latency_encode, load_mnist, parse_idx
from .estimator import LatencyEncoder, SpikingClassifier
from .forward import EngineConfig, LayerSpec, layer_forward, network_forward, neuron_forward
from .loss import LossConfig, batch_loss, dead_neuron_flags, softmax_cross_entropy, total_loss
from .optim import AdamState, SpikingModel, adam_step, evaluate, init_weights, train_epoch

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CoefficientAccumulator", "CoefficientPair", "ConfigError", "Dataset",
    "EngineConfig", "GradientSet", "GradientTape", "LatencyEncoder", "LayerSpec", "LossConfig",
    "NeuronParams", "RunConfig", "SpikeEvent", "SpikeTrain", "SpikingClassifier", "SpikingModel",
    "accumulate_coefficients", "adam_step", "backward", "batch_loss", "dead_neuron_flags",
    "evaluate", "forward_with_tape", "init_weights", "kernel_eval", "latency_encode",
    "layer_forward", "load_mnist", "membrane_potential_at", "network_forward", "neuron_forward",
    "parse_idx", "softmax_cross_entropy", "solve_next_spike", "spike_time_partials", "time_to_z",
    "total_loss", "train_epoch", "z_to_time",
]
