"""Sliding-window minimum-weight matching for rotated surface-code memory experiments."""

from .code_model import InvalidParameterError, build_layout, build_memory_circuit
from .dataset import export_windows, read_dataset
from .dem import DecodingGraph, DetectorErrorModel, ModelError, build_z_graph, extract_dem
from .estimators import MWPMDecoder, SlidingWindowDecoder, WindowTensorTransformer
from .experiments import (
    ExperimentStats,
    buffer_sweep,
    event_density,
    independence_estimate,
    ler_per_round,
    run_memory_experiment,
    threshold_sweep,
    window_stats,
)
from .frame_sim import sample, sample_batch
from .matching import brute_force_mwpm, mwpm
from .runtime import StreamConfig, run_stream, simulate_latency
from .windowing import SlidingWindowPipeline, derive_labels, partition

__version__ = "0.1.0"
