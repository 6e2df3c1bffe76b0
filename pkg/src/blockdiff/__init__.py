"""Block-space denoising diffusion for graph generation.

Graphs are partitioned into blocks, a shared denoiser learns to reconstruct
clean blocks from Gaussian-corrupted analog states, a lightweight predictor
recovers sparse inter-block connections, and an element-count memory meter
measures the peak footprint against a full-graph baseline.
"""

from .diffusion import (AnalogGraphState, NoiseSchedule, decode_analog,
                        ddim_step, ddpm_step, encode_analog, forward_corrupt,
                        make_schedule, sample_state_noise)
from .errors import ContractViolation, NumericFault, ParseError, ShapeMismatch
from .graphs import BlockDecomposition, Graph, Partition, cut_size, decompose, reassemble
from .memory import METER, memory_scope
from .metrics import MetricsReport, descriptors, evaluate, fid, mmd, vun, wl_hash
from .model import DenoiserConfig, DenoiserParams, denoise_block, extract_features, init_params, predict_interblock
from .partition import brute_force_min_cut, partition_graph, spectral_bisect
from .sampling import SampleConfig, assemble_graph, sample_blocks, sample_dataset, sample_graph
from .tensor import Tensor, backward, no_grad
from .training import (Checkpoint, TrainConfig, build_training_pairs, fit,
                       load_checkpoint, save_checkpoint, train_step)

__version__ = "0.1.0"
