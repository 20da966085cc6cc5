"""Node-centric multi-modal learning on dynamic text-attributed graphs."""

from .analysis import (BatchSpec, KdeCurve, export_modality_distributions,
                       kde, kde_overlap, token_alignment_overlap)
from .autodiff import AdamConfig, Param, Tape, Tensor, adam_step, finite_diff_check
from .encoders import (EncoderConfig, FFNLayer, ModalityTokens,
                       SelfAttentionBlock, StructuralEncoder, TemporalEncoder,
                       TextualEncoder, TimeEncoder)
from .fusion import (DiscreteJoint, EdgeClassDecoder, FusionParams,
                     LinkDecoder, LossConfig, bce_link_loss, cross_entropy,
                     distribution_loss, fuse, instance_loss, mi_chain_check,
                     total_loss)
from .graph import (AuditingNeighborIndex, DatasetFormatError, DyTagDataset,
                    FeatureTable, NeighborIndex, SplitView, TemporalEvent,
                    build_neighbor_index, chronological_split, load_dataset,
                    recent_behaviors, recent_neighbors, save_dataset)
from .metrics import auc, average_precision, spearman, weighted_precision
from .model import Model, VARIANTS
from .rng import RunRng
from .synthetic import SynthConfig, benchmark_config, generate
from .training import (EpochStats, MetricsReport, TrainConfig, alpha_sweep,
                       evaluate_edge_class, evaluate_link, run_ablation,
                       sample_negatives, train, write_history, write_report)

__version__ = "0.1.0"
