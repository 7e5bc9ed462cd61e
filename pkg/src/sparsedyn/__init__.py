"""Link prediction on dynamic graphs with equal-event patches, per-patch
structural attention and a sparse relay-based temporal transformer."""
from .ade import distribution_stats, partition_by_events, partition_uniform, search_N
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import (CheckpointError, ConfigError, ContractError, DimensionError, ParseError,
                     ProtocolError, SparseDynError)
from .graph import (EventStream, Patch, PatchSequence, SynthConfig, TemporalEvent, load_continuous,
                    load_discrete, synthesize_stream, write_continuous, write_discrete)
from .model import ModelConfig, SparseDyn
from .train import (EvalReport, SamplerConfig, TrainConfig, evaluate, link_metrics, timing_report,
                    train_inductive, train_transductive)

__version__ = "0.1.0"
