"""From-scratch neural toolkit: autodiff tape, dense/GRU layers, AdamW, checkpoints."""
from .autodiff import Tape, Var, const
from .layers import DenseLayer, GruCell, dense, gru_step
from .optim import OptimizerState, adamw_step, clip_global_norm, cosine_lr
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
