"""Desk-scale nonlinear autoencoders trained with hand-derived backprop."""

from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .experiment import ClusterReport, cluster_radius_experiment
from .models import (
    AutoEncoder, ExplicitBatch, ExplicitDecoder, ImplicitBatch, ImplicitDecoder, PointEncoder,
    decode_implicit, encode, encode_many, forward_backward,
)
from .nn import AdamState, DenseLayer, MLP, adam_step
from .train import TrainConfig, TrainResult, train_eae, train_iae

__all__ = [
    "AdamState", "AutoEncoder", "ClusterReport", "DenseLayer", "ExplicitBatch", "ExplicitDecoder",
    "ImplicitBatch", "ImplicitDecoder", "MLP", "PointEncoder", "TrainConfig", "TrainResult",
    "adam_step", "cluster_radius_experiment", "decode_checkpoint", "decode_implicit", "encode",
    "encode_checkpoint", "encode_many", "forward_backward", "load_checkpoint", "save_checkpoint",
    "train_eae", "train_iae",
]
