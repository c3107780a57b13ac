"""Behavior cloning with a conditional denoising diffusion policy."""

from .artifact import load_model, save_model
from .data import action_deltas, build_training_arrays, replayed_beliefs
from .diffusion import (
    DiffusionConfig,
    DiffusionModel,
    beta_schedule,
    ddpm_train,
    noised_sample,
    sample_chunk,
    sinusoidal_embedding,
    training_loss_and_grads,
)
from .encode import encode_observation, encoding_dim
from .mlp import Adam, Mlp, numeric_gradient
from .rollout import ChunkPolicy, action_to_bicycle_control, bc_rollout

__all__ = [
    "DiffusionConfig",
    "DiffusionModel",
    "Mlp",
    "Adam",
    "ChunkPolicy",
    "action_deltas",
    "action_to_bicycle_control",
    "bc_rollout",
    "beta_schedule",
    "build_training_arrays",
    "ddpm_train",
    "encode_observation",
    "encoding_dim",
    "load_model",
    "noised_sample",
    "numeric_gradient",
    "replayed_beliefs",
    "sample_chunk",
    "save_model",
    "sinusoidal_embedding",
    "training_loss_and_grads",
]
