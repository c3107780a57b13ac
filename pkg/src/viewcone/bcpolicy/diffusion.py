"""Conditional denoising diffusion over action chunks.

Standard noise-prediction training with a linear beta schedule; sampling
runs a deterministic DDIM pass over a stride-subsampled timestep ladder and
finishes with stochastic DDPM steps on the final timesteps.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..sim import Dataset
from .data import build_training_arrays
from .encode import encoding_dim
from .mlp import Adam, Mlp

__all__ = [
    "DiffusionConfig",
    "DiffusionModel",
    "beta_schedule",
    "sinusoidal_embedding",
    "noised_sample",
    "training_loss_and_grads",
    "ddpm_train",
    "sample_chunk",
]


@dataclass(frozen=True)
class DiffusionConfig:
    """Denoiser, schedule, optimizer, and sampler settings."""

    t_diff: int = 100
    beta_lo: float = 1e-4
    beta_hi: float = 0.02
    hidden: tuple[int, ...] = (256, 256, 256)
    time_embed_dim: int = 32
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 60
    ddim_steps: int = 10
    ddpm_tail_steps: int = 10
    horizon: int = 8
    action_dim: int = 3
    k_nearest: int = 5
    belief_horizon: int | None = 12

    def __post_init__(self):
        if not (0 < self.beta_lo < self.beta_hi < 1):
            raise ValueError("need 0 < beta_lo < beta_hi < 1")
        if self.t_diff < 1:
            raise ValueError("t_diff must be >= 1")
        if self.ddim_steps + self.ddpm_tail_steps > self.t_diff:
            raise ValueError("ddim_steps + ddpm_tail_steps must be <= t_diff")
        if self.ddim_steps == 0 and self.ddpm_tail_steps != self.t_diff:
            raise ValueError("with ddim_steps = 0 the DDPM tail must cover all t_diff steps")
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even")
        if self.horizon < 1 or self.action_dim < 1:
            raise ValueError("horizon and action_dim must be >= 1")


def beta_schedule(cfg: DiffusionConfig) -> np.ndarray:
    return np.linspace(cfg.beta_lo, cfg.beta_hi, cfg.t_diff)


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Transformer-style embedding of (integer) diffusion timesteps."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(t, dtype=float)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass(eq=False)
class DiffusionModel:
    """Trained denoiser plus everything needed to sample from it."""

    net: Mlp
    t_diff: int
    betas: np.ndarray
    alpha_bar: np.ndarray
    enc_dim: int
    horizon: int
    action_dim: int
    k_nearest: int
    time_embed_dim: int
    act_center: np.ndarray
    act_half: np.ndarray
    enc_mean: np.ndarray
    enc_std: np.ndarray
    belief_horizon: int | None = 12
    padded: bool = False
    loss_trace: list[float] | None = None

    def normalize(self, chunk: np.ndarray) -> np.ndarray:
        return (chunk - self.act_center) / self.act_half

    def denormalize(self, chunk: np.ndarray) -> np.ndarray:
        return chunk * self.act_half + self.act_center

    def normalize_encoding(self, enc: np.ndarray) -> np.ndarray:
        return (enc - self.enc_mean) / self.enc_std

    def alpha_bar_at(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def predict_noise(self, x_t: np.ndarray, enc_norm: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Denoiser forward pass; ``enc_norm`` must already be standardized."""
        emb = sinusoidal_embedding(t, self.time_embed_dim)
        return self.net.forward(np.concatenate([x_t, enc_norm, emb], axis=1))


def noised_sample(
    x0: np.ndarray, t: np.ndarray, eps: np.ndarray, alpha_bar: np.ndarray, noise_scale: float = 1.0
) -> np.ndarray:
    """Closed-form forward process at timesteps t (1-based).

    ``noise_scale`` is a test hook scaling the added-noise term only; the
    regression target stays the unscaled noise.
    """
    ab = alpha_bar[np.asarray(t, dtype=int) - 1][:, None]
    return np.sqrt(ab) * x0 + noise_scale * np.sqrt(1.0 - ab) * eps


def training_loss_and_grads(
    net: Mlp,
    model_meta: DiffusionModel,
    x0: np.ndarray,
    enc: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    noise_scale: float = 1.0,
    with_grads: bool = True,
):
    """Mean squared error of predicted vs true noise, with parameter grads."""
    x_t = noised_sample(x0, t, eps, model_meta.alpha_bar, noise_scale)
    emb = sinusoidal_embedding(t, model_meta.time_embed_dim)
    inp = np.concatenate([x_t, enc, emb], axis=1)
    if not with_grads:
        pred = net.forward(inp)
        r = pred - eps
        return float(np.mean(r * r)), None
    pred, cache = net.forward_cache(inp)
    r = pred - eps
    loss = float(np.mean(r * r))
    grads = net.backward(cache, (2.0 / r.size) * r)
    return loss, grads


def ddpm_train(dataset: Dataset, cfg: DiffusionConfig, rng: np.random.Generator) -> DiffusionModel:
    """Train the conditional denoiser on a demonstration dataset.

    Actions are normalized per dimension to zero mean and unit variance over
    the presented chunks (statistics stored in the model).  Deterministic
    given the generator state; the per-epoch loss trace rides on the model.
    """
    encs, chunks, padded = build_training_arrays(
        dataset, cfg.k_nearest, cfg.horizon, cfg.belief_horizon
    )
    flat = chunks.reshape(-1, cfg.action_dim)
    # Min-max to [-1, 1]: rare, large actions (hard dodges, reorientation
    # turns) must stay reachable from the unit-Gaussian the sampler starts at.
    lo, hi = flat.min(axis=0), flat.max(axis=0)
    act_center = (hi + lo) / 2.0
    half = (hi - lo) / 2.0
    act_half = np.where(half > 1e-12, half, 1.0)
    e_std = encs.std(axis=0)
    enc_mean = encs.mean(axis=0)
    enc_std = np.where(e_std > 1e-12, e_std, 1.0)

    betas = beta_schedule(cfg)
    alpha_bar = np.cumprod(1.0 - betas)
    enc_dim = encoding_dim(cfg.k_nearest)
    chunk_dim = cfg.horizon * cfg.action_dim
    net = Mlp([chunk_dim + enc_dim + cfg.time_embed_dim, *cfg.hidden, chunk_dim], rng)
    model = DiffusionModel(
        net=net,
        t_diff=cfg.t_diff,
        betas=betas,
        alpha_bar=alpha_bar,
        enc_dim=enc_dim,
        horizon=cfg.horizon,
        action_dim=cfg.action_dim,
        k_nearest=cfg.k_nearest,
        time_embed_dim=cfg.time_embed_dim,
        act_center=act_center,
        act_half=act_half,
        enc_mean=enc_mean,
        enc_std=enc_std,
        belief_horizon=cfg.belief_horizon,
        padded=padded,
        loss_trace=[],
    )

    encs = model.normalize_encoding(encs)
    x0_all = model.normalize(chunks).reshape(len(chunks), chunk_dim)
    n = len(x0_all)

    # Entry 0 of the loss trace is the pre-training loss on a fixed probe
    # batch (~1.0 with the zero-initialized head); later entries are
    # per-epoch means.
    probe = min(n, 2048)
    t_probe = rng.integers(1, cfg.t_diff + 1, size=probe)
    eps_probe = rng.standard_normal((probe, chunk_dim))
    loss0, _ = training_loss_and_grads(
        net, model, x0_all[:probe], encs[:probe], t_probe, eps_probe, with_grads=False
    )
    model.loss_trace.append(loss0)

    adam = Adam(net.params, lr=cfg.lr)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            t = rng.integers(1, cfg.t_diff + 1, size=len(idx))
            eps = rng.standard_normal((len(idx), chunk_dim))
            loss, grads = training_loss_and_grads(net, model, x0_all[idx], encs[idx], t, eps)
            adam.step(net.params, grads)
            epoch_losses.append(loss)
        model.loss_trace.append(float(np.mean(epoch_losses)))
    return model


def _ddim_ladder(cfg: DiffusionConfig) -> list[int]:
    """Strictly decreasing timesteps from t_diff down to the DDPM tail."""
    if cfg.ddim_steps == 0:
        return [cfg.t_diff]
    raw = np.linspace(cfg.t_diff, cfg.ddpm_tail_steps, cfg.ddim_steps + 1)
    ladder = []
    for v in np.round(raw).astype(int):
        if not ladder or v < ladder[-1]:
            ladder.append(int(v))
    return ladder


def sample_chunk(
    model: DiffusionModel,
    enc: np.ndarray,
    cfg: DiffusionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw one action chunk: DDIM (eta = 0) down the ladder, DDPM tail after.

    Returns a de-normalized (horizon, action_dim) matrix.
    """
    enc = np.asarray(enc, dtype=float).reshape(1, -1)
    if enc.shape[1] != model.enc_dim:
        raise ValueError(f"encoding dim {enc.shape[1]} != model dim {model.enc_dim}")
    enc = model.normalize_encoding(enc)
    chunk_dim = model.horizon * model.action_dim
    x = rng.standard_normal((1, chunk_dim))

    ladder = _ddim_ladder(cfg)
    for tau, tau_next in zip(ladder[:-1], ladder[1:]):
        ab_t = model.alpha_bar_at(tau)
        ab_n = model.alpha_bar_at(tau_next)
        eps_hat = model.predict_noise(x, enc, np.array([tau]))
        x0_hat = (x - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
        x = math.sqrt(ab_n) * x0_hat + math.sqrt(1.0 - ab_n) * eps_hat

    for t in range(cfg.ddpm_tail_steps, 0, -1):
        ab_t = model.alpha_bar_at(t)
        ab_p = model.alpha_bar_at(t - 1)
        beta_t = float(model.betas[t - 1])
        alpha_t = 1.0 - beta_t
        eps_hat = model.predict_noise(x, enc, np.array([t]))
        mean = (x - (beta_t / math.sqrt(1.0 - ab_t)) * eps_hat) / math.sqrt(alpha_t)
        if t > 1:
            var = beta_t * (1.0 - ab_p) / (1.0 - ab_t)
            x = mean + math.sqrt(var) * rng.standard_normal((1, chunk_dim))
        else:
            x = mean

    chunk = x.reshape(model.horizon, model.action_dim)
    return model.denormalize(chunk)
