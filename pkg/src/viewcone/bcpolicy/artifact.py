"""Binary model artifact: magic "PDIF", header, float64 parameter blocks.

All integers are little-endian uint32, all floats little-endian float64.
Layer blocks appear in forward order as (fan_in, fan_out, W row-major, b).
"""

import struct

import numpy as np

from .diffusion import DiffusionModel
from .mlp import Mlp

__all__ = ["save_model", "load_model", "MODEL_MAGIC", "MODEL_VERSION"]

MODEL_MAGIC = b"PDIF"
MODEL_VERSION = 1


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_model(model: DiffusionModel, path) -> None:
    net = model.net
    trace = model.loss_trace or []
    horizon_code = 0xFFFFFFFF if model.belief_horizon is None else model.belief_horizon
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(
            struct.pack(
                "<11I",
                MODEL_VERSION,
                model.enc_dim,
                model.horizon,
                model.action_dim,
                model.k_nearest,
                model.t_diff,
                model.time_embed_dim,
                net.n_layers,
                1 if model.padded else 0,
                len(trace),
                horizon_code,
            )
        )
        f.write(struct.pack("<2d", float(model.betas[0]), float(model.betas[-1])))
        f.write(_f64_bytes(model.act_center))
        f.write(_f64_bytes(model.act_half))
        f.write(_f64_bytes(model.enc_mean))
        f.write(_f64_bytes(model.enc_std))
        for i in range(net.n_layers):
            w, b = net.params[2 * i], net.params[2 * i + 1]
            f.write(struct.pack("<2I", w.shape[0], w.shape[1]))
            f.write(_f64_bytes(w))
            f.write(_f64_bytes(b))
        f.write(_f64_bytes(np.asarray(trace)))


def load_model(path) -> DiffusionModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MODEL_MAGIC:
        raise ValueError("not a model artifact (bad magic)")
    off = 4
    (
        version,
        enc_dim,
        horizon,
        action_dim,
        k_nearest,
        t_diff,
        time_embed_dim,
        n_layers,
        padded,
        n_trace,
        horizon_code,
    ) = struct.unpack_from("<11I", data, off)
    off += 44
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    beta_lo, beta_hi = struct.unpack_from("<2d", data, off)
    off += 16

    def read_f64(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
        off += 8 * count
        return arr

    act_center = read_f64(action_dim)
    act_half = read_f64(action_dim)
    enc_mean = read_f64(enc_dim)
    enc_std = read_f64(enc_dim)
    params = []
    sizes = None
    for _ in range(n_layers):
        fan_in, fan_out = struct.unpack_from("<2I", data, off)
        off += 8
        w = read_f64(fan_in * fan_out).reshape(fan_in, fan_out)
        b = read_f64(fan_out)
        params.extend([w, b])
        if sizes is None:
            sizes = [fan_in]
        sizes.append(fan_out)
    trace = read_f64(n_trace).tolist()

    betas = np.linspace(beta_lo, beta_hi, t_diff)
    return DiffusionModel(
        net=Mlp.from_params(sizes, params),
        t_diff=t_diff,
        betas=betas,
        alpha_bar=np.cumprod(1.0 - betas),
        enc_dim=enc_dim,
        horizon=horizon,
        action_dim=action_dim,
        k_nearest=k_nearest,
        time_embed_dim=time_embed_dim,
        act_center=act_center,
        act_half=act_half,
        enc_mean=enc_mean,
        enc_std=enc_std,
        belief_horizon=None if horizon_code == 0xFFFFFFFF else int(horizon_code),
        padded=bool(padded),
        loss_trace=trace,
    )
