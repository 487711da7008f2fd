"""Convolutional VAE for 16-band tomato ROIs.

Encoder: five stride-2 3x3 convs (ReLU) shrinking 210 -> 105 -> 53 -> 27
-> 14 -> 7 while widening 16 -> 256 channels, then two affine heads mapping
the flattened 256*7*7 = 12544 vector to the latent mean and log-variance.
Decoder mirrors it with transposed convs, ReLU except a final sigmoid.

Reconstruction loss is the unreduced L1 sum over all elements of a sample;
KL is the closed-form divergence to a standard normal. Noise for the
reparameterization step is always injected by the caller so that scoring
and training stay reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .errors import ShapeMismatch


def conv_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


@dataclass(frozen=True)
class VaeConfig:
    in_channels: int = 16
    spatial: int = 210
    channel_widths: tuple[int, ...] = (16, 32, 64, 128, 256)
    latent_dim: int = 100
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "channel_widths", tuple(self.channel_widths))
        if not self.channel_widths:
            raise ValueError("channel_widths must be nonempty")
        if self.latent_dim < 1 or self.in_channels < 1 or self.spatial < 1:
            raise ValueError("latent_dim, in_channels and spatial must be >= 1")
        for size in self.spatial_chain:
            if size < 1:
                raise ValueError("spatial chain collapses below 1 pixel")
        for op in self.decoder_output_padding:
            if not 0 <= op < self.stride:
                raise ValueError(
                    "spatial chain is not invertible by transposed convs "
                    f"(required output padding {op})"
                )

    @property
    def spatial_chain(self) -> tuple[int, ...]:
        sizes = [self.spatial]
        for _ in self.channel_widths:
            sizes.append(conv_out(sizes[-1], self.kernel, self.stride, self.padding))
        return tuple(sizes)

    @property
    def decoder_output_padding(self) -> tuple[int, ...]:
        """Per transposed layer (innermost first), the padding needed to hit
        the mirrored encoder size exactly."""
        chain = self.spatial_chain
        out = []
        for j in range(len(self.channel_widths)):
            src = chain[-1 - j]
            dst = chain[-2 - j]
            natural = (src - 1) * self.stride - 2 * self.padding + self.kernel
            out.append(dst - natural)
        return tuple(out)

    @property
    def flat_dim(self) -> int:
        return self.channel_widths[-1] * self.spatial_chain[-1] ** 2

    def encoder_channels(self) -> list[tuple[int, int]]:
        ins = (self.in_channels,) + self.channel_widths[:-1]
        return list(zip(ins, self.channel_widths))

    def decoder_channels(self) -> list[tuple[int, int]]:
        widths = self.channel_widths
        pairs = []
        for j in range(len(widths)):
            c_in = widths[-1 - j]
            c_out = widths[-2 - j] if j < len(widths) - 1 else self.in_channels
            pairs.append((c_in, c_out))
        return pairs


@dataclass
class VaeParams:
    """Named tensor collection plus the architecture that shaped it."""

    config: VaeConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def astype(self, dtype) -> "VaeParams":
        return VaeParams(self.config,
                         {k: v.astype(dtype) for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


@dataclass
class LossBreakdown:
    recon: float
    kl: float
    beta: float
    total: float
    recon_per_sample: np.ndarray
    kl_per_sample: np.ndarray


def init_params(config: VaeConfig, seed: int) -> VaeParams:
    """Uniform +-sqrt(1/fan_in) kernels, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    k = config.kernel
    tensors: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in):
        lim = np.sqrt(1.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(np.float32)

    for i, (c_in, c_out) in enumerate(config.encoder_channels(), start=1):
        tensors[f"enc{i}_w"] = uniform((c_out, c_in, k, k), c_in * k * k)
        tensors[f"enc{i}_b"] = np.zeros(c_out, dtype=np.float32)
    flat = config.flat_dim
    s = config.latent_dim
    tensors["fc_mu_w"] = uniform((s, flat), flat)
    tensors["fc_mu_b"] = np.zeros(s, dtype=np.float32)
    tensors["fc_logvar_w"] = uniform((s, flat), flat)
    tensors["fc_logvar_b"] = np.zeros(s, dtype=np.float32)
    tensors["fc_dec_w"] = uniform((flat, s), s)
    tensors["fc_dec_b"] = np.zeros(flat, dtype=np.float32)
    for i, (c_in, c_out) in enumerate(config.decoder_channels(), start=1):
        tensors[f"dec{i}_w"] = uniform((c_in, c_out, k, k), c_in * k * k)
        tensors[f"dec{i}_b"] = np.zeros(c_out, dtype=np.float32)
    return VaeParams(config, tensors)


def _check_input(config: VaeConfig, x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1] != config.in_channels \
            or x.shape[2] != config.spatial or x.shape[3] != config.spatial:
        raise ShapeMismatch(
            f"expected (N, {config.in_channels}, {config.spatial}, "
            f"{config.spatial}), got {x.shape}"
        )


def encode(params: VaeParams, x: np.ndarray, want_cache: bool = False):
    """Map (N, C, H, W) inputs to (mu, logvar), each (N, latent_dim)."""
    cfg = params.config
    _check_input(cfg, x)
    a = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    acts = []
    caches = []
    n_layers = len(cfg.channel_widths)
    for i in range(1, n_layers + 1):
        y, cache = layers.conv2d(a, params[f"enc{i}_w"], params[f"enc{i}_b"],
                                 cfg.stride, cfg.padding)
        a = layers.relu(y)
        acts.append(a)
        caches.append(cache)
    n = x.shape[0]
    flat = np.ascontiguousarray(a.transpose(1, 0, 2, 3)).reshape(n, -1)
    mu = layers.linear(flat, params["fc_mu_w"], params["fc_mu_b"])
    logvar = layers.linear(flat, params["fc_logvar_w"], params["fc_logvar_b"])
    if want_cache:
        return mu, logvar, {"acts": acts, "caches": caches, "flat": flat}
    return mu, logvar


def reparameterize(mu: np.ndarray, logvar: np.ndarray,
                   eps: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps, elementwise."""
    return mu + np.exp(0.5 * logvar) * eps


def decode(params: VaeParams, z: np.ndarray, want_cache: bool = False):
    """Map (N, latent_dim) codes to reconstructions in (0, 1)."""
    cfg = params.config
    if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ShapeMismatch(f"expected (N, {cfg.latent_dim}), got {z.shape}")
    n = z.shape[0]
    h = layers.linear(z, params["fc_dec_w"], params["fc_dec_b"])
    side = cfg.spatial_chain[-1]
    a = np.ascontiguousarray(
        h.reshape(n, cfg.channel_widths[-1], side, side).transpose(1, 0, 2, 3))
    out_pads = cfg.decoder_output_padding
    acts = []
    caches = []
    n_layers = len(cfg.channel_widths)
    for i in range(1, n_layers + 1):
        y, cache = layers.conv_transpose2d(
            a, params[f"dec{i}_w"], params[f"dec{i}_b"],
            cfg.stride, cfg.padding, out_pads[i - 1])
        a = layers.sigmoid(y) if i == n_layers else layers.relu(y)
        acts.append(a)
        caches.append(cache)
    xhat = np.ascontiguousarray(a.transpose(1, 0, 2, 3))
    if want_cache:
        return xhat, {"acts": acts, "caches": caches, "z": z}
    return xhat


def vae_loss(x: np.ndarray, xhat: np.ndarray, mu: np.ndarray,
             logvar: np.ndarray, beta: float) -> LossBreakdown:
    """L1 reconstruction sum plus beta-weighted KL divergence.

    Per-sample values are retained; batch totals are their sums. The KL
    term is computed as 0.5 * sum(mu^2 + expm1(V) - V), an algebraically
    identical form whose summands are individually nonnegative.
    """
    if x.shape != xhat.shape:
        raise ShapeMismatch(f"x {x.shape} vs xhat {xhat.shape}")
    recon_ps = np.abs(x - xhat).sum(axis=(1, 2, 3), dtype=np.float64)
    lv = logvar.astype(np.float64, copy=False)
    kl_ps = 0.5 * (mu.astype(np.float64, copy=False) ** 2
                   + np.expm1(lv) - lv).sum(axis=1)
    recon = float(recon_ps.sum())
    kl = float(kl_ps.sum())
    return LossBreakdown(recon, kl, float(beta), recon + beta * kl,
                         recon_ps, kl_ps)


def loss_and_grads(params: VaeParams, x: np.ndarray, eps: np.ndarray,
                   beta: float):
    """Full forward pass plus analytic gradients of the total loss.

    Returns (LossBreakdown, grads) where grads maps every tensor name in
    ``params`` to its gradient array.
    """
    cfg = params.config
    mu, logvar, enc = encode(params, x, want_cache=True)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    xhat, dec = decode(params, z, want_cache=True)
    breakdown = vae_loss(x, xhat, mu, logvar, beta)

    grads: dict[str, np.ndarray] = {}
    n_layers = len(cfg.channel_widths)
    n = x.shape[0]

    # reconstruction path back through the decoder
    dact = np.empty((x.shape[1], n, x.shape[2], x.shape[3]), dtype=x.dtype)
    np.subtract(xhat.transpose(1, 0, 2, 3), x.transpose(1, 0, 2, 3), out=dact)
    np.sign(dact, out=dact)
    dcur = None
    for i in range(n_layers, 0, -1):
        post = dec["acts"][i - 1]
        if i == n_layers:
            dcur = layers.sigmoid_backward(dact, post)
        else:
            dcur = layers.relu_backward(dcur, post)
        dcur, dw, db = layers.conv_transpose2d_backward(
            dcur, params[f"dec{i}_w"], dec["caches"][i - 1])
        grads[f"dec{i}_w"] = dw
        grads[f"dec{i}_b"] = db
    side = cfg.spatial_chain[-1]
    dh = np.ascontiguousarray(dcur.transpose(1, 0, 2, 3)).reshape(n, -1)
    dz, dw, db = layers.linear_backward(dh, dec["z"], params["fc_dec_w"])
    grads["fc_dec_w"] = dw
    grads["fc_dec_b"] = db

    # KL path joins at (mu, logvar)
    dmu = dz + beta * mu
    dlogvar = dz * eps * 0.5 * sigma + beta * 0.5 * np.expm1(logvar)

    flat = enc["flat"]
    dflat_mu, dw, db = layers.linear_backward(dmu, flat, params["fc_mu_w"])
    grads["fc_mu_w"] = dw
    grads["fc_mu_b"] = db
    dflat_lv, dw, db = layers.linear_backward(dlogvar, flat,
                                              params["fc_logvar_w"])
    grads["fc_logvar_w"] = dw
    grads["fc_logvar_b"] = db

    dcur = np.ascontiguousarray(
        (dflat_mu + dflat_lv)
        .reshape(n, cfg.channel_widths[-1], side, side)
        .transpose(1, 0, 2, 3))
    for i in range(n_layers, 0, -1):
        dcur = layers.relu_backward(dcur, enc["acts"][i - 1])
        dcur, dw, db = layers.conv2d_backward(
            dcur, params[f"enc{i}_w"], enc["caches"][i - 1], need_dx=(i > 1))
        grads[f"enc{i}_w"] = dw
        grads[f"enc{i}_b"] = db
    return breakdown, grads
