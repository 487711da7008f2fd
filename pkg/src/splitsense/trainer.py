"""Training loop with KL annealing, dataset splitting and checkpointing.

Reproducibility mode is always on: parameter init, epoch shuffles and the
reparameterization noise are all seeded from the one TrainConfig seed, and
reductions run in a fixed order, so a rerun reproduces the loss history
bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptCheckpoint, NoNormals, NonFiniteLoss
from .preprocess import RoiTensor
from .vae import LossBreakdown, VaeConfig, VaeParams, init_params, loss_and_grads

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "splitsense-checkpoint"
CHECKPOINT_VERSION = 1

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"


def beta_schedule(t: int, total: int, beta_max: float) -> float:
    """KL weight: linear ramp over the first half of training, then flat."""
    if not 0 <= t <= total:
        raise ValueError(f"epoch {t} outside [0, {total}]")
    if 2 * t <= total:
        return (2.0 * t / total) * beta_max
    return beta_max


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2500
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta_max: float = 10.0
    latent_dim: int = 100
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # reduced-scale overrides for tests; None means the full-size model
    channel_widths: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.channel_widths is not None:
            object.__setattr__(self, "channel_widths", tuple(self.channel_widths))
        if self.epochs < 2:
            raise ConfigError("epochs must be >= 2")
        if self.beta_max <= 0:
            raise ConfigError("beta_max must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "channel_widths" in data and data["channel_widths"] is not None:
            data["channel_widths"] = tuple(data["channel_widths"])
        return cls(**data)


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    ratio: float
    seed: int


def split_dataset(items: list[tuple[str, str]], ratio: float,
                  seed: int) -> DatasetSplit:
    """Anomalous items all go to test; a seeded ratio-fraction of the
    normals goes to train, the rest to test."""
    if not items:
        raise NoNormals("empty dataset")
    normals = sorted(i for i, label in items if label == LABEL_NORMAL)
    anomalous = sorted(i for i, label in items if label != LABEL_NORMAL)
    if not normals:
        raise NoNormals("dataset contains no normal items")
    order = np.random.default_rng(seed).permutation(len(normals))
    n_train = int(np.floor(len(normals) * ratio + 0.5))
    train = sorted(normals[i] for i in order[:n_train])
    held_out = sorted(normals[i] for i in order[n_train:])
    return DatasetSplit(train_ids=tuple(train),
                        test_ids=tuple(held_out + anomalous),
                        ratio=ratio, seed=seed)


@dataclass
class Checkpoint:
    vae_config: VaeConfig
    params: VaeParams
    train_config: TrainConfig
    epoch: int
    history: list[tuple[int, float, float, float, float]]  # t, beta, recon, kl, total
    wavelengths: tuple[float, ...] | None = None


def _as_array(data) -> tuple[np.ndarray, tuple[float, ...] | None]:
    if isinstance(data, np.ndarray):
        return np.ascontiguousarray(data, dtype=np.float32), None
    rois = list(data)
    if not rois:
        raise ValueError("training data must be nonempty")
    if isinstance(rois[0], RoiTensor):
        stack = np.stack([r.values for r in rois])
        return stack, rois[0].wavelengths
    return np.ascontiguousarray(np.stack(rois), dtype=np.float32), None


def train(config: TrainConfig, data,
          wavelengths: tuple[float, ...] | None = None) -> Checkpoint:
    """Minibatch Adam on the annealed VAE loss for ``config.epochs`` epochs.

    ``data`` is an (N, C, H, W) float32 array or a sequence of RoiTensors.
    """
    x, roi_wl = _as_array(data)
    if wavelengths is None:
        wavelengths = roi_wl
    n, c, h, w = x.shape
    widths = config.channel_widths or VaeConfig().channel_widths
    vae_cfg = VaeConfig(in_channels=c, spatial=h, channel_widths=widths,
                        latent_dim=config.latent_dim)
    params = init_params(vae_cfg, config.seed)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    eps_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 2)))

    m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    v = {k: np.zeros_like(t) for k, t in params.tensors.items()}
    lr = np.float32(config.learning_rate)
    b1, b2 = np.float32(config.adam_beta1), np.float32(config.adam_beta2)
    eps_hat = np.float32(config.adam_epsilon)
    step = 0

    history: list[tuple[int, float, float, float, float]] = []
    for t in range(config.epochs):
        beta = beta_schedule(t, config.epochs, config.beta_max)
        order = shuffle_rng.permutation(n)
        recon_sum = kl_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = x[idx]
            eps = eps_rng.standard_normal((len(idx), config.latent_dim),
                                          dtype=np.float32)
            breakdown, grads = loss_and_grads(params, xb, eps, beta)
            if not np.isfinite(breakdown.total):
                raise NonFiniteLoss(t)
            step += 1
            c1 = np.float32(1.0 - float(b1) ** step)
            c2 = np.float32(1.0 - float(b2) ** step)
            for name, g in grads.items():
                mn, vn = m[name], v[name]
                mn *= b1
                mn += (np.float32(1) - b1) * g
                vn *= b2
                np.square(g, out=g)
                vn += (np.float32(1) - b2) * g
                params.tensors[name] -= lr * (mn / c1) / (
                    np.sqrt(vn / c2) + eps_hat)
            recon_sum += breakdown.recon
            kl_sum += breakdown.kl
        recon_epoch = recon_sum / n
        kl_epoch = kl_sum / n
        history.append((t, beta, recon_epoch, kl_epoch,
                        recon_epoch + beta * kl_epoch))
        if t % 25 == 0 or t == config.epochs - 1:
            logger.info("epoch %d: beta %.3f recon/sample %.1f kl/sample %.3f",
                        t, beta, recon_epoch, kl_epoch)
    return Checkpoint(vae_config=vae_cfg, params=params, train_config=config,
                      epoch=config.epochs, history=history,
                      wavelengths=tuple(wavelengths) if wavelengths else None)


# --- checkpoint persistence ------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Directory layout: manifest.json plus tensors/<name>.bin (LE float32)."""
    path = Path(path)
    (path / "tensors").mkdir(parents=True, exist_ok=True)
    tensors_meta = {}
    for name in sorted(ckpt.params.tensors):
        arr = ckpt.params.tensors[name].astype("<f4", copy=False)
        payload = arr.tobytes()
        (path / "tensors" / f"{name}.bin").write_bytes(payload)
        tensors_meta[name] = {
            "shape": list(arr.shape),
            "dtype": "float32",
            "nbytes": len(payload),
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
    manifest = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "vae_config": asdict(ckpt.vae_config),
        "train_config": asdict(ckpt.train_config),
        "epoch": ckpt.epoch,
        "history": [list(row) for row in ckpt.history],
        "wavelengths": list(ckpt.wavelengths) if ckpt.wavelengths else None,
        "tensors": tensors_meta,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1,
                                                   sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CorruptCheckpoint(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable manifest: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad checkpoint magic")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported version {manifest.get('version')}")
    vc = dict(manifest["vae_config"])
    vc["channel_widths"] = tuple(vc["channel_widths"])
    vae_cfg = VaeConfig(**vc)
    tc = dict(manifest["train_config"])
    if tc.get("channel_widths") is not None:
        tc["channel_widths"] = tuple(tc["channel_widths"])
    train_cfg = TrainConfig(**tc)
    tensors = {}
    for name, meta in manifest["tensors"].items():
        blob_path = path / "tensors" / f"{name}.bin"
        if not blob_path.exists():
            raise CorruptCheckpoint(f"missing tensor file {blob_path.name}")
        payload = blob_path.read_bytes()
        if len(payload) != meta["nbytes"]:
            raise CorruptCheckpoint(
                f"tensor {name}: {len(payload)} bytes, manifest says {meta['nbytes']}")
        if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
            raise CorruptCheckpoint(f"tensor {name}: content hash mismatch")
        arr = np.frombuffer(payload, dtype="<f4").reshape(meta["shape"])
        tensors[name] = arr.astype(np.float32)
    expected = {f"enc{i}_{s}" for i in range(1, len(vae_cfg.channel_widths) + 1)
                for s in "wb"}
    expected |= {f"dec{i}_{s}" for i in range(1, len(vae_cfg.channel_widths) + 1)
                 for s in "wb"}
    expected |= {"fc_mu_w", "fc_mu_b", "fc_logvar_w", "fc_logvar_b",
                 "fc_dec_w", "fc_dec_b"}
    if set(tensors) != expected:
        raise CorruptCheckpoint("tensor set does not match architecture")
    params = VaeParams(vae_cfg, tensors)
    history = [tuple(row) for row in manifest["history"]]
    wl = manifest.get("wavelengths")
    return Checkpoint(vae_config=vae_cfg, params=params, train_config=train_cfg,
                      epoch=manifest["epoch"], history=history,
                      wavelengths=tuple(wl) if wl else None)


def history_csv(history: list[tuple[int, float, float, float, float]]) -> str:
    lines = ["epoch,beta,recon,kl,total"]
    for t, beta, recon, kl, total in history:
        lines.append(f"{t},{beta!r},{recon!r},{kl!r},{total!r}")
    return "\n".join(lines) + "\n"
