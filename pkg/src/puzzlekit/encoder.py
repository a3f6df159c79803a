"""Frozen toy transformer encoder with per-question-type bottleneck adapters.

One small pre-norm ViT backbone stays frozen; each encoder layer carries
one parallel bottleneck adapter per question type on its feed-forward
sublayer, and a forward pass routes through exactly the adapter of the
sample's type. Adapter up-projections start at zero, so a fresh encoder
is bit-identical to its backbone, and training touches adapters plus the
linear option head only.

Everything is float64 numpy with hand-written backward passes; gradients
are exact and checkable against central differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .core import DEFAULT_TYPES, validate_type_list
from .rng import Rng, derive_seed
from .scene import IconLibrary, SceneSpec, compose_scene

__all__ = [
    "EncoderConfig",
    "TrainConfig",
    "AdaptedEncoder",
    "TrainReport",
    "TrainingDiverged",
    "LabeledDataset",
    "init_encoder",
    "forward",
    "backbone_forward",
    "loss_and_grads",
    "train",
    "evaluate_accuracy",
    "count_trainable_params",
    "gradient_check",
    "make_counting_task",
    "save_checkpoint",
    "load_checkpoint",
]

FF_MULT = 4  # feed-forward hidden width as a multiple of the model width
LN_EPS = 1e-5
N_OPTIONS = 5
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 64
    channels: int = 1
    patch_size: int = 8
    width: int = 32
    layers: int = 2
    heads: int = 4
    bottleneck: int = 8
    adapter_scale: float = 4.0
    type_list: tuple[str, ...] = DEFAULT_TYPES

    def __post_init__(self):
        validate_type_list(self.type_list)
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.bottleneck < 1:
            raise ValueError(f"bottleneck must be >= 1, got {self.bottleneck}")
        if self.layers < 1 or self.channels < 1:
            raise ValueError("layers and channels must be >= 1")

    @property
    def n_tokens(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def n_types(self) -> int:
        return len(self.type_list)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    def type_index(self, qtype: str) -> int:
        try:
            return self.type_list.index(qtype)
        except ValueError:
            raise ValueError(f"unknown question type {qtype!r}") from None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    steps: int = 2000
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.steps < 0:
            raise ValueError("lr and batch_size must be positive, steps nonnegative")


class AdaptedEncoder:
    """Parameter store plus the frozen/trainable split.

    params maps names to float64 arrays. Adapter tensors are stacked over
    types on axis 0, so routing is a gather by type index.
    """

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self.trainable_keys = tuple(
            k for k in sorted(params) if ".adapter." in k or k.startswith("head.")
        )
        self.backbone_keys = tuple(
            k for k in sorted(params) if k not in set(self.trainable_keys)
        )

    def backbone_checksum(self) -> str:
        h = hashlib.sha256()
        for key in self.backbone_keys:
            h.update(np.ascontiguousarray(self.params[key]).tobytes())
        return h.hexdigest()


def _param_spec(cfg: EncoderConfig) -> list[tuple[str, tuple, str]]:
    """Ordered (name, shape, init) list; the order fixes the rng draw order."""
    d, r, T = cfg.width, cfg.bottleneck, cfg.n_types
    hidden = FF_MULT * d
    spec: list[tuple[str, tuple, str]] = [
        ("patch.w", (d, cfg.patch_dim), "xavier"),
        ("patch.b", (d,), "zeros"),
    ]
    for layer in range(cfg.layers):
        p = f"layer{layer}."
        spec += [
            (p + "ln1.g", (d,), "ones"),
            (p + "ln1.b", (d,), "zeros"),
            (p + "attn.wq", (d, d), "xavier"),
            (p + "attn.bq", (d,), "zeros"),
            (p + "attn.wk", (d, d), "xavier"),
            (p + "attn.bk", (d,), "zeros"),
            (p + "attn.wv", (d, d), "xavier"),
            (p + "attn.bv", (d,), "zeros"),
            (p + "attn.wo", (d, d), "xavier"),
            (p + "attn.bo", (d,), "zeros"),
            (p + "ln2.g", (d,), "ones"),
            (p + "ln2.b", (d,), "zeros"),
            (p + "ff.w1", (hidden, d), "xavier"),
            (p + "ff.b1", (hidden,), "zeros"),
            (p + "ff.w2", (d, hidden), "xavier"),
            (p + "ff.b2", (d,), "zeros"),
            (p + "adapter.down.w", (T, r, d), "xavier"),
            (p + "adapter.down.b", (T, r), "zeros"),
            (p + "adapter.up.w", (T, d, r), "zeros"),
            (p + "adapter.up.b", (T, d), "zeros"),
        ]
    spec += [
        ("head.w", (N_OPTIONS, d), "zeros"),
        ("head.b", (N_OPTIONS,), "zeros"),
    ]
    return spec


def _xavier_limit(shape: tuple) -> float:
    # stacked adapter tensors (T, out, in) use the per-type fan, not T
    fan_out, fan_in = shape[-2], shape[-1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_encoder(config: EncoderConfig, seed: int = 0) -> AdaptedEncoder:
    """Build an encoder: backbone from scaled uniform init; the head, the
    adapter up-projections, and all adapter biases start exactly zero, so
    initial logits are zero and the initial loss is ln(5)."""
    rng = Rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in _param_spec(config):
        if kind == "xavier":
            lim = _xavier_limit(shape)
            params[name] = rng.fill_uniform(shape, -lim, lim)
        elif kind == "ones":
            params[name] = np.ones(shape, dtype=np.float64)
        else:
            params[name] = np.zeros(shape, dtype=np.float64)
    return AdaptedEncoder(config, params)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv)


def _layernorm_backward(dy: np.ndarray, g: np.ndarray, cache) -> np.ndarray:
    xhat, inv = cache
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return inv * (dxhat - m1 - xhat * m2)


def _softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _to_patches(images: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """(B, H, W, C) -> (B, n_tokens, patch_dim), row-major patch order."""
    B = images.shape[0]
    p = cfg.patch_size
    n = cfg.image_size // p
    x = images.reshape(B, n, p, n, p, cfg.channels)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B, n * n, cfg.patch_dim)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    B, N, d = x.shape
    return x.reshape(B, N, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, H, N, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, H * dh)


def _forward_batch(enc: AdaptedEncoder, images: np.ndarray, type_ids: np.ndarray,
                   want_cache: bool = False, use_adapters: bool = True):
    """Batched forward pass; returns (logits, cache or None).

    With use_adapters=False the adapter branch is skipped entirely, which
    gives the plain frozen-backbone forward.
    """
    if want_cache and not use_adapters:
        raise ValueError("backward cache requires the adapter branch")
    cfg = enc.config
    P = enc.params
    scale = 1.0 / np.sqrt(cfg.width // cfg.heads)
    x = _to_patches(np.asarray(images, dtype=np.float64), cfg)
    X = x @ P["patch.w"].T + P["patch.b"]
    layer_caches = []
    for layer in range(cfg.layers):
        p = f"layer{layer}."
        ln1, ln1_cache = _layernorm(X, P[p + "ln1.g"], P[p + "ln1.b"])
        q = _split_heads(ln1 @ P[p + "attn.wq"].T + P[p + "attn.bq"], cfg.heads)
        k = _split_heads(ln1 @ P[p + "attn.wk"].T + P[p + "attn.bk"], cfg.heads)
        v = _split_heads(ln1 @ P[p + "attn.wv"].T + P[p + "attn.bv"], cfg.heads)
        att = _softmax_last((q @ np.swapaxes(k, -1, -2)) * scale)
        ctx = _merge_heads(att @ v)
        attn_out = ctx @ P[p + "attn.wo"].T + P[p + "attn.bo"]
        X_mid = X + attn_out
        ln2, ln2_cache = _layernorm(X_mid, P[p + "ln2.g"], P[p + "ln2.b"])
        Y = ln2 @ P[p + "ff.w1"].T + P[p + "ff.b1"]
        H1 = _gelu(Y)
        ff_out = H1 @ P[p + "ff.w2"].T + P[p + "ff.b2"]
        if use_adapters:
            # routed adapter, parallel branch off the same normalized input
            Dw = P[p + "adapter.down.w"][type_ids]
            Db = P[p + "adapter.down.b"][type_ids]
            Uw = P[p + "adapter.up.w"][type_ids]
            Ub = P[p + "adapter.up.b"][type_ids]
            Z = ln2 @ np.swapaxes(Dw, -1, -2) + Db[:, None, :]
            G = _gelu(Z)
            ad_out = cfg.adapter_scale * (G @ np.swapaxes(Uw, -1, -2) + Ub[:, None, :])
            X_next = X_mid + ff_out + ad_out
        else:
            X_next = X_mid + ff_out
        if want_cache:
            layer_caches.append(
                dict(ln1=ln1, ln1_cache=ln1_cache, q=q, k=k, v=v, att=att,
                     ln2=ln2, ln2_cache=ln2_cache, Y=Y, H1=H1, Z=Z, G=G,
                     Dw=Dw, Uw=Uw)
            )
        X = X_next
    pooled = X.mean(axis=1)
    logits = pooled @ P["head.w"].T + P["head.b"]
    cache = dict(layers=layer_caches, pooled=pooled, type_ids=type_ids) if want_cache else None
    return logits, cache


def _check_image(cfg: EncoderConfig, image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape != (cfg.image_size, cfg.image_size, cfg.channels):
        raise ValueError(
            f"image shape {img.shape} != "
            f"({cfg.image_size}, {cfg.image_size}, {cfg.channels})"
        )
    return img


def forward(enc: AdaptedEncoder, image: np.ndarray, qtype: str) -> np.ndarray:
    """Logits over the five options for one image routed through one adapter."""
    img = _check_image(enc.config, image)
    tid = np.array([enc.config.type_index(qtype)])
    logits, _ = _forward_batch(enc, img[None], tid)
    return logits[0]


def backbone_forward(enc: AdaptedEncoder, image: np.ndarray) -> np.ndarray:
    """Logits from the frozen backbone alone, with no adapter branch at all."""
    img = _check_image(enc.config, image)
    tid = np.zeros(1, dtype=np.int64)  # unused when adapters are off
    logits, _ = _forward_batch(enc, img[None], tid, use_adapters=False)
    return logits[0]


def loss_and_grads(enc: AdaptedEncoder, images: np.ndarray, type_ids: np.ndarray,
                   targets: np.ndarray):
    """Mean cross-entropy over a batch plus gradients for adapters and head.

    Gradient arrays cover every trainable tensor; adapter slots of types
    absent from the batch stay exactly zero. Backbone parameters have no
    gradient entries at all.
    """
    cfg = enc.config
    P = enc.params
    B = images.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    targets = np.asarray(targets)
    if targets.min() < 0 or targets.max() >= N_OPTIONS:
        raise ValueError("targets must be option indices in 0..4")
    type_ids = np.asarray(type_ids)
    logits, cache = _forward_batch(enc, images, type_ids, want_cache=True)

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(B), targets].mean()

    grads = {k: np.zeros_like(P[k]) for k in enc.trainable_keys}
    dlogits = np.exp(log_probs)
    dlogits[np.arange(B), targets] -= 1.0
    dlogits /= B

    pooled = cache["pooled"]
    grads["head.w"] += dlogits.T @ pooled
    grads["head.b"] += dlogits.sum(axis=0)
    dpooled = dlogits @ P["head.w"]
    n_tokens = cfg.n_tokens
    dX = np.repeat(dpooled[:, None, :], n_tokens, axis=1) / n_tokens

    scale = 1.0 / np.sqrt(cfg.width // cfg.heads)
    for layer in reversed(range(cfg.layers)):
        p = f"layer{layer}."
        c = cache["layers"][layer]
        # residual join: X_next = X_mid + ff_out + ad_out
        d_ff_out = dX
        d_ad_out = dX
        dX_mid = dX.copy()
        # adapter branch
        s = cfg.adapter_scale
        dG = s * (d_ad_out @ c["Uw"])
        dUw = s * (np.swapaxes(d_ad_out, -1, -2) @ c["G"])
        dUb = s * d_ad_out.sum(axis=1)
        dZ = dG * _gelu_grad(c["Z"])
        dDw = np.swapaxes(dZ, -1, -2) @ c["ln2"]
        dDb = dZ.sum(axis=1)
        d_ln2 = dZ @ c["Dw"]
        np.add.at(grads[p + "adapter.up.w"], type_ids, dUw)
        np.add.at(grads[p + "adapter.up.b"], type_ids, dUb)
        np.add.at(grads[p + "adapter.down.w"], type_ids, dDw)
        np.add.at(grads[p + "adapter.down.b"], type_ids, dDb)
        # feed-forward branch
        dH1 = d_ff_out @ P[p + "ff.w2"]
        dY = dH1 * _gelu_grad(c["Y"])
        d_ln2 += dY @ P[p + "ff.w1"]
        dX_mid += _layernorm_backward(d_ln2, P[p + "ln2.g"], c["ln2_cache"])
        # attention sublayer: X_mid = X_in + attn_out
        d_attn_out = dX_mid
        dX_in = dX_mid.copy()
        d_ctx = _split_heads(d_attn_out @ P[p + "attn.wo"], cfg.heads)
        d_att = d_ctx @ np.swapaxes(c["v"], -1, -2)
        dv = np.swapaxes(c["att"], -1, -2) @ d_ctx
        att = c["att"]
        ds = att * (d_att - (d_att * att).sum(axis=-1, keepdims=True))
        dq = (ds @ c["k"]) * scale
        dk = (np.swapaxes(ds, -1, -2) @ c["q"]) * scale
        d_ln1 = (
            _merge_heads(dq) @ P[p + "attn.wq"]
            + _merge_heads(dk) @ P[p + "attn.wk"]
            + _merge_heads(dv) @ P[p + "attn.wv"]
        )
        dX_in += _layernorm_backward(d_ln1, P[p + "ln1.g"], c["ln1_cache"])
        dX = dX_in
    return float(loss), grads


def count_trainable_params(cfg: EncoderConfig) -> int:
    """Closed-form trainable size: L*|T|*(2dr + r + d) + (5d + 5)."""
    d, r = cfg.width, cfg.bottleneck
    return cfg.layers * cfg.n_types * (2 * d * r + r + d) + (N_OPTIONS * d + N_OPTIONS)


@dataclass
class LabeledDataset:
    """Supervised samples for the encoder: images, routed types, option labels."""

    images: np.ndarray  # (n, H, W, C) float64 in [0, 1]
    type_ids: np.ndarray  # (n,) int
    labels: np.ndarray  # (n,) int in 0..4
    train_idx: np.ndarray
    val_idx: np.ndarray

    @property
    def n_train(self) -> int:
        return len(self.train_idx)

    @property
    def n_val(self) -> int:
        return len(self.val_idx)


@dataclass
class TrainReport:
    losses: list[float]
    initial_loss: float
    train_accuracy: float
    val_accuracy: float
    checksum_before: str
    checksum_after: str
    diverged: bool = False
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "losses": self.losses,
            "initial_loss": self.initial_loss,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "checksum_before": self.checksum_before,
            "checksum_after": self.checksum_after,
            "diverged": self.diverged,
            "config": self.config,
        }


class TrainingDiverged(RuntimeError):
    """Loss went NaN; .report carries the partial TrainReport."""

    def __init__(self, report: TrainReport):
        super().__init__("training diverged: loss is NaN")
        self.report = report


def evaluate_accuracy(enc: AdaptedEncoder, dataset: LabeledDataset, idx: np.ndarray,
                      batch_size: int = 64) -> float:
    """Fraction of samples whose argmax logit hits the label."""
    hits = 0
    for start in range(0, len(idx), batch_size):
        sel = idx[start : start + batch_size]
        logits, _ = _forward_batch(enc, dataset.images[sel], dataset.type_ids[sel])
        hits += int((logits.argmax(axis=1) == dataset.labels[sel]).sum())
    return hits / len(idx) if len(idx) else float("nan")


def _mean_loss(enc: AdaptedEncoder, dataset: LabeledDataset, idx: np.ndarray,
               batch_size: int = 64) -> float:
    total = 0.0
    for start in range(0, len(idx), batch_size):
        sel = idx[start : start + batch_size]
        logits, _ = _forward_batch(enc, dataset.images[sel], dataset.type_ids[sel])
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        total += -log_probs[np.arange(len(sel)), dataset.labels[sel]].sum()
    return total / len(idx)


def train(enc: AdaptedEncoder, dataset: LabeledDataset, tc: TrainConfig,
          head_only: bool = False) -> TrainReport:
    """Plain SGD on adapters + head (or head alone for the baseline).

    Batches are uniform-with-replacement draws from the train split,
    seeded by tc.seed. The backbone is untouched by construction; the
    report carries its checksum from before and after as proof.
    """
    if dataset.n_train == 0:
        raise ValueError("dataset has no training samples")
    rng = Rng(tc.seed)
    checksum_before = enc.backbone_checksum()
    initial_loss = _mean_loss(enc, dataset, dataset.train_idx)
    updated_keys = [k for k in enc.trainable_keys if not head_only or k.startswith("head.")]
    losses: list[float] = []
    diverged = False
    for _ in range(tc.steps):
        sel = dataset.train_idx[
            [rng.next_below(dataset.n_train) for _ in range(tc.batch_size)]
        ]
        loss, grads = loss_and_grads(
            enc, dataset.images[sel], dataset.type_ids[sel], dataset.labels[sel]
        )
        losses.append(loss)
        if np.isnan(loss):
            diverged = True
            break
        for key in updated_keys:
            enc.params[key] -= tc.lr * grads[key]
    report = TrainReport(
        losses=losses,
        initial_loss=initial_loss,
        train_accuracy=evaluate_accuracy(enc, dataset, dataset.train_idx),
        val_accuracy=evaluate_accuracy(enc, dataset, dataset.val_idx),
        checksum_before=checksum_before,
        checksum_after=enc.backbone_checksum(),
        diverged=diverged,
        config={
            "lr": tc.lr, "steps": tc.steps, "batch_size": tc.batch_size,
            "seed": tc.seed, "head_only": head_only,
        },
    )
    if diverged:
        raise TrainingDiverged(report)
    return report


def gradient_check(config: EncoderConfig, seed: int = 0, batch_size: int = 2,
                   eps: float = 1e-3, rel_floor: float = 1e-3):
    """Compare analytic gradients against central differences.

    The head and the zero-initialized adapter tensors are nudged to random
    values first so every code path carries signal. Relative error per
    coordinate is |a - n| / max(|a|, |n|, rel_floor); the floor keeps
    near-zero gradients from inflating the ratio past the finite-difference
    noise they actually carry. Returns (max_rel_err, n_checked).
    """
    enc = init_encoder(config, seed)
    rng = Rng(derive_seed(seed, 1))
    for key in enc.trainable_keys:
        if ".adapter.up." in key or ".adapter.down.b" in key or key.startswith("head."):
            enc.params[key] += rng.fill_uniform(enc.params[key].shape, -0.3, 0.3)
    images = rng.fill_floats((batch_size, config.image_size, config.image_size,
                              config.channels))
    type_ids = np.array([rng.next_below(config.n_types) for _ in range(batch_size)])
    targets = np.array([rng.next_below(N_OPTIONS) for _ in range(batch_size)])

    def batch_loss() -> float:
        logits, _ = _forward_batch(enc, images, type_ids)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return float(-log_probs[np.arange(batch_size), targets].mean())

    _, grads = loss_and_grads(enc, images, type_ids, targets)
    present = set(type_ids.tolist())
    max_rel = 0.0
    n_checked = 0
    for key in enc.trainable_keys:
        arr = enc.params[key]
        grad = grads[key]
        for idx in np.ndindex(arr.shape):
            if ".adapter." in key and idx[0] not in present:
                continue  # untouched by this batch; analytic grad is exactly 0
            orig = arr[idx]
            arr[idx] = orig + eps
            up = batch_loss()
            arr[idx] = orig - eps
            down = batch_loss()
            arr[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            a = grad[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), rel_floor)
            if rel > max_rel:
                max_rel = rel
            n_checked += 1
    return max_rel, n_checked


def sample_check_config(rng: Rng) -> EncoderConfig:
    """Small random configuration for the finite-difference suite."""
    heads = (2, 4)[rng.next_below(2)]
    width = heads * (2, 4)[rng.next_below(2)]
    patch = (4, 8)[rng.next_below(2)]
    image = patch * (1, 2)[rng.next_below(2)]
    n_types = 2 + rng.next_below(2)
    return EncoderConfig(
        image_size=image,
        channels=1,
        patch_size=patch,
        width=width,
        layers=1 + rng.next_below(2),
        heads=heads,
        bottleneck=2 + 2 * rng.next_below(2),
        adapter_scale=(0.5, 1.0)[rng.next_below(2)],
        type_list=DEFAULT_TYPES[:n_types],
    )


def _to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """uint8 RGB -> uint8 luminance with integer round-half-up weights."""
    r = rgb[:, :, 0].astype(np.int64)
    g = rgb[:, :, 1].astype(np.int64)
    b = rgb[:, :, 2].astype(np.int64)
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def _downscale_mean(img: np.ndarray, out_side: int) -> np.ndarray:
    """Integer-factor block-mean downscale of a (H, W) or (H, W, C) uint8 image,
    returned as float64 in [0, 1]."""
    h = img.shape[0]
    if h % out_side != 0:
        raise ValueError(f"cannot block-average {h} down to {out_side}")
    f = h // out_side
    if img.ndim == 2:
        img = img[:, :, None]
    c = img.shape[2]
    blocks = img.reshape(out_side, f, out_side, f, c).astype(np.int64)
    sums = blocks.sum(axis=(1, 3))
    return sums / (f * f * 255.0)


def make_counting_task(
    lib: IconLibrary,
    n_scenes: int,
    seed: int,
    config: EncoderConfig = EncoderConfig(),
    qtype: str = "counting",
    canvas: int = 128,
    icon_range: tuple[int, int] = (24, 24),
) -> LabeledDataset:
    """Supervised icon-counting task: scenes with 1..5 icons, label = count - 1.

    Scenes render at `canvas` pixels, block-average down to the encoder
    resolution, and are inverted so the white background maps to 0 and
    icon ink carries the signal. Every sample routes through the given
    question type. Split is 90/10 train/val, shuffled by the task seed.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    spec = SceneSpec(
        canvas_w=canvas, canvas_h=canvas, n_min=1, n_max=5,
        s_min=icon_range[0], s_max=icon_range[1], max_iou=0.0,
    )
    side = config.image_size
    images = np.empty((n_scenes, side, side, config.channels), dtype=np.float64)
    labels = np.empty(n_scenes, dtype=np.int64)
    for i in range(n_scenes):
        rng = Rng(derive_seed(seed, i))
        canvas_img, annotations, _ = compose_scene(spec, lib, rng)
        if config.channels == 1:
            small = _downscale_mean(_to_grayscale(canvas_img), side)
        else:
            small = _downscale_mean(canvas_img, side)
        images[i] = 1.0 - small
        labels[i] = len(annotations) - 1
    tid = config.type_index(qtype)
    type_ids = np.full(n_scenes, tid, dtype=np.int64)
    order = list(range(n_scenes))
    Rng(derive_seed(seed, n_scenes)).shuffle(order)
    n_val = n_scenes // 10
    val_idx = np.array(sorted(order[:n_val]), dtype=np.int64)
    train_idx = np.array(sorted(order[n_val:]), dtype=np.int64)
    return LabeledDataset(images=images, type_ids=type_ids, labels=labels,
                          train_idx=train_idx, val_idx=val_idx)


def save_checkpoint(enc: AdaptedEncoder, path) -> None:
    """Write parameters plus a JSON meta record to an .npz file."""
    cfg = enc.config
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "image_size": cfg.image_size, "channels": cfg.channels,
            "patch_size": cfg.patch_size, "width": cfg.width,
            "layers": cfg.layers, "heads": cfg.heads,
            "bottleneck": cfg.bottleneck, "adapter_scale": cfg.adapter_scale,
            "type_list": list(cfg.type_list),
        },
    }
    arrays = dict(enc.params)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez_compressed(path, **arrays)


def load_checkpoint(path) -> AdaptedEncoder:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {meta.get('version')}")
        cfg_dict = meta["config"]
        cfg_dict["type_list"] = tuple(cfg_dict["type_list"])
        config = EncoderConfig(**cfg_dict)
        params = {k: np.array(data[k], dtype=np.float64)
                  for k in data.files if k != "__meta__"}
    expected = {name for name, _, _ in _param_spec(config)}
    if set(params) != expected:
        raise ValueError("checkpoint parameter names do not match its config")
    return AdaptedEncoder(config, params)
