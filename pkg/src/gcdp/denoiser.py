"""Reference denoiser: a residual MLP with hand-written gradients.

The network consumes the noisy joint state, the timestep, and a discrete
condition ID, and predicts the clean image together with logits over the
clean labels. Inputs are assembled as

    [x_t | label_embed(y_t) | time_embed(t) | cond_embed(c)]

where the label embedding maps each 1-based label to a learned low-width
vector (concatenated with the image along the feature axis), the time
embedding is a fixed sinusoidal code, and dropped or absent conditions
select a learned null row of the condition table. The trunk is a stack of
fully connected residual blocks with a softplus nonlinearity (smooth, so
finite-difference gradient checks are meaningful); two linear heads read
the final hidden state.

Forward and backward passes are plain numpy and fully deterministic;
backward_batch returns exact gradients that the finite-difference oracle
validates coordinate-wise.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .distribution import ShapeSpec
from .errors import ValidationError


@dataclass(frozen=True)
class DenoiserConfig:
    shape: ShapeSpec
    n_conds: int
    hidden: int = 256
    n_blocks: int = 4
    label_emb_dim: int = 3
    time_emb_dim: int = 16
    cond_emb_dim: int = 8

    def __post_init__(self):
        if self.n_conds < 1:
            raise ValidationError("n_conds must be positive")
        if self.time_emb_dim % 2 != 0 or self.time_emb_dim < 2:
            raise ValidationError("time_emb_dim must be a positive even number")
        for f in ("hidden", "n_blocks", "label_emb_dim", "cond_emb_dim"):
            if getattr(self, f) < 1:
                raise ValidationError(f"{f} must be positive")

    @property
    def input_dim(self) -> int:
        s = self.shape
        return s.n_gauss + s.n_cat * self.label_emb_dim + self.time_emb_dim + self.cond_emb_dim


@dataclass(frozen=True)
class DenoiserInput:
    x_t: np.ndarray
    y_t: np.ndarray
    t: int
    cond: int | None
    cond_dropped: bool = False

    def __post_init__(self):
        if self.cond is None and not self.cond_dropped:
            raise ValidationError("cond must be present unless cond_dropped")
        if self.t < 1:
            raise ValidationError("timestep must be >= 1")


@dataclass(frozen=True)
class DenoiserOutput:
    x0_hat: np.ndarray
    theta0_logits: np.ndarray


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def time_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal code of the integer timestep, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class ReferenceDenoiser:
    """Trainable denoiser; parameters live in an ordered name -> array dict."""

    def __init__(self, config: DenoiserConfig, params: dict[str, np.ndarray]):
        self.config = config
        expected = self.param_shapes(config)
        if list(params.keys()) != list(expected.keys()):
            raise ValidationError("parameter dict does not match canonical layout")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValidationError(f"parameter '{name}' has shape {params[name].shape}, expected {shape}")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    @staticmethod
    def param_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
        s, h = config.shape, config.hidden
        shapes: dict[str, tuple[int, ...]] = {
            "label_emb": (s.n_classes, config.label_emb_dim),
            "cond_emb": (config.n_conds + 1, config.cond_emb_dim),  # last row = null
            "in_w": (config.input_dim, h),
            "in_b": (h,),
        }
        for b in range(config.n_blocks):
            shapes[f"blk{b}_w1"] = (h, h)
            shapes[f"blk{b}_b1"] = (h,)
            shapes[f"blk{b}_w2"] = (h, h)
            shapes[f"blk{b}_b2"] = (h,)
        shapes["head_x_w"] = (h, s.n_gauss)
        shapes["head_x_b"] = (s.n_gauss,)
        shapes["head_y_w"] = (h, s.n_cat * s.n_classes)
        shapes["head_y_b"] = (s.n_cat * s.n_classes,)
        return shapes

    @classmethod
    def init(cls, config: DenoiserConfig, seed: int) -> "ReferenceDenoiser":
        """He-style initialization of all weight matrices, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.param_shapes(config).items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape)
            elif name.endswith("emb"):
                params[name] = rng.standard_normal(shape)
            else:
                fan_in = shape[0]
                params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        return cls(config, params)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.params[k].reshape(-1) for k in self.params])

    def load_flat(self, flat: np.ndarray):
        if flat.shape != (self.n_params,):
            raise ValidationError(f"flat parameter array has {flat.shape[0]} entries, expected {self.n_params}")
        off = 0
        for k, v in self.params.items():
            v[...] = flat[off : off + v.size].reshape(v.shape)
            off += v.size

    def _cond_index(self, cond: np.ndarray) -> np.ndarray:
        cond = np.asarray(cond, dtype=np.int64)
        if np.any(cond >= self.config.n_conds):
            raise ValidationError("condition ID out of range")
        return np.where(cond < 0, self.config.n_conds, cond)

    def forward_batch(self, x_t: np.ndarray, y_t: np.ndarray, t: np.ndarray, cond: np.ndarray):
        """Batched forward pass. cond entries < 0 select the null embedding.

        Returns (x0_hat (B,N), logits (B,M,K), cache for backward_batch).
        """
        cfg, s, p = self.config, self.config.shape, self.params
        x_t = np.asarray(x_t, dtype=np.float64)
        y_t = np.asarray(y_t, dtype=np.int64)
        if x_t.ndim != 2 or x_t.shape[1] != s.n_gauss or y_t.shape != (x_t.shape[0], s.n_cat):
            raise ValidationError("input batch shapes do not match the model's ShapeSpec")
        if np.any(y_t < 1) or np.any(y_t > s.n_classes):
            raise ValidationError("labels must lie in {1..K}")
        batch = x_t.shape[0]
        c_idx = self._cond_index(cond)
        e_lab = p["label_emb"][y_t - 1].reshape(batch, -1)
        h0 = np.concatenate(
            [x_t, e_lab, time_embedding(t, cfg.time_emb_dim), p["cond_emb"][c_idx]], axis=1
        )
        h = h0 @ p["in_w"] + p["in_b"]
        blocks = []
        for b in range(cfg.n_blocks):
            a = h @ p[f"blk{b}_w1"] + p[f"blk{b}_b1"]
            u = softplus(a)
            blocks.append((h, a, u))
            h = h + u @ p[f"blk{b}_w2"] + p[f"blk{b}_b2"]
        x0_hat = h @ p["head_x_w"] + p["head_x_b"]
        logits = (h @ p["head_y_w"] + p["head_y_b"]).reshape(batch, s.n_cat, s.n_classes)
        cache = (h0, blocks, h, y_t, c_idx)
        return x0_hat, logits, cache

    def backward_batch(self, cache, dx0_hat: np.ndarray, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Exact parameter gradients for the loss whose output-gradients are
        given; contributions are summed over the batch."""
        cfg, s, p = self.config, self.config.shape, self.params
        h0, blocks, h_fin, y_t, c_idx = cache
        batch = h0.shape[0]
        dlog_flat = dlogits.reshape(batch, -1)
        g = {
            "head_x_w": h_fin.T @ dx0_hat,
            "head_x_b": dx0_hat.sum(axis=0),
            "head_y_w": h_fin.T @ dlog_flat,
            "head_y_b": dlog_flat.sum(axis=0),
        }
        dh = dx0_hat @ p["head_x_w"].T + dlog_flat @ p["head_y_w"].T
        for b in range(cfg.n_blocks - 1, -1, -1):
            h_in, a, u = blocks[b]
            du = dh @ p[f"blk{b}_w2"].T
            g[f"blk{b}_w2"] = u.T @ dh
            g[f"blk{b}_b2"] = dh.sum(axis=0)
            da = du * expit(a)
            g[f"blk{b}_w1"] = h_in.T @ da
            g[f"blk{b}_b1"] = da.sum(axis=0)
            dh = dh + da @ p[f"blk{b}_w1"].T
        g["in_w"] = h0.T @ dh
        g["in_b"] = dh.sum(axis=0)
        dh0 = dh @ p["in_w"].T
        lab_lo = s.n_gauss
        lab_hi = lab_lo + s.n_cat * cfg.label_emb_dim
        de_lab = dh0[:, lab_lo:lab_hi].reshape(batch, s.n_cat, cfg.label_emb_dim)
        g_lab = np.zeros_like(p["label_emb"])
        np.add.at(g_lab, (y_t - 1).reshape(-1), de_lab.reshape(-1, cfg.label_emb_dim))
        g["label_emb"] = g_lab
        de_c = dh0[:, lab_hi + cfg.time_emb_dim :]
        g_cond = np.zeros_like(p["cond_emb"])
        np.add.at(g_cond, c_idx, de_c)
        g["cond_emb"] = g_cond
        return {k: g[k] for k in self.params}


def forward(model: ReferenceDenoiser, inp: DenoiserInput) -> DenoiserOutput:
    """Single-sample forward pass over the public input/output contract."""
    cond = -1 if (inp.cond_dropped or inp.cond is None) else int(inp.cond)
    x0_hat, logits, _ = model.forward_batch(
        inp.x_t[None, :], inp.y_t[None, :], np.array([inp.t]), np.array([cond])
    )
    return DenoiserOutput(x0_hat=x0_hat[0], theta0_logits=logits[0])
