"""Procedural image-layout-condition triples with a known joint law.

Scenes are HxW single-channel images paired with per-pixel class labels.
The grammar draws a scene type uniformly:

  "horizon"       sky (class 1) above a uniformly random split row,
                  ground (class 2) below;
  "horizon+blob"  the same, plus one rectangular blob of a class drawn
                  uniformly from {3..K}, with side lengths in {2..4} and a
                  uniformly random position.

Pixels are the palette level of their class plus N(0, sigma_data^2)
texture noise, clipped to [-1, 1]. Every random choice is discrete and
uniform (given its parents), so the distribution of any layout statistic
can be computed exactly by enumerating the grammar; that enumeration is
the reference law for the total-variation check.

The condition ID encodes the set of classes present in the layout, the
stand-in for a caption that lists the visible classes. Blobs are at most
4 wide on grids at least 5 wide, so both horizon classes stay visible and
the class set is a deterministic function of (scene type, blob class).
"""

from dataclasses import dataclass

import numpy as np

from .distribution import JointSample
from .errors import ValidationError

SCENE_TYPES = ("horizon", "horizon+blob")
BLOB_SIDES = (2, 3, 4)
PROP_BINS = 8
MIN_PALETTE_SEP_SIGMAS = 4.0


def default_palette(n_classes: int) -> tuple[float, ...]:
    return tuple(np.linspace(-0.75, 0.75, n_classes))


@dataclass(frozen=True)
class SceneConfig:
    height: int = 8
    width: int = 8
    n_classes: int = 4
    palette: tuple[float, ...] = ()
    sigma_data: float = 0.05
    grammar: tuple[str, ...] = SCENE_TYPES
    seed: int = 0

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ValidationError("scene must be at least 2x2")
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if not self.palette:
            object.__setattr__(self, "palette", default_palette(self.n_classes))
        palette = tuple(float(v) for v in self.palette)
        object.__setattr__(self, "palette", palette)
        if len(palette) != self.n_classes:
            raise ValidationError("palette must list one level per class")
        if any(not (-1.0 <= v <= 1.0) for v in palette):
            raise ValidationError("palette levels must lie in [-1, 1]")
        if self.sigma_data < 0.0:
            raise ValidationError("sigma_data must be nonnegative")
        if self.sigma_data > 0.0:
            levels = np.sort(np.asarray(palette))
            sep = np.min(np.diff(levels))
            if sep < MIN_PALETTE_SEP_SIGMAS * self.sigma_data:
                raise ValidationError(
                    f"palette levels must be separated by >= {MIN_PALETTE_SEP_SIGMAS:g} * sigma_data "
                    f"(min separation {sep:g}, sigma {self.sigma_data:g})"
                )
        if len(self.grammar) == 0:
            raise ValidationError("grammar must list at least one scene type")
        for g in self.grammar:
            if g not in SCENE_TYPES:
                raise ValidationError(f"unknown scene type {g!r}")
        if "horizon+blob" in self.grammar:
            if self.n_classes < 3:
                raise ValidationError("blob scenes need a class beyond the two horizon classes")
            if self.height <= max(BLOB_SIDES) or self.width <= max(BLOB_SIDES):
                raise ValidationError(
                    f"blob scenes need height and width > {max(BLOB_SIDES)} so the horizon stays visible"
                )

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @property
    def class_sets(self) -> tuple[tuple[int, ...], ...]:
        """All class sets the grammar can produce, in canonical order; the
        condition ID is an index into this tuple."""
        sets: list[tuple[int, ...]] = []
        if "horizon" in self.grammar:
            sets.append((1, 2))
        if "horizon+blob" in self.grammar:
            sets.extend((1, 2, c) for c in range(3, self.n_classes + 1))
        return tuple(sets)

    @property
    def n_conds(self) -> int:
        return len(self.class_sets)

    def cond_of_class_set(self, classes) -> int:
        key = tuple(sorted(int(c) for c in classes))
        try:
            return self.class_sets.index(key)
        except ValueError:
            raise ValidationError(f"class set {key} is outside the grammar") from None


@dataclass(frozen=True)
class SceneSample:
    sample: JointSample
    cond: int


def _blob_ranges(cfg: SceneConfig):
    for cls in range(3, cfg.n_classes + 1):
        for bh in BLOB_SIDES:
            for bw in BLOB_SIDES:
                yield cls, bh, bw


def _build_layout(cfg: SceneConfig, scene_type: str, horizon: int, blob=None) -> np.ndarray:
    lay = np.full((cfg.height, cfg.width), 2, dtype=np.int64)
    lay[:horizon, :] = 1
    if scene_type == "horizon+blob":
        cls, bh, bw, top, left = blob
        lay[top : top + bh, left : left + bw] = cls
    return lay.reshape(-1)


def _draw_layout(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    scene_type = cfg.grammar[rng.integers(len(cfg.grammar))]
    horizon = int(rng.integers(1, cfg.height))
    blob = None
    if scene_type == "horizon+blob":
        cls = int(rng.integers(3, cfg.n_classes + 1))
        bh = BLOB_SIDES[rng.integers(len(BLOB_SIDES))]
        bw = BLOB_SIDES[rng.integers(len(BLOB_SIDES))]
        top = int(rng.integers(0, cfg.height - bh + 1))
        left = int(rng.integers(0, cfg.width - bw + 1))
        blob = (cls, bh, bw, top, left)
    return _build_layout(cfg, scene_type, horizon, blob)


def generate(cfg: SceneConfig, count: int) -> list[SceneSample]:
    """Deterministic per cfg.seed; items use independent spawned streams so
    the result does not depend on chunking."""
    if count < 0:
        raise ValidationError("count must be nonnegative")
    palette = np.asarray(cfg.palette)
    out = []
    for child in np.random.SeedSequence(cfg.seed).spawn(count):
        rng = np.random.default_rng(child)
        y = _draw_layout(cfg, rng)
        x = palette[y - 1] + cfg.sigma_data * rng.standard_normal(cfg.n_pixels)
        np.clip(x, -1.0, 1.0, out=x)
        cond = cfg.cond_of_class_set(np.unique(y))
        out.append(SceneSample(sample=JointSample(x=x, y=y), cond=cond))
    return out


def dataset_arrays(samples: list[SceneSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(images (n, N), labels (n, M), conditions (n,)) stacked for training."""
    x = np.stack([s.sample.x for s in samples])
    y = np.stack([s.sample.y for s in samples])
    c = np.array([s.cond for s in samples], dtype=np.int64)
    return x, y, c


def oracle_segment(image: np.ndarray, cfg: SceneConfig) -> np.ndarray:
    """Nearest-palette-level classification per pixel; ties go to the lower
    class index. Accepts (..., N) arrays and returns 1-based labels."""
    image = np.asarray(image, dtype=np.float64)
    levels = np.asarray(cfg.palette)
    dist = np.abs(image[..., None] - levels)
    return np.argmin(dist, axis=-1) + 1


def scene_statistic(layout: np.ndarray, cfg: SceneConfig) -> tuple[tuple[int, ...], int]:
    """Discretized summary of one layout: (present class set, quantized
    class-1 proportion). The reference law of this statistic is exactly
    enumerable from the grammar."""
    layout = np.asarray(layout).reshape(-1)
    classes = tuple(sorted(int(c) for c in np.unique(layout)))
    p1 = float(np.mean(layout == 1))
    return classes, min(int(p1 * PROP_BINS), PROP_BINS - 1)


def analytic_statistic_distribution(cfg: SceneConfig) -> dict[tuple, float]:
    """Exact law of scene_statistic under the grammar, by enumerating every
    discrete choice with its probability."""
    dist: dict[tuple, float] = {}
    p_type = 1.0 / len(cfg.grammar)
    p_horizon = 1.0 / (cfg.height - 1)
    for scene_type in cfg.grammar:
        for horizon in range(1, cfg.height):
            if scene_type == "horizon":
                lay = _build_layout(cfg, scene_type, horizon)
                key = scene_statistic(lay, cfg)
                dist[key] = dist.get(key, 0.0) + p_type * p_horizon
            else:
                p_geom = 1.0 / ((cfg.n_classes - 2) * len(BLOB_SIDES) ** 2)
                for cls, bh, bw in _blob_ranges(cfg):
                    n_top = cfg.height - bh + 1
                    n_left = cfg.width - bw + 1
                    p_pos = 1.0 / (n_top * n_left)
                    for top in range(n_top):
                        for left in range(n_left):
                            lay = _build_layout(cfg, scene_type, horizon, (cls, bh, bw, top, left))
                            key = scene_statistic(lay, cfg)
                            dist[key] = dist.get(key, 0.0) + p_type * p_horizon * p_geom * p_pos
    return dist
