import numpy as np
import pytest
from scipy.stats import norm

from gcdp.errors import ValidationError
from gcdp.metrics import joint_tv
from gcdp.scenes import (
    SceneConfig,
    analytic_statistic_distribution,
    dataset_arrays,
    generate,
    oracle_segment,
    scene_statistic,
)


class TestGenerate:
    def test_noiseless_pixels_sit_on_palette(self):
        cfg = SceneConfig(sigma_data=0.0, seed=1)
        palette = np.asarray(cfg.palette)
        for s in generate(cfg, 20):
            assert np.array_equal(s.sample.x, palette[s.sample.y - 1])

    def test_same_seed_identical_datasets(self):
        a = generate(SceneConfig(seed=5), 10)
        b = generate(SceneConfig(seed=5), 10)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.sample.x, sb.sample.x)
            assert np.array_equal(sa.sample.y, sb.sample.y)
            assert sa.cond == sb.cond

    def test_scene_type_frequency_within_3_sigma(self):
        n = 10_000
        samples = generate(SceneConfig(seed=2), n)
        # blob scenes are exactly those with a class beyond {1, 2}
        blob_frac = np.mean([len(cfg_set := np.unique(s.sample.y)) > 2 for s in samples])
        assert abs(blob_frac - 0.5) < 3 * np.sqrt(0.25 / n)

    def test_cond_matches_present_classes(self):
        cfg = SceneConfig(seed=3)
        for s in generate(cfg, 200):
            assert cfg.class_sets[s.cond] == tuple(sorted(np.unique(s.sample.y)))

    def test_horizon_classes_always_visible(self):
        for s in generate(SceneConfig(seed=4), 500):
            present = set(np.unique(s.sample.y))
            assert 1 in present and 2 in present

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SceneConfig(palette=(0.0, 0.1), n_classes=2, sigma_data=0.05)  # separation < 4 sigma
        with pytest.raises(ValidationError):
            SceneConfig(grammar=("volcano",))
        with pytest.raises(ValidationError):
            SceneConfig(height=4, width=4)  # blob needs > 4
        with pytest.raises(ValidationError):
            SceneConfig(n_classes=2)  # blob needs a third class
        assert SceneConfig(n_classes=2, grammar=("horizon",), height=2, width=2).n_conds == 1

    def test_dataset_arrays_shapes(self):
        cfg = SceneConfig(seed=6)
        x, y, c = dataset_arrays(generate(cfg, 7))
        assert x.shape == (7, 64) and y.shape == (7, 64) and c.shape == (7,)
        assert x.dtype == np.float64 and np.all((y >= 1) & (y <= 4))


class TestOracleSegment:
    def test_noiseless_recovery_is_exact(self):
        cfg = SceneConfig(sigma_data=0.0, seed=7)
        for s in generate(cfg, 20):
            assert np.array_equal(oracle_segment(s.sample.x, cfg), s.sample.y)

    def test_midpoint_ties_break_to_lower_class(self):
        cfg = SceneConfig(seed=0)
        midpoint = 0.5 * (cfg.palette[0] + cfg.palette[1])
        assert oracle_segment(np.array([midpoint]), cfg)[0] == 1

    def test_default_config_accuracy_bound(self):
        # at the default separation (10 sigma) accuracy far exceeds 1 - Phi(-2)
        cfg = SceneConfig(seed=8)
        n_err = 0
        n_pix = 0
        for s in generate(cfg, 200):
            seg = oracle_segment(s.sample.x, cfg)
            n_err += int(np.sum(seg != s.sample.y))
            n_pix += seg.size
        assert n_err / n_pix <= norm.sf(2.0)

    def test_misclassification_at_separation_bound(self):
        # edge class at exactly 4-sigma separation: one-sided 2-sigma tail
        rng = np.random.default_rng(9)
        cfg = SceneConfig(palette=(-0.75, -0.25, 0.25, 0.75), sigma_data=0.125, seed=9)
        n = 400_000
        pixels = np.clip(cfg.palette[0] + cfg.sigma_data * rng.standard_normal(n), -1.0, 1.0)
        rate = np.mean(oracle_segment(pixels, cfg) != 1)
        p = norm.sf(2.0)
        mc_bound = 3 * np.sqrt(p * (1 - p) / n)
        assert rate <= 2.3e-2 + mc_bound

    def test_batched_segmentation(self):
        cfg = SceneConfig(seed=10)
        x, y, _ = dataset_arrays(generate(cfg, 5))
        seg = oracle_segment(x, cfg)
        assert seg.shape == y.shape


class TestStatistic:
    def test_analytic_distribution_sums_to_one(self):
        dist = analytic_statistic_distribution(SceneConfig())
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(p > 0 for p in dist.values())

    def test_statistic_keys_match_grammar(self):
        cfg = SceneConfig(seed=11)
        dist = analytic_statistic_distribution(cfg)
        for s in generate(cfg, 300):
            assert scene_statistic(s.sample.y, cfg) in dist

    def test_self_tv_is_small(self):
        cfg = SceneConfig(seed=12)
        n = 4000
        layouts = np.stack([s.sample.y for s in generate(cfg, n)])
        tv = joint_tv(layouts, cfg)
        dist = analytic_statistic_distribution(cfg)
        bound = 1.5 * sum(np.sqrt(p * (1 - p) / n) for p in dist.values())  # 3 sigma / 2
        assert tv < bound
