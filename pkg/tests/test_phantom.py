"""
Tests for phantom templates, the mixture prior built on them and datasets.
"""

from dataclasses import replace

import numpy as np
import pytest

from dynamic_dps.config import PhantomSpec
from dynamic_dps.constants import TissueClass
from dynamic_dps.exceptions import ValidationError
from dynamic_dps.phantom import build_prior, draw_truth, generate_template, make_dataset, noise_seed_for, sample_truth


@pytest.fixture
def spec() -> PhantomSpec:
    return PhantomSpec(n_templates=4)


class TestTemplates:
    def test_deterministic(self, spec):
        a_img, a_lab = generate_template(spec, 2)
        b_img, b_lab = generate_template(spec, 2)
        assert np.array_equal(a_img, b_img) and np.array_equal(a_lab, b_lab)
        assert not np.array_equal(a_lab, generate_template(spec, 3)[1])

    def test_phantom_seed_changes_geometry(self, spec):
        other = replace(spec, phantom_seed=spec.phantom_seed + 1)
        assert not np.array_equal(generate_template(spec, 0)[1], generate_template(other, 0)[1])

    @pytest.mark.parametrize("index", range(4))
    def test_structure(self, spec, index):
        image, labels = generate_template(spec, index)
        assert image.shape == labels.shape == (72, 72)
        assert set(np.unique(labels)) == {int(c) for c in TissueClass}
        for corner in (labels[0, 0], labels[0, -1], labels[-1, 0], labels[-1, -1]):
            assert corner == TissueClass.BACKGROUND
        assert image[0, 0] == pytest.approx(spec.band_center(TissueClass.BACKGROUND))
        deep_fraction = np.mean(labels == TissueClass.DEEP)
        assert 0.01 <= deep_fraction <= 0.05
        # every pixel sits at its class band center
        for class_id in TissueClass:
            assert np.all(image[labels == class_id] == spec.band_center(class_id))

    def test_deep_structures_lie_inside_the_skull(self, spec):
        _, labels = generate_template(spec, 1)
        rows, cols = np.nonzero(labels == TissueClass.DEEP)
        assert rows.min() > 0 and cols.min() > 0
        assert rows.max() < 71 and cols.max() < 71

    @pytest.mark.parametrize("index", [-1, 4])
    def test_index_out_of_range(self, spec, index):
        with pytest.raises(ValidationError) as exc_info:
            generate_template(spec, index)
        assert exc_info.value.context["parameter_value"] == index


class TestPrior:
    def test_uniform_mixture_over_templates(self, spec):
        prior, label_maps = build_prior(spec)
        assert prior.n_components == 4
        assert np.allclose(prior.weights, 0.25)
        assert prior.sigma_p == spec.sigma_p
        assert len(label_maps) == 4
        assert np.array_equal(prior.templates[2], generate_template(spec, 2)[0])

    def test_zero_spread_draw_is_a_template(self, spec):
        prior, _ = build_prior(spec)
        x, k = draw_truth(prior.templates, 0.0, seed=5)
        assert np.array_equal(x, prior.templates[k])

    def test_draws_are_clamped_and_seeded(self, spec):
        prior, _ = build_prior(spec)
        a, k = draw_truth(prior.templates, 0.5, seed=9)
        b, _ = draw_truth(prior.templates, 0.5, seed=9)
        assert np.array_equal(a, b)
        assert a.min() >= 0.0 and a.max() <= 1.0
        assert 0 <= k < 4

    def test_weights_pick_the_component(self, spec):
        prior, _ = build_prior(spec)
        for seed in range(10):
            assert draw_truth(prior.templates, 0.05, seed, weights=[0.0, 0.0, 1.0, 0.0])[1] == 2

    def test_sample_truth_returns_the_image(self, spec):
        prior, _ = build_prior(spec)
        assert np.array_equal(sample_truth(prior.templates, 0.05, seed=3), draw_truth(prior.templates, 0.05, seed=3)[0])

    @pytest.mark.slow
    def test_per_pixel_spread_matches_sigma_p(self):
        small = PhantomSpec(image_size=24, n_templates=1, sigma_p=0.05)
        prior, labels = build_prior(small)
        draws = np.stack([sample_truth(prior.templates, small.sigma_p, seed) for seed in range(10_000)])
        # white matter sits far from both clamp boundaries
        spread = draws.std(axis=0)[labels[0] == TissueClass.WHITE]
        assert spread.size > 0
        assert np.allclose(spread, small.sigma_p, rtol=0.05)


class TestDataset:
    def test_samples_carry_their_truth(self, spec, degradation):
        samples = make_dataset(spec, degradation, 3, seed=40)
        assert [s.seed for s in samples] == [40, 41, 42]
        assert [s.index for s in samples] == [0, 1, 2]
        for s in samples:
            assert s.y.shape == (36, 36)
            assert np.array_equal(s.labels, generate_template(spec, s.component)[1])

    def test_partitions_share_truths_and_noise(self, spec, degradation):
        ood = replace(degradation, gamma=0.4)
        ind_samples = make_dataset(spec, degradation, 2, seed=0)
        ood_samples = make_dataset(spec, ood, 2, seed=0)
        for a, b in zip(ind_samples, ood_samples):
            assert np.array_equal(a.x_true, b.x_true)
            assert a.component == b.component
            assert not np.array_equal(a.y, b.y)

    def test_noise_seed_differs_from_truth_seed(self):
        seeds = {noise_seed_for(s) for s in range(100)}
        assert len(seeds) == 100
        assert seeds.isdisjoint(range(100))

    def test_reference_and_test_seeds_do_not_overlap(self, spec, degradation):
        test = make_dataset(spec, degradation, 3, seed=0)
        refs = make_dataset(spec, degradation, 3, seed=1000)
        assert {s.seed for s in test}.isdisjoint({s.seed for s in refs})

    def test_rejects_empty_dataset(self, spec, degradation):
        with pytest.raises(ValidationError):
            make_dataset(spec, degradation, 0, seed=0)

    def test_rejects_incompatible_factor(self, spec, degradation):
        with pytest.raises(ValidationError):
            make_dataset(spec, replace(degradation, factor_k=5), 1, seed=0)
