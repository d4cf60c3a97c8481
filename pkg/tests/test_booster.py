import numpy as np
import pytest
import torch

from domainflow.booster import (
    BoostBatch,
    BoostConfig,
    SegModel,
    boost_train,
    boosted_da_step,
    build_boost_models,
    confusion_counts,
    evaluate_miou,
    miou_from_counts,
    rows_from_manifest,
)
from domainflow.data import SyntheticStyleSpec, generate_synthetic_domains


def make_batch(z, n=2, size=16, classes=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    return BoostBatch(
        images=torch.rand(n, 3, size, size, generator=g) * 2 - 1,
        labels=torch.randint(0, classes, (n, size, size), generator=g),
        z=z,
        target_images=torch.rand(n, 3, size, size, generator=g) * 2 - 1,
    )


class TestSegModel:
    def test_output_shape(self):
        torch.manual_seed(0)
        seg = SegModel(num_classes=3, base_filters=4, depth=2)
        x = torch.rand(2, 3, 32, 32)
        out = seg(x)
        assert out.shape == (2, 3, 32, 32)


class TestBoostedStep:
    def _setup(self, lr=1e-3):
        cfg = BoostConfig(iterations=1, learning_rate=lr, base_filters=4, batch_size=2, image_size=16)
        seg, disc = build_boost_models(cfg, seed=1)
        opt_s = torch.optim.Adam(seg.parameters(), lr=lr)
        opt_d = torch.optim.Adam(disc.parameters(), lr=lr)
        return cfg, seg, disc, opt_s, opt_d

    def test_z_one_zeroes_adversarial_gradient(self):
        # with all z = 1 the adversarial branch must push exactly zero gradient
        # into the segmentation model: compare against a pure-supervised twin
        cfg, seg, disc, opt_s, opt_d = self._setup()
        cfg2, seg2, disc2, opt_s2, opt_d2 = self._setup()
        for a, b in zip(seg.parameters(), seg2.parameters()):
            assert torch.equal(a, b)
        batch = make_batch([1.0, 1.0])
        boosted_da_step(seg, disc, opt_s, opt_d, batch, cfg)
        cfg2.lambda_adv = 0.0
        boosted_da_step(seg2, disc2, opt_s2, opt_d2, batch, cfg2)
        for a, b in zip(seg.parameters(), seg2.parameters()):
            assert torch.equal(a, b)

    def test_z_one_gradient_inspection(self):
        cfg, seg, disc, _, _ = self._setup()
        batch = make_batch([1.0, 1.0])
        logits = seg(batch.images)
        probs = torch.softmax(logits, dim=1)
        scores = disc(probs)
        per_sample = ((scores - 1.0) ** 2).mean(dim=(1, 2, 3))
        weights = torch.tensor([0.0, 0.0])
        adv = (weights * per_sample).mean()
        grads = torch.autograd.grad(adv, list(seg.parameters()), allow_unused=True)
        for g in grads:
            assert g is None or float(g.abs().max()) == 0.0

    def test_z_zero_full_weight(self):
        cfg, seg, disc, _, _ = self._setup()
        batch = make_batch([0.0, 0.0])
        logits = seg(batch.images)
        probs = torch.softmax(logits, dim=1)
        scores = disc(probs)
        per_sample = ((scores - 1.0) ** 2).mean(dim=(1, 2, 3))
        unweighted = per_sample.mean()
        weighted = (torch.tensor([1.0, 1.0]) * per_sample).mean()
        assert torch.equal(unweighted, weighted)

    def test_mixed_weights_ratio(self):
        # z = [0, 0.75] gives adversarial weights 1 and 0.5
        from domainflow.objectives import boost_weight

        w = [boost_weight(0.0), boost_weight(0.75)]
        assert w[0] / w[1] == pytest.approx(2.0)

    def test_missing_z_rejected(self):
        with pytest.raises(ValueError):
            make_batch([0.5])  # one z for two samples

    def test_step_returns_losses(self):
        cfg, seg, disc, opt_s, opt_d = self._setup()
        losses = boosted_da_step(seg, disc, opt_s, opt_d, make_batch([0.2, 0.9]), cfg)
        assert {"ce", "adv_seg", "disc", "total"} <= set(losses)


class TestMiou:
    def test_perfect_prediction(self):
        t = torch.randint(0, 2, (1, 8, 8))
        counts = confusion_counts(t, t, 2)
        _, miou = miou_from_counts(counts, {0, 1})
        assert miou == 1.0

    def test_complement_prediction(self):
        truth = torch.zeros(1, 8, 8, dtype=torch.long)
        truth[:, :, 4:] = 1
        pred = 1 - truth
        counts = confusion_counts(pred, truth, 2)
        per_class, miou = miou_from_counts(counts, {0, 1})
        assert per_class == {0: 0.0, 1: 0.0}
        assert miou == 0.0

    def test_matches_bruteforce_oracle(self):
        g = torch.Generator().manual_seed(5)
        truth = torch.randint(0, 2, (3, 10, 10), generator=g)
        pred = torch.randint(0, 2, (3, 10, 10), generator=g)
        counts = confusion_counts(pred, truth, 2)
        per_class, miou = miou_from_counts(counts, {0, 1})
        # independent per-pixel oracle
        expected = []
        p, t = pred.numpy(), truth.numpy()
        for c in (0, 1):
            inter = int(((p == c) & (t == c)).sum())
            union = int(((p == c) | (t == c)).sum())
            expected.append(inter / union)
        assert per_class[0] == pytest.approx(expected[0], abs=1e-12)
        assert per_class[1] == pytest.approx(expected[1], abs=1e-12)
        assert miou == pytest.approx(np.mean(expected), abs=1e-12)

    def test_order_invariance_and_range(self):
        g = torch.Generator().manual_seed(9)
        truth = torch.randint(0, 2, (4, 6, 6), generator=g)
        pred = torch.randint(0, 2, (4, 6, 6), generator=g)
        c1 = confusion_counts(pred, truth, 2)
        perm = torch.tensor([2, 0, 3, 1])
        c2 = confusion_counts(pred[perm], truth[perm], 2)
        assert np.array_equal(c1, c2)
        _, miou = miou_from_counts(c1, {0, 1})
        assert 0.0 <= miou <= 1.0


class TestBoostTrain:
    def test_end_to_end_learns_something(self, tmp_path):
        src_spec = SyntheticStyleSpec(theta=0.0, geometry_seed=21, count=16, image_size=32)
        tgt_spec = SyntheticStyleSpec(theta=40.0, geometry_seed=21, count=16, image_size=32)
        src, tgt = generate_synthetic_domains(src_spec, tgt_spec, tmp_path)
        cfg = BoostConfig(
            iterations=60, base_filters=8, batch_size=4, image_size=32, lambda_adv=0.0
        )
        seg = boost_train(src.root, rows_from_manifest(src), tgt, cfg, seed=0)
        _, miou_src = evaluate_miou(seg, src)
        assert miou_src > 0.5  # learns the shapes on its own domain

    def test_evaluate_empty_rejected(self):
        seg = SegModel(num_classes=2, base_filters=4, depth=1)
        from domainflow.data import DatasetManifest

        with pytest.raises(ValueError):
            evaluate_miou(seg, DatasetManifest(root=".", domain="x", image_size=8, entries=[]))
