import math

import numpy as np
import pytest
import torch

from domainflow.domainness import DomainnessError, validate_vector
from domainflow.objectives import (
    ObjectiveConfig,
    adversarial_pair,
    boost_weight,
    combined_adversarial,
    cycle_loss,
    discriminator_objective,
    full_objective,
    multi_target_adversarial,
)


class TestAdversarialPair:
    def test_perfect_discriminator_ls(self):
        real = torch.ones(1, 1, 4, 4)
        fake = torch.zeros(1, 1, 4, 4)
        loss = adversarial_pair(fake, real, "discriminator", "least-squares")
        assert float(loss) == 0.0

    def test_generator_fully_fools_ls(self):
        fake = torch.ones(1, 1, 4, 4)
        assert float(adversarial_pair(fake, None, "generator", "least-squares")) == 0.0

    def test_half_scores_ls(self):
        real = torch.full((1, 1, 4, 4), 0.5)
        fake = torch.full((1, 1, 4, 4), 0.5)
        loss = adversarial_pair(fake, real, "discriminator", "least-squares")
        assert float(loss) == pytest.approx(0.25, abs=1e-7)

    def test_log_loss_direction(self):
        # confident correct logits give small loss, confident wrong give large
        good = adversarial_pair(
            torch.full((1, 1, 2, 2), -5.0), torch.full((1, 1, 2, 2), 5.0), "discriminator", "log-loss"
        )
        bad = adversarial_pair(
            torch.full((1, 1, 2, 2), 5.0), torch.full((1, 1, 2, 2), -5.0), "discriminator", "log-loss"
        )
        assert float(good) < 0.01 < float(bad)

    def test_non_finite_rejected(self):
        nan = torch.full((1, 1, 2, 2), math.nan)
        with pytest.raises(FloatingPointError):
            adversarial_pair(nan, torch.zeros(1, 1, 2, 2), "discriminator")

    def test_bad_role_rejected(self):
        with pytest.raises(ValueError):
            adversarial_pair(torch.zeros(1), torch.zeros(1), "referee")


class TestCombinedAdversarial:
    def test_endpoints_exact(self):
        assert combined_adversarial(2.5, 7.0, 0.0) == 2.5
        assert combined_adversarial(2.5, 7.0, 1.0) == 7.0

    def test_interior(self):
        assert combined_adversarial(2.0, 1.0, 0.3) == pytest.approx(1.7, abs=1e-12)

    def test_affine_in_z(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.uniform(0, 5, size=2)
            for z in (0.0, 0.25, 0.5, 0.75, 1.0):
                assert combined_adversarial(a, b, z) == pytest.approx(
                    (1 - z) * a + z * b, abs=1e-6
                )

    def test_invalid_z(self):
        with pytest.raises(DomainnessError):
            combined_adversarial(1.0, 1.0, 1.5)


class TestCycleLoss:
    def test_identity_roundtrip(self):
        x = torch.rand(2, 3, 8, 8)
        assert float(cycle_loss(x, x)) == 0.0

    def test_constant_gap(self):
        x = torch.zeros(1, 3, 4, 4)
        assert float(cycle_loss(x, x + 0.5)) == pytest.approx(0.5, abs=1e-7)

    def test_matches_elementwise_oracle(self):
        g = torch.Generator().manual_seed(123)
        x = torch.rand(2, 3, 5, 7, generator=g)
        y = torch.rand(2, 3, 5, 7, generator=g)
        oracle = float(np.mean(np.abs(x.numpy() - y.numpy())))
        assert float(cycle_loss(x, y)) == pytest.approx(oracle, abs=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cycle_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


class TestBoostWeight:
    def test_endpoints(self):
        assert boost_weight(0.0) == 1.0
        assert boost_weight(1.0) == 0.0

    def test_quarter(self):
        assert boost_weight(0.75) == pytest.approx(0.5, abs=1e-12)

    def test_grid_exact(self):
        for z in np.linspace(0, 1, 101):
            assert boost_weight(float(z)) == math.sqrt(1 - float(z))

    def test_monotone_decreasing(self):
        vals = [boost_weight(z) for z in np.linspace(0, 1, 101)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


class TestMultiTargetAdversarial:
    def test_one_hot_vertex(self):
        losses = [torch.tensor(4.0), torch.tensor(2.0), torch.tensor(1.0), torch.tensor(1.0)]
        for k in range(4):
            z = [0.0] * 4
            z[k] = 1.0
            assert float(multi_target_adversarial(losses, z)) == float(losses[k])

    def test_uniform_mixture(self):
        losses = [torch.tensor(v) for v in (4.0, 2.0, 1.0, 1.0)]
        out = multi_target_adversarial(losses, [0.25] * 4)
        assert float(out) == pytest.approx(2.0, abs=1e-7)

    def test_degenerate_single_target(self):
        loss = torch.tensor(3.25)
        out = multi_target_adversarial([loss], validate_vector([1.0]))
        assert float(out) == pytest.approx(3.25, abs=1e-9)

    def test_invalid_mixture_rejected(self):
        with pytest.raises(DomainnessError):
            multi_target_adversarial([1.0, 2.0], [0.7, 0.7])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            multi_target_adversarial([1.0], validate_vector([0.5, 0.5]))


class TestDistanceRatioSurrogate:
    # minimizing (1-z) m^2 + z (1-m)^2 over m has analytic optimum m* = z,
    # which realizes the distance-ratio d_source : d_target = z : (1-z)
    @pytest.mark.parametrize("z", [0.2, 0.5, 0.8])
    def test_grid_search_minimizer(self, z):
        m = np.linspace(0, 1, 100_001)
        objective = (1 - z) * m**2 + z * (1 - m) ** 2
        m_star = m[int(np.argmin(objective))]
        assert abs(m_star - z) < 1e-4


class TestFullObjective:
    def test_cycle_disabled(self, miniature_models, miniature_batches):
        xs, xt = miniature_batches
        cfg = ObjectiveConfig(lambda_cyc=0.0)
        res = full_objective(xs, xt, 0.4, miniature_models, cfg)
        assert float(res.total.detach()) == pytest.approx(
            float(res.combined_adv.detach()), abs=1e-9
        )

    def test_lambda_arithmetic(self):
        # total = combined + 10 * cycle on synthetic components
        from domainflow.objectives import LossBreakdown

        b = LossBreakdown(adv_source=0.1, adv_target=0.3, combined_adv=0.4, cycle=0.1, total=1.4)
        b.check(lambda_cyc=10.0)

    def test_breakdown_internally_consistent(self, miniature_models, miniature_batches):
        xs, xt = miniature_batches
        cfg = ObjectiveConfig(lambda_cyc=10.0)
        for z in (0.0, 0.3, 1.0):
            res = full_objective(xs, xt, z, miniature_models, cfg)
            res.breakdown().check(cfg.lambda_cyc)

    def test_single_direction_skips_other_fake(self, miniature_models, miniature_batches):
        xs, xt = miniature_batches
        cfg = ObjectiveConfig(direction="source-to-target")
        res = full_objective(xs, xt, 0.5, miniature_models, cfg)
        assert res.fake_target is not None and res.fake_source is None

    def test_empty_batch_rejected(self, miniature_models):
        cfg = ObjectiveConfig()
        with pytest.raises(ValueError):
            full_objective(
                torch.zeros(0, 1, 8, 8, dtype=torch.float64),
                torch.zeros(1, 1, 8, 8, dtype=torch.float64),
                0.5,
                miniature_models,
                cfg,
            )

    def test_z_influences_total(self, miniature_models, miniature_batches):
        xs, xt = miniature_batches
        cfg = ObjectiveConfig()
        r1 = full_objective(xs, xt, 0.1, miniature_models, cfg)
        r2 = full_objective(xs, xt, 0.9, miniature_models, cfg)
        assert float(r1.total.detach()) != float(r2.total.detach())

    def test_embedding_receives_gradient_from_full_objective(
        self, miniature_models, miniature_batches
    ):
        xs, xt = miniature_batches
        res = full_objective(xs, xt, 0.45, miniature_models, ObjectiveConfig())
        res.total.backward()
        grads = [
            p.grad
            for gen in miniature_models.generators()
            for p in gen.embedding.parameters()
        ]
        assert all(g is not None for g in grads)
        assert any(float(g.abs().max()) > 0 for g in grads)

    def test_discriminator_objective_finite_and_weighted(self, miniature_models, miniature_batches):
        xs, xt = miniature_batches
        cfg = ObjectiveConfig()
        res = full_objective(xs, xt, 1.0, miniature_models, cfg)
        d = discriminator_objective(xs, xt, res.fake_target, res.fake_source, 1.0, miniature_models, cfg)
        assert torch.isfinite(d)
        # at z=1 the source discriminator sees no weight on the forward fake:
        # its gradient must come only from the reverse-direction fake
        d.backward()
        assert any(p.grad is not None for p in miniature_models.disc_source.parameters())
