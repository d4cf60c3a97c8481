"""Plain CycleGAN training step, written independently of the
objective code: raw least-squares GAN terms plus L1 cycle reconstruction,
each generator adversarial against a single discriminator.  Serves as the
reference trajectory that domainness-conditioned training must reproduce
when z is pinned to 1.
"""

import torch
import torch.nn.functional as F


def _set_grad(modules, flag):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def plain_cyclegan_step(models, opt_g, opt_d, batch_source, batch_target, lambda_cyc):
    _set_grad([models.disc_source, models.disc_target], False)
    opt_g.zero_grad()
    fake_t = models.gen_st(batch_source, 1.0)
    fake_s = models.gen_ts(batch_target, 1.0)
    score_t = models.disc_target(fake_t)
    score_s = models.disc_source(fake_s)
    g_loss = (
        F.mse_loss(score_t, torch.ones_like(score_t))
        + F.mse_loss(score_s, torch.ones_like(score_s))
        + lambda_cyc
        * (
            (models.gen_ts(fake_t, 1.0) - batch_source).abs().mean()
            + (models.gen_st(fake_s, 1.0) - batch_target).abs().mean()
        )
    )
    g_loss.backward()
    opt_g.step()
    _set_grad([models.disc_source, models.disc_target], True)

    opt_d.zero_grad()
    real_t = models.disc_target(batch_target)
    fake_t_score = models.disc_target(fake_t.detach())
    real_s = models.disc_source(batch_source)
    fake_s_score = models.disc_source(fake_s.detach())
    d_loss = 0.5 * (
        F.mse_loss(real_t, torch.ones_like(real_t))
        + F.mse_loss(fake_t_score, torch.zeros_like(fake_t_score))
    ) + 0.5 * (
        F.mse_loss(real_s, torch.ones_like(real_s))
        + F.mse_loss(fake_s_score, torch.zeros_like(fake_s_score))
    )
    d_loss.backward()
    opt_d.step()
    return float(g_loss.detach()), float(d_loss.detach())


def max_param_diff(models_a, models_b):
    worst = 0.0
    pairs = [
        (models_a.gen_st, models_b.gen_st),
        (models_a.gen_ts, models_b.gen_ts),
        (models_a.disc_source, models_b.disc_source),
        (models_a.disc_target, models_b.disc_target),
    ]
    for ma, mb in pairs:
        for pa, pb in zip(ma.parameters(), mb.parameters()):
            worst = max(worst, float((pa.detach() - pb.detach()).abs().max()))
    return worst
