import pytest
import torch

from domainflow.acceptance import build_miniature_models

torch.set_num_threads(1)


@pytest.fixture
def miniature_models():
    return build_miniature_models(seed=11)


@pytest.fixture
def miniature_batches():
    g = torch.Generator().manual_seed(99)
    xs = torch.rand(2, 1, 8, 8, generator=g, dtype=torch.float64) * 2 - 1
    xt = torch.rand(2, 1, 8, 8, generator=g, dtype=torch.float64) * 2 - 1
    return xs, xt
