"""Central finite-difference validation of every parameter gradient.

Runs the tiny double-precision configuration (1 residual block, 4 feature
channels, 2x upscaling) with batch-norm in training mode and batch size 2.
"""

import numpy as np
import torch
import pytest

from ckmsr.model import SRResNetConfig, build, count_parameters
from ckmsr.training import mse_loss

REL_TOL = 1e-4
ABS_FLOOR = 1e-6
STEP = 1e-6

TINY_GRADCHECK = SRResNetConfig(
    in_channels=1, feature_channels=4, num_residual_blocks=1, upscale_factor=2
)


def make_gradcheck_problem():
    # seeds chosen so every PReLU pre-activation sits well away from the
    # kink at zero (min |pre-act| ~ 6e-3 here); a pre-activation inside the
    # FD step would make central differences probe the non-smooth point
    torch.manual_seed(7)
    x = torch.rand(2, 1, 4, 4, dtype=torch.float64)
    target = torch.rand(2, 1, 8, 8, dtype=torch.float64)
    net = build(TINY_GRADCHECK, seed=26).double().train()
    return net, x, target


def central_difference_check(net, x, target, step=STEP, rel_tol=REL_TOL, abs_floor=ABS_FLOOR):
    """Compare autograd gradients of the MSE loss against central differences.

    Returns the number of parameters checked; raises AssertionError on the
    first parameter outside tolerance.
    """
    net.zero_grad()
    mse_loss(net(x), target).backward()
    analytic = {name: p.grad.detach().clone() for name, p in net.named_parameters()}

    def loss_value():
        with torch.no_grad():
            return mse_loss(net(x), target).item()

    checked = 0
    for name, p in net.named_parameters():
        ga = analytic[name].reshape(-1)
        for flat_idx in range(p.numel()):
            idx = np.unravel_index(flat_idx, p.shape)  # in-place safe for any layout
            original = p.data[idx].item()
            p.data[idx] = original + step
            up = loss_value()
            p.data[idx] = original - step
            down = loss_value()
            p.data[idx] = original
            fd = (up - down) / (2 * step)
            err = abs(ga[flat_idx].item() - fd)
            tol = max(rel_tol * max(abs(ga[flat_idx].item()), abs(fd)), abs_floor)
            assert err <= tol, f"{name}{list(idx)}: analytic {ga[flat_idx].item():.3e} vs fd {fd:.3e}"
            checked += 1
    return checked


def test_analytic_gradients_match_central_differences():
    net, x, target = make_gradcheck_problem()
    checked = central_difference_check(net, x, target)
    assert checked == count_parameters(net)


def test_gradients_flow_to_every_parameter():
    net, x, target = make_gradcheck_problem()
    net.zero_grad()
    mse_loss(net(x), target).backward()
    for name, p in net.named_parameters():
        assert p.grad is not None and p.grad.abs().sum() > 0, name
