import numpy as np
import torch


def finite_difference_grads(fn, params, step=1e-4):
    """Central finite differences of scalar fn() w.r.t. each tensor in params."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = float(fn())
                flat[i] = orig - step
                down = float(fn())
                flat[i] = orig
                g.view(-1)[i] = (up - down) / (2 * step)
            grads.append(g)
    return grads


def max_relative_grad_error(fn, params, step=1e-4):
    """Max over parameters of |analytic - fd| / max(1, |analytic|, |fd|)."""
    for p in params:
        if p.grad is not None:
            p.grad = None
    value = fn()
    value.backward()
    analytic = [
        p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params
    ]
    fd = finite_difference_grads(fn, params, step)
    worst = 0.0
    for a, f in zip(analytic, fd):
        denom = torch.clamp(torch.maximum(a.abs(), f.abs()), min=1.0)
        worst = max(worst, float(((a - f).abs() / denom).max()))
    return worst
