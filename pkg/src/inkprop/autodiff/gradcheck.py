"""Central finite-difference validation of the backward graph."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteEncountered
from .tensor import Tensor


def grad_check(
    f,
    params: list[Tensor],
    h: float = 1e-4,
    sample: int | None = None,
    rng=None,
) -> float:
    """Worst relative error between analytic and central-difference
    gradients of the scalar ``f()`` over the given tensors.

    ``sample`` limits the check to that many seeded random coordinates per
    tensor (the full pipeline has too many weights to probe exhaustively);
    None checks every coordinate.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar function")
    out.backward()
    analytic = [
        (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params
    ]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.ravel()
        a_flat = a.ravel()
        if sample is None or flat.size <= sample:
            coords = range(flat.size)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=sample, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteEncountered("non-finite value during grad check")
            numeric = (fp - fm) / (2 * h)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
