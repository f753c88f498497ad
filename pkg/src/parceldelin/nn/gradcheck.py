"""Finite-difference verification of tape gradients.

Run with float64 parameters: central differences at eps=1e-3 on float32
storage would drown in rounding noise.  Sigmoid-saturated regimes
(|logit| > ~20) are known to break finite differences and must be avoided
by the caller's choice of inputs.
"""

from __future__ import annotations

import numpy as np

from .engine import Tape, backward


def grad_check(f, params, eps: float = 1e-3) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is a deterministic zero-argument callable returning a scalar
    Tensor computed from ``params``.  Relative error per entry is
    |a - n| / max(1e-8, |a| + |n|).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(tape, loss, params)
    analytic = [p.grad.copy() for p in params]

    max_err = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(f().data)
            flat[i] = orig - eps
            lm = float(f().data)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = float(gflat[i])
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            max_err = max(max_err, err)
    return max_err
