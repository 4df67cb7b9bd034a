"""Finite-difference validation of analytic gradients.

Central differences with a fixed step, compared against the gradients the
graph produces, with the relative error normalized by max(1, |numeric|).
Intended for float64 mode on small configurations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError
from .tensor import Parameter, Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    per_param: dict


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    step: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must rebuild the forward graph on every call (it is invoked
    twice per parameter coordinate). Parameters are restored bit-exactly, so
    the check never mutates them.
    """
    params = list(params)
    originals = [p.data.copy() for p in params]
    saved_grads = [p.grad for p in params]
    try:
        for p in params:
            p.grad = None
        loss = loss_fn()
        loss.backward()
        analytic = {}
        for p in params:
            g = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite analytic gradient for parameter {p.name!r}")
            analytic[p.name] = g

        worst = 0.0
        worst_param = ""
        per_param = {}
        for p, orig in zip(params, originals):
            flat = p.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                hi = float(loss_fn().data)
                flat[i] = saved - step
                lo = float(loss_fn().data)
                flat[i] = saved
                numeric[i] = (hi - lo) / (2.0 * step)
            a = analytic[p.name].reshape(-1)
            rel = np.abs(a - numeric) / np.maximum(1.0, np.abs(numeric))
            err = float(rel.max()) if rel.size else 0.0
            per_param[p.name] = err
            if err > worst:
                worst, worst_param = err, p.name
        return GradCheckResult(worst, worst_param, per_param)
    finally:
        for p, orig, g in zip(params, originals, saved_grads):
            p.data[...] = orig
            p.grad = g
