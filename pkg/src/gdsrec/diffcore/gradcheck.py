from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tape import Parameter, Tape, Tensor, no_record


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise.

    The floor keeps coordinates whose true gradient is zero from turning
    finite-difference roundoff into huge relative errors.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must rebuild the scalar loss from the current parameter values on
    every call and be deterministic.  Existing ``.grad`` buffers are left
    untouched.
    """
    analytic: dict[str, np.ndarray] = {}
    tape = Tape()
    with tape:
        loss = f()
    tape.backward(loss, into=analytic)

    worst = 0.0
    for p in params:
        a = analytic.get(p.name, np.zeros_like(p.value))
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        with no_record():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                numeric.reshape(-1)[i] = (up - down) / (2.0 * h)
        if p.value.size:
            worst = max(worst, float(relative_error(a, numeric, floor).max()))
    return worst
