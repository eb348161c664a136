from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tape import Parameter


@dataclass
class RmsPropState:
    """Running mean of squared gradients for one parameter."""

    s: np.ndarray
    rho: float = 0.9
    lr: float = 1e-3
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")


def rmsprop_step(param: Parameter, state: RmsPropState) -> None:
    """One RMSprop update in place, then clear the gradient."""
    g = param.grad
    state.s *= state.rho
    state.s += (1.0 - state.rho) * g * g
    param.value -= state.lr * g / (np.sqrt(state.s) + state.eps)
    param.zero_grad()


@dataclass
class RMSprop:
    params: list[Parameter]
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    states: dict[str, RmsPropState] = field(default_factory=dict)

    def __post_init__(self):
        self.params = list(self.params)
        for p in self.params:
            self.states[p.name] = RmsPropState(np.zeros_like(p.value), self.rho, self.lr, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            rmsprop_step(p, self.states[p.name])

    def state_arrays(self) -> Iterable[tuple[str, np.ndarray]]:
        for p in self.params:
            yield f"rmsprop.{p.name}", self.states[p.name].s
