"""Parameter storage, Adam, and a plateau learning-rate scheduler."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParamStore:
    """Named parameters with same-shaped gradient buffers, insertion ordered."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad

    def num_scalars(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype) -> None:
        """Cast parameters and gradients in place (keeps array identity per name)."""
        for name in self.params:
            self.params[name] = self.params[name].astype(dtype)
            self.grads[name] = self.grads[name].astype(dtype)


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store: ParamStore, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for name, p in store.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update of every parameter in ``store``."""
    if set(state.m) != set(store.params):
        raise RuntimeError("Adam state not initialised for this parameter store")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in store.items():
        g = store.grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` stalled epochs.

    An epoch counts as an improvement when the metric drops below
    ``best * (1 - threshold)``; after a reduction the bad-epoch counter resets.
    """

    def __init__(self, state: AdamState, factor: float = 0.01, patience: int = 3,
                 threshold: float = 1e-4, min_lr: float = 0.0):
        if not 0 < factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        self.state = state
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = float("inf")
        self.num_bad = 0
        self.num_reductions = 0

    def step(self, metric: float) -> bool:
        """Feed one epoch's metric; returns True when the lr was reduced."""
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.num_bad = 0
            return False
        self.num_bad += 1
        if self.num_bad > self.patience:
            self.state.lr = max(self.state.lr * self.factor, self.min_lr)
            self.num_bad = 0
            self.num_reductions += 1
            return True
        return False
