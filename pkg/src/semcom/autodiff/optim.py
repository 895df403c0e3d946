"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, DiffTensor


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN/inf; the step was not applied."""

    def __init__(self, names):
        super().__init__(f"non-finite gradient for {', '.join(map(str, names))}")
        self.names = list(names)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update, in place on ``params``.

    Parameters without an entry in ``grads`` are treated as having zero
    gradient. The whole step is rejected (nothing mutated) if any gradient is
    non-finite.
    """
    if state.lr <= 0:
        raise ContractError("learning rate must be positive")
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(bad)
    for k, g in grads.items():
        if k not in params:
            raise ContractError(f"gradient for unknown parameter {k!r}")
        if g.shape != params[k].shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k!r}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for k, p in params.items():
        g = grads.get(k)
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        if g is None:
            g = np.zeros_like(p)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state


class Adam:
    """Convenience wrapper binding :func:`adam_step` to named DiffTensors."""

    def __init__(self, params: dict[str, DiffTensor], lr: float = 1e-3, **kw):
        self.params = params
        self.state = AdamState(lr=lr, **kw)

    def step(self, grads_by_node: dict[int, np.ndarray]) -> None:
        grads = {name: grads_by_node[p.node_id] for name, p in self.params.items()
                 if p.node_id in grads_by_node}
        adam_step({k: p.data for k, p in self.params.items()}, grads, self.state)
