"""Adam with bias correction, operating on ModelParams trees in place."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .model import ModelParams


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3


def adam_init(params: ModelParams, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=params.zeros_like(), v=params.zeros_like(),
        step_count=0, beta1=beta1, beta2=beta2, eps=eps, lr=lr,
    )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState):
    """One optimizer step. Mutates params and state in place and returns
    them for convenience.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    p_arrays = params.named_arrays()
    g_arrays = grads.named_arrays()
    m_arrays = state.m.named_arrays()
    v_arrays = state.v.named_arrays()
    for (name, theta), (gname, g), (_, m), (_, v) in zip(
        p_arrays, g_arrays, m_arrays, v_arrays
    ):
        if theta.shape != g.shape:
            raise ContractError(f"gradient shape mismatch for {name}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
