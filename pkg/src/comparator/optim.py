"""Adam optimiser operating in place on a :class:`ScoringModel`."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GradientTape, ScoringModel


class NumericalError(ArithmeticError):
    """Raised when training produces a non-finite loss or gradient."""

    def __init__(self, message: str, batch_index: int | None = None):
        if batch_index is not None:
            message = f"{message} (batch {batch_index})"
        super().__init__(message)
        self.batch_index = batch_index


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_num: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: ScoringModel, **hyper) -> "AdamState":
        params = model.parameters()
        return cls(
            **hyper,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )

    def copy(self) -> "AdamState":
        return AdamState(
            self.learning_rate, self.beta1, self.beta2, self.epsilon_num, self.step,
            [a.copy() for a in self.m], [a.copy() for a in self.v],
        )


def adam_step(
    model: ScoringModel,
    tape: GradientTape,
    state: AdamState,
    batch_index: int | None = None,
) -> tuple[ScoringModel, AdamState]:
    """Apply one bias-corrected Adam update to ``model`` in place.

    Raises
    ------
    NumericalError
        If any gradient entry is non-finite; the model is left untouched.
    """
    params = model.parameters()
    if len(tape.grads) != len(params) or len(state.m) != len(params):
        raise ValueError("gradient tape / optimiser state do not match the model")
    if not tape.is_finite():
        raise NumericalError("non-finite gradient", batch_index)

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, tape.grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon_num)
    return model, state
