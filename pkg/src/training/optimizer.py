"""Adam with bias correction and decoupled weight decay, over named numpy arrays."""

from dataclasses import dataclass

import numpy as np

from src.errors import DivergenceError
from src.training.train_config import OptimizerConfig


@dataclass
class Moments:
    """First/second moment estimates and the step count of one parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "Moments":
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: dict[str, Moments],
    cfg: OptimizerConfig,
) -> dict[str, np.ndarray]:
    """Return updated copies of every parameter that has a gradient.

    `moments` is advanced in place; parameters without a gradient are left out.
    """
    updated = {}
    for name in sorted(grads):
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient for parameter '{name}'")
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
        state = moments.setdefault(name, Moments.zeros_like(param))

        new = param * (1.0 - cfg.lr * cfg.weight_decay) if cfg.weight_decay else param.copy()
        state.step += 1
        state.m *= cfg.beta1
        state.m += (1.0 - cfg.beta1) * grad
        state.v *= cfg.beta2
        state.v += (1.0 - cfg.beta2) * (grad * grad)
        m_hat = state.m / (1.0 - cfg.beta1**state.step)
        v_hat = state.v / (1.0 - cfg.beta2**state.step)
        new -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        updated[name] = new
    return updated


class Adam:
    """Stateful wrapper writing updates back into the live parameter arrays."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.moments: dict[str, Moments] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, value in optimizer_step(params, grads, self.moments, self.cfg).items():
            params[name][...] = value

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name, state in self.moments.items():
            arrays[f"adam.m.{name}"] = state.m
            arrays[f"adam.v.{name}"] = state.v
        return arrays

    def steps(self) -> dict[str, int]:
        return {name: state.step for name, state in sorted(self.moments.items())}

    def load_state(self, arrays: dict[str, np.ndarray], steps: dict[str, int]) -> None:
        self.moments = {
            name: Moments(
                arrays[f"adam.m.{name}"].copy(), arrays[f"adam.v.{name}"].copy(), int(step)
            )
            for name, step in steps.items()
        }
