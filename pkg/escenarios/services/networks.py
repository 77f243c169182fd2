import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

DTYPE = torch.float64
CONDITION_DIM = 290
SAMPLE_DIM = 48
NOISE_DIM = 512
ACTIVATIONS = ("identity", "logistic")


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected network: rectifier hidden layers, identity or logistic output."""

    layer_sizes: Tuple[int, ...]
    output_activation: str = "identity"
    hidden_activation: str = "relu"
    condition_dim: int = CONDITION_DIM

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("Se requieren al menos dos tamaños de capa (entrada y salida).")
        if any(size <= 0 for size in self.layer_sizes):
            raise ValueError(f"Capa de tamaño nulo en {self.layer_sizes}.")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"Activación de salida desconocida '{self.output_activation}'.")
        if self.hidden_activation != "relu":
            raise ValueError("Solo se admite la activación oculta 'relu'.")
        if not 0 <= self.condition_dim < self.layer_sizes[0]:
            raise ValueError("La dimensión de condición debe ser menor que la entrada.")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def free_dim(self) -> int:
        """Width of the non-condition part of the input (noise or sample)."""
        return self.layer_sizes[0] - self.condition_dim

    def as_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "output_activation": self.output_activation,
            "hidden_activation": self.hidden_activation,
            "condition_dim": self.condition_dim,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MlpSpec":
        return cls(
            layer_sizes=tuple(payload["layer_sizes"]),
            output_activation=payload["output_activation"],
            hidden_activation=payload.get("hidden_activation", "relu"),
            condition_dim=payload["condition_dim"],
        )


def generator_spec(
    noise_dim: int = NOISE_DIM,
    hidden: int = 256,
    condition_dim: int = CONDITION_DIM,
    sample_dim: int = SAMPLE_DIM,
) -> MlpSpec:
    return MlpSpec((noise_dim + condition_dim, hidden, sample_dim), "identity", condition_dim=condition_dim)


def critic_spec(
    mode: str = "wgan_gp",
    hidden: int = 128,
    condition_dim: int = CONDITION_DIM,
    sample_dim: int = SAMPLE_DIM,
) -> MlpSpec:
    output = "logistic" if mode == "vanilla" else "identity"
    return MlpSpec((sample_dim + condition_dim, hidden, 1), output, condition_dim=condition_dim)


class Mlp(nn.Module):
    def __init__(self, spec: MlpSpec):
        super().__init__()
        self.spec = spec
        sizes = spec.layer_sizes
        self.layers = nn.ModuleList(
            nn.Linear(sizes[i], sizes[i + 1], dtype=DTYPE) for i in range(len(sizes) - 1)
        )

    def logits(self, inputs: torch.Tensor) -> torch.Tensor:
        """Output before the output activation."""
        hidden = inputs
        for layer in self.layers[:-1]:
            hidden = torch.relu(layer(hidden))
        return self.layers[-1](hidden)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        out = self.logits(inputs)
        if self.spec.output_activation == "logistic":
            return torch.sigmoid(out)
        return out

    def weights(self) -> dict:
        """Parameters as C-ordered numpy arrays keyed like the state dict."""
        return {name: np.ascontiguousarray(value.detach().cpu().numpy()) for name, value in self.state_dict().items()}

    def load_weights(self, weights: dict) -> None:
        state = {name: torch.as_tensor(np.asarray(value), dtype=DTYPE) for name, value in weights.items()}
        self.load_state_dict(state)


def init_networks(spec: MlpSpec, seed: Optional[int] = None) -> Mlp:
    """
    Builds the network with Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out)))
    and zero biases. The global torch RNG is left untouched.
    """

    with torch.random.fork_rng(devices=[]):
        if seed is not None:
            torch.manual_seed(seed)
        model = Mlp(spec)
        with torch.no_grad():
            for layer in model.layers:
                nn.init.xavier_uniform_(layer.weight)
                nn.init.zeros_(layer.bias)
    return model


def as_tensor(values) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(DTYPE)
    return torch.as_tensor(np.asarray(values, dtype=float), dtype=DTYPE)


def _joined(spec: MlpSpec, head, condition) -> torch.Tensor:
    head = as_tensor(head)
    condition = as_tensor(condition)
    if head.shape[-1] != spec.free_dim:
        raise ValueError(f"Dimensión de entrada {head.shape[-1]} ≠ {spec.free_dim}.")
    if condition.shape[-1] != spec.condition_dim:
        raise ValueError(f"Dimensión de condición {condition.shape[-1]} ≠ {spec.condition_dim}.")
    if head.dim() == 2 and condition.dim() == 1:
        condition = condition.expand(head.shape[0], -1)
    return torch.cat([head, condition], dim=-1)


def generator_forward(generator: Mlp, z, condition) -> torch.Tensor:
    """G(z | C): input is [noise, condition]."""
    return generator(_joined(generator.spec, z, condition))


def critic_forward(critic: Mlp, sample, condition) -> torch.Tensor:
    """D(s | C): input is [sample, condition]; one score per sample."""
    return critic(_joined(critic.spec, sample, condition)).squeeze(-1)


def critic_logits(critic: Mlp, sample, condition) -> torch.Tensor:
    return critic.logits(_joined(critic.spec, sample, condition)).squeeze(-1)


__all__ = [
    "CONDITION_DIM",
    "DTYPE",
    "Mlp",
    "MlpSpec",
    "NOISE_DIM",
    "SAMPLE_DIM",
    "as_tensor",
    "critic_forward",
    "critic_logits",
    "critic_spec",
    "generator_forward",
    "generator_spec",
    "init_networks",
]
