import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import torch

from .networks import DTYPE, Mlp, as_tensor, generator_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioSet:
    """n residual day-profiles (kW) drawn for one condition vector."""

    condition: Any
    scenarios: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.scenarios.shape[0]


def scenario_seed(seed: int, index: int) -> int:
    """Seed of the noise stream of scenario ``index``; independent of batch layout."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0])


def scenario_noise(seed: int, n: int, noise_dim: int, offset: int = 0) -> torch.Tensor:
    rows = []
    for index in range(offset, offset + n):
        stream = torch.Generator().manual_seed(scenario_seed(seed, index))
        rows.append(torch.randn(noise_dim, generator=stream, dtype=DTYPE))
    return torch.stack(rows) if rows else torch.zeros((0, noise_dim), dtype=DTYPE)


def sample_scenarios(generator: Mlp, condition, n: int, seed: int) -> ScenarioSet:
    """Draws ``n`` scenarios G(z_i | C) with z_i ~ N(0, I) from per-index seeded streams."""
    if n < 1:
        raise ValueError("Se requiere al menos un escenario.")
    values = getattr(condition, "values", condition)
    noise = scenario_noise(seed, n, generator.spec.free_dim)
    with torch.no_grad():
        samples = generator_forward(generator, noise, as_tensor(values))
    return ScenarioSet(condition=condition, scenarios=samples.numpy().copy(), seed=int(seed))


def sample_scenarios_batch(generator: Mlp, conditions, n: int, seed: int) -> np.ndarray:
    """Scenarios for several conditions at once: (len(conditions), n, sample_dim)."""
    conditions = np.atleast_2d(np.asarray(conditions, dtype=float))
    noise = scenario_noise(seed, n, generator.spec.free_dim)
    out = np.empty((conditions.shape[0], n, generator.spec.output_dim))
    with torch.no_grad():
        for row, condition in enumerate(conditions):
            out[row] = generator_forward(generator, noise, as_tensor(condition)).numpy()
    return out


__all__ = ["ScenarioSet", "sample_scenarios", "sample_scenarios_batch", "scenario_noise", "scenario_seed"]
