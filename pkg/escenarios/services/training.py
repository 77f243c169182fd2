import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Callable, Iterator, Optional

import numpy as np
import pandas as pd
import torch

from .losses import check_mode, critic_loss, generator_loss, gradient_penalty
from .networks import (
    CONDITION_DIM,
    DTYPE,
    NOISE_DIM,
    SAMPLE_DIM,
    Mlp,
    as_tensor,
    critic_spec,
    generator_forward,
    generator_spec,
    init_networks,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iteration", "L_G", "L_D", "GP"]


class TrainingDivergedError(RuntimeError):
    """Raised when a loss becomes NaN or infinite during adversarial training."""


@dataclass(frozen=True)
class TrainConfig:
    noise_dim: int = NOISE_DIM
    iterations: int = 20000
    critic_steps_per_gen: int = 5
    batch_size: int = 32
    gp_weight: float = 10.0
    mode: str = "wgan_gp"
    clip_bound: float = 0.01
    learning_rate: float = 1e-4
    betas: tuple = (0.5, 0.9)
    seed: int = 0
    generator_hidden: int = 256
    critic_hidden: int = 128
    log_every: int = 500

    def __post_init__(self):
        check_mode(self.mode)
        if self.critic_steps_per_gen < 1:
            raise ValueError("critic_steps_per_gen debe ser al menos 1.")
        if self.gp_weight < 0:
            raise ValueError("gp_weight no puede ser negativo.")
        if self.noise_dim <= 0:
            raise ValueError("noise_dim debe ser positivo.")
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations >= 0 y batch_size >= 1.")
        if self.mode == "wgan_clip" and self.clip_bound <= 0:
            raise ValueError("clip_bound debe ser positivo en modo wgan_clip.")

    def as_dict(self) -> dict:
        payload = asdict(self)
        payload["betas"] = list(self.betas)
        return payload


@dataclass
class TrainingResult:
    generator: Mlp
    critic: Mlp
    history: pd.DataFrame
    config: TrainConfig


@contextmanager
def single_threaded() -> Iterator[None]:
    previous = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(previous)


def _check_finite(iteration: int, loss_g: float, loss_d: float, penalty: float) -> None:
    if not all(math.isfinite(value) for value in (loss_g, loss_d, penalty)):
        raise TrainingDivergedError(
            f"Entrenamiento divergente en la iteración {iteration}: L_G={loss_g}, L_D={loss_d}, GP={penalty}."
        )


def train(
    residuals,
    conditions,
    config: Optional[TrainConfig] = None,
    on_critic_step: Optional[Callable[[int, Mlp], None]] = None,
) -> TrainingResult:
    """
    Adversarial training of G(z | C) against D(s | C) on residual day-profiles.

    ``residuals`` has one 48-slot row per training day and ``conditions`` the
    matching condition vectors. Each iteration performs
    ``critic_steps_per_gen`` critic updates followed by one generator update,
    all with Adam. The history row of an iteration keeps the generator loss
    and the loss/penalty of its last critic step.
    """

    config = config or TrainConfig()
    real_all = as_tensor(residuals)
    cond_all = as_tensor(conditions)
    if real_all.dim() != 2 or real_all.shape[0] < 1:
        raise ValueError("Se requiere al menos un día de residuos.")
    if cond_all.dim() == 1:
        cond_all = cond_all.expand(real_all.shape[0], -1)
    if cond_all.shape[0] != real_all.shape[0]:
        raise ValueError("Cada día de residuos necesita su vector de condición.")

    condition_dim = cond_all.shape[1]
    sample_dim = real_all.shape[1]
    g_spec = generator_spec(config.noise_dim, config.generator_hidden, condition_dim, sample_dim)
    d_spec = critic_spec(config.mode, config.critic_hidden, condition_dim, sample_dim)
    generator = init_networks(g_spec, seed=config.seed)
    critic = init_networks(d_spec, seed=config.seed + 1)

    opt_g = torch.optim.Adam(generator.parameters(), lr=config.learning_rate, betas=tuple(config.betas))
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.learning_rate, betas=tuple(config.betas))

    batch_rng = np.random.default_rng(config.seed)
    noise_rng = torch.Generator().manual_seed(config.seed)
    rho_rng = torch.Generator().manual_seed(config.seed + 2)
    n_rows = real_all.shape[0]
    history = np.zeros((config.iterations, 4))

    def draw_batch():
        index = torch.as_tensor(batch_rng.integers(0, n_rows, size=config.batch_size))
        noise = torch.randn((config.batch_size, config.noise_dim), generator=noise_rng, dtype=DTYPE)
        return real_all[index], cond_all[index], noise

    logger.info(
        "Entrenando CGAN (%s): %s días, %s iteraciones, %s pasos de crítico por paso del generador",
        config.mode,
        n_rows,
        config.iterations,
        config.critic_steps_per_gen,
    )
    with single_threaded():
        for iteration in range(config.iterations):
            loss_d_value = penalty_value = 0.0
            for _ in range(config.critic_steps_per_gen):
                real, cond, noise = draw_batch()
                with torch.no_grad():
                    fake = generator_forward(generator, noise, cond)
                loss_d = critic_loss(critic, real, fake, cond, config.mode)
                penalty = torch.zeros((), dtype=DTYPE)
                if config.mode == "wgan_gp":
                    penalty = gradient_penalty(critic, real, fake, cond, config.gp_weight, generator=rho_rng)
                    loss_d = loss_d + penalty
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                if config.mode == "wgan_clip":
                    with torch.no_grad():
                        for parameter in critic.parameters():
                            parameter.clamp_(-config.clip_bound, config.clip_bound)
                loss_d_value = float(loss_d.detach())
                penalty_value = float(penalty.detach())
                if on_critic_step is not None:
                    on_critic_step(iteration, critic)

            _, cond, noise = draw_batch()
            fake = generator_forward(generator, noise, cond)
            loss_g = generator_loss(critic, fake, cond, config.mode)
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            loss_g_value = float(loss_g.detach())

            _check_finite(iteration, loss_g_value, loss_d_value, penalty_value)
            history[iteration] = (iteration, loss_g_value, loss_d_value, penalty_value)
            if config.log_every and (iteration + 1) % config.log_every == 0:
                logger.info(
                    "iter %s: L_G=%.5f L_D=%.5f GP=%.5f", iteration + 1, loss_g_value, loss_d_value, penalty_value
                )

    frame = pd.DataFrame(history, columns=HISTORY_COLUMNS)
    frame["iteration"] = frame["iteration"].astype(int)
    return TrainingResult(generator=generator, critic=critic, history=frame, config=config)


def write_loss_history(history: pd.DataFrame, path) -> None:
    history[HISTORY_COLUMNS].to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


__all__ = [
    "CONDITION_DIM",
    "HISTORY_COLUMNS",
    "SAMPLE_DIM",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainingResult",
    "single_threaded",
    "train",
    "write_loss_history",
]
