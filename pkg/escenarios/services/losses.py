from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from .networks import Mlp, as_tensor, critic_forward, critic_logits, generator_forward

MODES = ("wgan_gp", "wgan_clip", "vanilla")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"Modo desconocido '{mode}'. Use uno de {MODES}.")
    return mode


@dataclass
class LossTerms:
    generator: torch.Tensor
    critic: torch.Tensor
    penalty: torch.Tensor

    def as_floats(self):
        return float(self.generator.detach()), float(self.critic.detach()), float(self.penalty.detach())


def critic_input_gradient(critic: Mlp, samples, conditions, create_graph: bool = False) -> torch.Tensor:
    """∂D/∂s for every sample of the batch (the condition part is held fixed)."""
    samples = as_tensor(samples)
    if not samples.requires_grad:
        samples = samples.detach().clone().requires_grad_(True)
    scores = critic_forward(critic, samples, conditions)
    (grad,) = torch.autograd.grad(scores.sum(), samples, create_graph=create_graph)
    return grad


def gradient_penalty(
    critic: Mlp,
    real,
    fake,
    conditions,
    gp_weight: float,
    seed: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    λ · mean((‖∇_s D(ŝ)‖₂ − 1)²) with ŝ = ρ s_g + (1 − ρ) s_r, one ρ ~ U(0, 1) per pair.

    The graph is kept so the penalty can be differentiated w.r.t. the critic
    parameters.
    """

    real = as_tensor(real)
    fake = as_tensor(fake)
    if real.shape != fake.shape:
        raise ValueError(f"Lotes de distinto tamaño: {tuple(real.shape)} vs {tuple(fake.shape)}.")
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(seed)
    rho = torch.rand((real.shape[0], 1), generator=generator, dtype=real.dtype)
    interpolated = (rho * fake.detach() + (1 - rho) * real.detach()).requires_grad_(True)
    grad = critic_input_gradient(critic, interpolated, conditions, create_graph=True)
    norms = grad.norm(2, dim=1)
    return gp_weight * ((norms - 1) ** 2).mean()


def critic_loss(critic: Mlp, real, fake, conditions, mode: str) -> torch.Tensor:
    check_mode(mode)
    if mode == "vanilla":
        # log D = −softplus(−a), log(1 − D) = −softplus(a)
        real_logits = critic_logits(critic, real, conditions)
        fake_logits = critic_logits(critic, fake, conditions)
        return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    return -critic_forward(critic, real, conditions).mean() + critic_forward(critic, fake, conditions).mean()


def generator_loss(critic: Mlp, fake, conditions, mode: str) -> torch.Tensor:
    check_mode(mode)
    if mode == "vanilla":
        return -F.softplus(critic_logits(critic, fake, conditions)).mean()
    return -critic_forward(critic, fake, conditions).mean()


def losses(
    generator: Mlp,
    critic: Mlp,
    real,
    noise,
    conditions,
    mode: str = "wgan_gp",
    gp_weight: float = 10.0,
    seed: Optional[int] = None,
    rng: Optional[torch.Generator] = None,
) -> LossTerms:
    """
    Batch estimates of (L_G, L_D). In ``wgan_gp`` mode L_D already includes
    the gradient penalty, which is also reported on its own.
    """

    real = as_tensor(real)
    noise = as_tensor(noise)
    if real.shape[0] == 0 or noise.shape[0] == 0:
        raise ValueError("Los lotes no pueden estar vacíos.")
    check_mode(mode)
    fake = generator_forward(generator, noise, conditions)
    loss_g = generator_loss(critic, fake, conditions, mode)
    loss_d = critic_loss(critic, real, fake, conditions, mode)
    penalty = torch.zeros((), dtype=real.dtype)
    if mode == "wgan_gp":
        penalty = gradient_penalty(critic, real, fake, conditions, gp_weight, seed=seed, generator=rng)
        loss_d = loss_d + penalty
    return LossTerms(generator=loss_g, critic=loss_d, penalty=penalty)


__all__ = [
    "LossTerms",
    "MODES",
    "check_mode",
    "critic_input_gradient",
    "critic_loss",
    "generator_loss",
    "gradient_penalty",
    "losses",
]
