"""Probabilistic scores for ensemble forecasts."""

import numpy as np

DEFAULT_QUANTILES = (0.1, 0.5, 0.9)


def _check_quantile(q) -> None:
    q = np.asarray(q, dtype=float)
    if not ((q > 0) & (q < 1)).all():
        raise ValueError("El cuantil debe estar en (0, 1).")


def crps_ensemble(ensemble, observation) -> np.ndarray:
    """
    CRPS of the empirical CDF of ``ensemble`` (members on the last axis):
    mean|X - y| - 1/2 mean|X - X'|, with the pair term from the sorted members.
    """

    members = np.sort(np.asarray(ensemble, dtype=float), axis=-1)
    n = members.shape[-1]
    if n == 0:
        raise ValueError("El ensamble está vacío.")
    y = np.asarray(observation, dtype=float)[..., None]
    spread = np.abs(members - y).mean(axis=-1)
    weights = 2 * np.arange(1, n + 1) - n - 1
    pair = 2.0 * (members * weights).sum(axis=-1) / (n * n)
    return np.maximum(spread - 0.5 * pair, 0.0)


def crps(ensemble, observation) -> float:
    return float(crps_ensemble(np.ravel(ensemble), observation))


def pinball(y_hat_q, observation, q: float):
    """(1 - q)(ŷ - y) when y < ŷ, q (y - ŷ) otherwise."""
    _check_quantile(q)
    y_hat_q = np.asarray(y_hat_q, dtype=float)
    y = np.asarray(observation, dtype=float)
    loss = np.where(y < y_hat_q, (1 - q) * (y_hat_q - y), q * (y - y_hat_q))
    return loss if loss.ndim else float(loss)


def quantile(ensemble, q, axis: int = -1):
    """Linear-interpolation empirical quantile (positions (i - 1) / (n - 1))."""
    _check_quantile(q)
    members = np.asarray(ensemble, dtype=float)
    if members.size == 0:
        raise ValueError("El ensamble está vacío.")
    value = np.quantile(members, q, axis=axis, method="linear")
    return value if np.ndim(value) else float(value)


def pinball_ensemble(ensemble, observation, quantiles=DEFAULT_QUANTILES) -> dict:
    """Pinball loss of the ensemble's own quantiles, one array per q."""
    return {q: pinball(quantile(ensemble, q), observation, q) for q in quantiles}


__all__ = ["DEFAULT_QUANTILES", "crps", "crps_ensemble", "pinball", "pinball_ensemble", "quantile"]
