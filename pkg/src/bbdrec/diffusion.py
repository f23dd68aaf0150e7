"""Forward/reverse bridge sampling and the training losses.

Every sampler takes its noise as an explicit argument, so all operations
here are pure functions and deterministic under test.  The affine
coefficients are plain Python floats (or numpy gathers for per-sample
steps), so the vector arguments may be numpy arrays or torch tensors of
any shape with a trailing feature dimension.
"""

from __future__ import annotations

import math

import numpy as np

from .schedule import BridgeSchedule, posterior_coefficients

__all__ = [
    "forward_sample",
    "forward_transition_sample",
    "posterior_mean_var",
    "reverse_step",
    "generate",
    "diffusion_loss",
    "rec_loss",
    "combined_loss",
    "elbo_step_weight",
]


def _check_dims(*vectors):
    shapes = {np.shape(v) for v in vectors}
    if len(shapes) > 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def forward_sample(s: BridgeSchedule, t, x0, xT, eps):
    """Draw x_t from the marginal: (1 - beta_t) x0 + beta_t xT + sqrt(delta_t) eps."""
    _check_dims(x0, xT, eps)
    if np.ndim(t) == 0:
        if not 0 <= t <= s.T:
            raise ValueError(f"step t must be in [0, {s.T}], got {t}")
        beta = float(s.beta[t])
        std = math.sqrt(float(s.delta[t]))
    else:
        t = np.asarray(t)
        beta = s.beta[t][..., None]
        std = np.sqrt(s.delta[t])[..., None]
    return (1.0 - beta) * x0 + beta * xT + std * eps


def forward_transition_sample(s: BridgeSchedule, t: int, x_prev, xT, eps):
    """Single forward step: gamma_t x_{t-1} + (beta_t - gamma_t beta_{t-1}) xT + sqrt(delta_hat_t) eps."""
    _check_dims(x_prev, xT, eps)
    if not 1 <= t <= s.T:
        raise ValueError(f"step t must be in [1, {s.T}], got {t}")
    g = float(s.gamma[t])
    drift = float(s.beta[t] - s.gamma[t] * s.beta[t - 1])
    std = math.sqrt(max(float(s.delta_hat[t]), 0.0))
    return g * x_prev + drift * xT + std * eps


def posterior_mean_var(s: BridgeSchedule, t: int, x_t, x0, xT):
    """Mean and scalar variance of q(x_{t-1} | x_t, x0, xT)."""
    _check_dims(x_t, x0, xT)
    cx, c0, cT, var = posterior_coefficients(s, t)
    return cx * x_t + c0 * x0 + cT * xT, var


def reverse_step(s: BridgeSchedule, t: int, x_t, xT, x0_pred, eps):
    """One reverse step using the denoiser prediction in place of x0."""
    _check_dims(x_t, xT, x0_pred, eps)
    cx, c0, cT, var = posterior_coefficients(s, t)
    return cx * x_t + c0 * x0_pred + cT * xT + math.sqrt(var) * eps


def generate(s: BridgeSchedule, denoiser, xT, rng=None, deterministic=False):
    """Run the full reverse chain from x_T and return the x0 estimate.

    ``denoiser`` maps (state, step) to an x0 prediction of the same shape.
    In stochastic mode (the default) fresh standard-normal noise is drawn
    from ``rng`` at every step; ``deterministic=True`` uses zero noise.
    The final step (t = 1) is deterministic either way, so with an oracle
    denoiser the output equals x0 exactly.
    """
    if not deterministic and rng is None:
        raise ValueError("stochastic generation requires an rng")
    x = xT
    zero = np.zeros(np.shape(xT))
    for t in range(s.T, 0, -1):
        eps = zero if deterministic else rng.standard_normal(np.shape(x))
        x = reverse_step(s, t, x, xT, denoiser(x, t), eps)
    return x


def diffusion_loss(s: BridgeSchedule, x0, xT, denoiser, t_draws, eps_draws):
    """Mean squared reconstruction error of the denoiser at sampled steps.

    ``x0``/``xT``/``eps_draws`` are (B, d) arrays and ``t_draws`` holds one
    step per sample.  The squared L2 norm is summed over the feature
    dimension and averaged over the batch.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    xT = np.atleast_2d(np.asarray(xT, dtype=np.float64))
    if x0.shape[0] == 0:
        raise ValueError("empty batch")
    t_draws = np.atleast_1d(np.asarray(t_draws))
    eps_draws = np.atleast_2d(np.asarray(eps_draws, dtype=np.float64))
    x_t = forward_sample(s, t_draws, x0, xT, eps_draws)
    preds = np.stack([np.asarray(denoiser(x_t[i], int(t_draws[i])))
                      for i in range(x0.shape[0])])
    return float(np.mean(np.sum((x0 - preds) ** 2, axis=-1)))


def rec_loss(history_reps, target_ids, embedding_table):
    """Full-softmax recommendation loss over the item vocabulary.

    Logits are inner products between each history representation and every
    item embedding; row 0 of the table is padding and excluded.  Returns
    the batch mean of the negative log-softmax at the target item.
    """
    reps = np.atleast_2d(np.asarray(history_reps, dtype=np.float64))
    table = np.asarray(embedding_table, dtype=np.float64)
    targets = np.atleast_1d(np.asarray(target_ids))
    n_items = table.shape[0] - 1
    if np.any(targets < 1) or np.any(targets > n_items):
        raise ValueError("target id out of vocabulary (or padding id 0)")
    logits = reps @ table[1:].T  # (B, |V|)
    logits = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1))
    return float(np.mean(log_z - logits[np.arange(len(targets)), targets - 1]))


def combined_loss(l_diff: float, l_rec: float, lambda1: float, lambda2: float) -> float:
    """Weighted multi-task objective lambda1 * l_diff + lambda2 * l_rec."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be nonnegative")
    return lambda1 * l_diff + lambda2 * l_rec


def elbo_step_weight(s: BridgeSchedule, t: int) -> tuple[float, float]:
    """Per-step weight of the denoising matching term in the ELBO.

    Returns ``(exact, literal)``: the exact Gaussian-KL weight
    coef_0^2 / (2 delta_tilde_t), and the unsquared variant
    coef_0 / (2 delta_tilde_t) as sometimes written.  Diagnostics only;
    training uses the unweighted reconstruction loss with uniform t.
    """
    if not 2 <= t <= s.T - 1:
        raise ValueError(f"step t must be in [2, {s.T - 1}], got {t}")
    _, c0, _, var = posterior_coefficients(s, t)
    return c0 ** 2 / (2.0 * var), c0 / (2.0 * var)
