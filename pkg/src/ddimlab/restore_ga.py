"""Restoration as one step of gradient ascent on a conditional log-likelihood.

Forward clock throughout: the current point x_t sits at time t and the
target time is s = t - tau. The log-likelihood of a candidate x at time s is

    ln N(x_t; x + tau f_s(x), g(t)^2 tau I) + ln q_s(x),

whose gradient is computed by ``cond_loglik_gradient``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateDiffusionError, DomainError


@dataclass(frozen=True)
class GAConfig:
    t: float
    s: float
    eta_override: Optional[float] = None

    def __post_init__(self):
        if not self.t > self.s:
            raise DomainError(f"need t > s, got t={self.t}, s={self.s}")

    @property
    def tau(self):
        return self.t - self.s


def learning_rate(p, t, s):
    """eta = g(t)^2 (t - s)."""
    g = p.diffusion(t)
    return g * g * (t - s)


def drift_jacobian_fd(p, t, x):
    """Central finite-difference Jacobian of f_t at each row of x; shape (N, d, d).

    The step is 1e-6 * (1 + |x|) per row.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    eps = 1e-6 * (1.0 + np.linalg.norm(x, axis=1))
    jac = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        step = eps[:, None] * e
        jac[:, :, j] = (p.drift(t, x + step) - p.drift(t, x - step)) / (2.0 * eps[:, None])
    return jac


def cond_loglik_gradient(p, score, t, s, x_t, x, second_order=True):
    """Gradient in x of the conditional log-likelihood of x at time s given x_t.

    (1/(g^2 tau)) (I + tau Df_s(x))^T (x_t - x - tau f_s(x)) + grad ln q_s(x).
    With ``second_order=False`` the tau Df term is dropped.
    """
    if not t > s:
        raise DomainError(f"need t > s, got t={t}, s={s}")
    tau = t - s
    g = p.diffusion(t)
    if not g > 0.0:
        raise DegenerateDiffusionError(f"g({t}) = 0")
    x_t = np.asarray(x_t, dtype=float)
    x = np.asarray(x, dtype=float)
    r = x_t - x - tau * p.drift(s, x)
    if second_order:
        jac = drift_jacobian_fd(p, s, x)
        r = r + tau * np.einsum("nji,nj->ni", jac, r)
    return r / (g * g * tau) + score(s, x)


def ga_restore(p, score, t, s, x_t, eta=None, second_order=False):
    """One gradient-ascent step from x_t with learning rate g(t)^2 (t - s).

    By default the O(tau^2) drift-Jacobian term is dropped, which makes the
    step x_t - tau f_s(x_t) + g(t)^2 tau grad ln q_s(x_t).
    """
    if eta is None:
        eta = learning_rate(p, t, s)
    return x_t + eta * cond_loglik_gradient(p, score, t, s, x_t, x_t, second_order=second_order)


def ou_gaussian_argmax(x_t, tau, var_s, alpha=1.0, beta=1.0):
    """Closed-form maximizer of the conditional log-likelihood for Gaussian data under
    the OU process dx = -alpha x dt + sqrt(2) beta dW, with q_s = N(0, var_s)."""
    a = 1.0 - alpha * tau
    prec_lik = a * a / (2.0 * beta * beta * tau)
    return (a / (2.0 * beta * beta * tau)) * np.asarray(x_t) / (prec_lik + 1.0 / var_s)


def ou_gaussian_stationary_point(x_t, tau, var_s, alpha=1.0, beta=1.0):
    """First-order expansion (1 + (alpha - 2 beta^2 / var_s) tau) x_t of the maximizer."""
    return (1.0 + (alpha - 2.0 * beta * beta / var_s) * tau) * np.asarray(x_t)
