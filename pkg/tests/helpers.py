"""Shared oracles for the test suite.

Everything here is deliberately naive (loops, direct sums, quadrature) and
independent of the library's own computation paths.
"""

import numpy as np

from mier.autodiff import Tensor


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference matrix product via explicit triple loop."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        f_plus = f(x)
        flat[i] = original - h
        f_minus = f(x)
        flat[i] = original
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Per-coordinate relative error with an absolute floor for near-zero grads."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return np.abs(analytic - numeric) / denom


def gaussian_kl_quadrature(mu: float, logvar: float, half_width: float = 14.0,
                           points: int = 40001) -> float:
    """KL(N(mu, exp(logvar)) || N(0, 1)) by trapezoidal quadrature on a wide grid."""
    sigma = np.exp(0.5 * logvar)
    lo = min(mu - half_width * sigma, -half_width)
    hi = max(mu + half_width * sigma, half_width)
    z = np.linspace(lo, hi, points)
    log_q = -0.5 * ((z - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)
    log_p = -0.5 * z**2 - 0.5 * np.log(2 * np.pi)
    q = np.exp(log_q)
    return float(np.trapezoid(q * (log_q - log_p), z))


def categorical_kl_direct(probs: np.ndarray, uniform_k: int) -> float:
    """Direct summation of KL(q || uniform) with the 0 log 0 = 0 convention."""
    total = 0.0
    for p in probs:
        if p > 0:
            total += p * np.log(p / (1.0 / uniform_k))
    return total


def entropy_direct(probs: np.ndarray) -> float:
    total = 0.0
    for p in np.asarray(probs).ravel():
        if p > 0:
            total -= p * np.log(p)
    return total


def mi_direct_double_sum(rows: np.ndarray) -> float:
    """(1/B) sum_i sum_y q(y|x_i) log(q(y|x_i) / qbar(y)) by direct loops."""
    rows = np.asarray(rows, dtype=np.float64)
    b, k = rows.shape
    marginal = rows.mean(axis=0)
    total = 0.0
    for i in range(b):
        for y in range(k):
            q = rows[i, y]
            if q > 0:
                total += q * np.log(q / marginal[y])
    return total / b


def adam_scalar_recurrence(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Reference scalar Adam trajectory for a fixed gradient sequence."""
    x, m, v = x0, 0.0, 0.0
    history = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
        history.append(x)
    return history


def gauss_hermite_expected_recon(params, x_row, y_row, mu, sigma, nodes=96):
    """Exact E_{z~N(mu, sigma^2)}[reconstruction log-likelihood] for a
    one-dimensional latent, by Gauss-Hermite quadrature."""
    from mier.autodiff import no_grad
    from mier.distributions import bernoulli_log_likelihood
    from mier.model import decode

    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    z = (mu + sigma * t).reshape(-1, 1)
    x_tiled = np.tile(np.asarray(x_row).reshape(1, -1), (nodes, 1))
    y_tiled = np.tile(np.asarray(y_row).reshape(1, -1), (nodes, 1))
    with no_grad():
        ll = bernoulli_log_likelihood(x_tiled, decode(params, z, y_tiled)).data
    return float((w * ll).sum() / np.sqrt(2.0 * np.pi))


def fd_check_params(loss_fn, params: dict, h: float = 1e-5) -> float:
    """Max relative error between backward gradients and finite differences.

    ``loss_fn`` must rebuild its graph from the current parameter values and
    return a scalar Tensor.
    """
    from mier.autodiff import gradients

    analytic = gradients(loss_fn(), params)
    worst = 0.0
    for name, p in params.items():
        def f(_arr, _name=name):
            return loss_fn().item()

        numeric = central_difference(lambda arr: f(arr), p.data, h=h)
        worst = max(worst, float(relative_errors(analytic[name], numeric).max()))
    return worst
