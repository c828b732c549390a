"""Scalar building blocks of cosh-type gradient systems.

All functions accept scalars or numpy arrays and broadcast elementwise. Scalar
input gives a Python ``float``. The +infinity marker of an extended real is
``numpy.inf``.
"""

import logging

import numpy as np
from scipy.special import kl_div

from coshflows.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

_TAYLOR_SWITCH = 1e-8


def _out(value):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        return float(value)
    return value


def cosh_dual(xi):
    """The dual dissipation 𝖢*(ξ) = 4(cosh(ξ/2) − 1).

    Evaluated as 8 sinh²(ξ/4), which keeps full relative accuracy near the
    origin and overflows to +inf for |ξ| beyond roughly 1420.
    """
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over="ignore"):
        return _out(8.0 * np.sinh(xi / 4.0) ** 2)


def cosh_dual_prime(xi):
    """(𝖢*)′(ξ) = 2 sinh(ξ/2)."""
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over="ignore"):
        return _out(2.0 * np.sinh(xi / 2.0))


def cosh_primal(s):
    """The primal dissipation 𝖢(s) = 2s arsinh(s/2) − 2√(s²+4) + 4.

    The difference 4 − 2√(s²+4) is rewritten as −2s²/(√(s²+4)+2) and the
    root is taken with ``hypot`` so large |s| never overflows.
    """
    s = np.asarray(s, dtype=float)
    root = np.hypot(s, 2.0)
    with np.errstate(over="ignore", invalid="ignore"):
        value = 2.0 * s * np.arcsinh(s / 2.0) - 2.0 * s * (s / (root + 2.0))
    return _out(np.where(np.isinf(s), np.inf, value))


def cosh_primal_prime(s):
    """𝖢′(s) = 2 arsinh(s/2), the inverse of (𝖢*)′."""
    return _out(2.0 * np.arcsinh(np.asarray(s, dtype=float) / 2.0))


def perspective(s, sigma):
    """The perspective 𝖢(s|σ) of the primal dissipation.

    Parameters
    ----------
    s : float or ndarray
        Flux argument.
    sigma : float or ndarray
        Non-negative base.

    Returns
    -------
    float or ndarray
        σ𝖢(s/σ) for σ > 0, 0 for σ = s = 0 and +inf for σ = 0, s ≠ 0.
    """
    s, sigma = np.broadcast_arrays(
        np.asarray(s, dtype=float), np.asarray(sigma, dtype=float)
    )
    if np.any(sigma < 0):
        raise InvalidArgumentError("perspective base must be non-negative")
    positive = sigma > 0
    safe = np.where(positive, sigma, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = safe * np.asarray(cosh_primal(s / safe))
    degenerate = np.where(s == 0, 0.0, np.inf)
    return _out(np.where(positive, scaled, degenerate))


def eta(a, b):
    """Relative entropy density η(a|b) = a log(a/b) − a + b with its limits."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgumentError("eta requires non-negative arguments")
    return _out(kl_div(a, b))


def relative_entropy(mu, nu) -> float:
    """ℋ(μ|ν) = Σ η(μ_x|ν_x).

    Zero entries of ``nu`` are tolerated: mass of ``mu`` on them yields +inf.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise InvalidArgumentError(
            f"length mismatch: mu has shape {mu.shape}, nu has shape {nu.shape}"
        )
    return float(np.sum(eta(mu, nu)))


def hellinger_form(p, q):
    """2(√p − √q)², equal to √(pq) 𝖢*(log p − log q) and finite at p·q = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return _out(2.0 * (np.sqrt(p) - np.sqrt(q)) ** 2)


def _sinhc_ratio(delta):
    # (δ/2)/sinh(δ/2) expanded near zero.
    half = delta / 2.0
    small = np.abs(delta) < _TAYLOR_SWITCH
    safe = np.where(small, 1.0, half)
    with np.errstate(over="ignore"):
        direct = safe / np.sinh(safe)
    return np.where(small, 1.0 - half**2 / 6.0 + 7.0 * half**4 / 360.0, direct)


def log_mean(a, b):
    """Logarithmic mean Λ(a, b) = (a − b)/(log a − log b), Λ(a, a) = a."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgumentError("log_mean requires non-negative arguments")
    both = (a > 0) & (b > 0)
    sa = np.where(both, a, 1.0)
    sb = np.where(both, b, 1.0)
    delta = np.log(sa) - np.log(sb)
    small = np.abs(delta) < _TAYLOR_SWITCH
    geometric = np.sqrt(sa * sb)
    taylor = geometric * (1.0 + delta**2 / 24.0 + delta**4 / 1920.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (sa - sb) / np.where(small, 1.0, delta)
    value = np.where(small, taylor, direct)
    return _out(np.where(both, value, 0.0))


def harm_log_mean(a, b):
    """Harmonic-logarithmic mean Λ₋₁(a, b) = 1/Λ(1/a, 1/b), zero if ab = 0."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgumentError("harm_log_mean requires non-negative arguments")
    both = (a > 0) & (b > 0)
    sa = np.where(both, a, 1.0)
    sb = np.where(both, b, 1.0)
    delta = np.log(sb) - np.log(sa)
    value = np.sqrt(sa * sb) * _sinhc_ratio(delta)
    return _out(np.where(both, value, 0.0))


def _rate_density_scalar(j: float, alpha: float, beta: float, k: float) -> float:
    if k == 0.0:
        return 0.0 if j == 0.0 else np.inf
    if alpha > 0.0 and beta > 0.0:
        base = k * np.sqrt(alpha * beta)
        return (
            0.5 * perspective(2.0 * j, base)
            + k * (np.sqrt(alpha) - np.sqrt(beta)) ** 2
            - j * (np.log(beta) - np.log(alpha))
        )
    if alpha == 0.0 and j >= 0.0:
        return eta(2.0 * j, beta * k)
    if beta == 0.0 and j <= 0.0:
        return eta(-2.0 * j, alpha * k)
    return np.inf


def rate_density_L(j, alpha, beta, k):
    """Contracted one-way rate density 𝖫(j; α, β; k).

    Equals inf{η(a|αk) + η(b|βk) : a, b ≥ 0, (b − a)/2 = j}, evaluated through
    the closed form on each of its four branches.

    Parameters
    ----------
    j : float or ndarray
        Net flux.
    alpha, beta : float or ndarray
        Non-negative densities at the two ends.
    k : float or ndarray
        Non-negative edge rate.

    Returns
    -------
    float or ndarray
        Non-negative extended real.
    """
    j, alpha, beta, k = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (j, alpha, beta, k))
    )
    if np.any(alpha < 0) or np.any(beta < 0) or np.any(k < 0):
        raise InvalidArgumentError("alpha, beta and k must be non-negative")
    flat = [
        _rate_density_scalar(*values)
        for values in zip(j.ravel(), alpha.ravel(), beta.ravel(), k.ravel())
    ]
    return _out(np.asarray(flat, dtype=float).reshape(j.shape))


def _bracket_scalar(alpha: float, beta: float, j: float) -> float:
    if j == 0.0 or (alpha == 0.0 and beta == 0.0):
        return 0.0
    if alpha > 0.0 and beta > 0.0:
        return j * (np.log(beta) - np.log(alpha))
    if alpha == 0.0:
        return np.inf if j > 0.0 else -np.inf
    return -np.inf if j > 0.0 else np.inf


def bracket_B(alpha, beta, j):
    """Two-sided extended bracket B(α, β, j) = j(log β − log α)."""
    alpha, beta, j = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (alpha, beta, j))
    )
    if np.any(alpha < 0) or np.any(beta < 0):
        raise InvalidArgumentError("alpha and beta must be non-negative")
    flat = [
        _bracket_scalar(*values)
        for values in zip(alpha.ravel(), beta.ravel(), j.ravel())
    ]
    return _out(np.asarray(flat, dtype=float).reshape(j.shape))


def cell_N_explicit(j, alpha, beta, k):
    """Explicit cell function 𝒩(j, α, β; k) = 𝖢(j | k√(αβ)) + 2k(√α − √β)²."""
    j, alpha, beta, k = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (j, alpha, beta, k))
    )
    if np.any(k <= 0):
        raise InvalidArgumentError("conductivity k must be positive")
    if np.any(alpha < 0) or np.any(beta < 0):
        raise InvalidArgumentError("alpha and beta must be non-negative")
    boundary = k * np.asarray(hellinger_form(alpha, beta))
    return _out(np.asarray(perspective(j, k * np.sqrt(alpha * beta))) + boundary)


def cell_N_dual(j: float, alpha: float, beta: float, k: float) -> float:
    """Dual characterization sup_ζ ζj + 2k(α + β − 2√(αβ) cosh(ζ/2)).

    The maximizer ζ* = 2 arsinh(j/(2k√(αβ))) solves j = 2k√(αβ) sinh(ζ/2).
    """
    if k <= 0:
        raise InvalidArgumentError("conductivity k must be positive")
    if alpha < 0 or beta < 0:
        raise InvalidArgumentError("alpha and beta must be non-negative")
    product = alpha * beta
    if product == 0.0:
        return 2.0 * k * (alpha + beta) if j == 0.0 else np.inf
    root = np.sqrt(product)
    zeta = 2.0 * np.arcsinh(j / (2.0 * k * root))
    # cosh(ζ*/2) = √(1 + (j/(2k√αβ))²)
    cosh_half = np.hypot(1.0, j / (2.0 * k * root))
    return float(zeta * j + 2.0 * k * (alpha + beta) - 4.0 * k * root * cosh_half)


def series_combine(k1: float, k2: float) -> float:
    """Series law for cell conductivities, (1/k₁ + 1/k₂)⁻¹."""
    if k1 <= 0 or k2 <= 0:
        raise InvalidArgumentError("series_combine requires positive conductivities")
    return 1.0 / (1.0 / k1 + 1.0 / k2)


def parallel_combine(ks) -> float:
    """Parallel law for cell conductivities, Σkⁱ."""
    ks = np.asarray(ks, dtype=float)
    if ks.size == 0 or np.any(ks <= 0):
        raise InvalidArgumentError("parallel_combine requires positive conductivities")
    return float(ks.sum())
