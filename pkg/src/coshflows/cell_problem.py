"""Variational cell problem behind the cell function 𝒩 and its composition laws."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.linalg import solve_banded
from scipy.optimize import minimize, minimize_scalar

from coshflows.cosh_core import cell_N_explicit
from coshflows.errors import InvalidArgumentError, NumericalFailureError

logger = logging.getLogger(__name__)

_V_FLOOR = 1e-7
_MAX_NEWTON = 100


class CellProblem(BaseModel):
    """Data of the cell problem on [0, 1].

    The conductivity is piecewise constant: ``values[i]`` holds between
    ``breakpoints[i-1]`` and ``breakpoints[i]`` (with 0 and 1 as outer ends).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    flux: float
    alpha: float
    beta: float
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = (1.0,)
    grid_points: int = 200

    @field_validator("alpha", "beta")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("boundary densities must be non-negative")
        return value

    @field_validator("grid_points")
    @classmethod
    def _enough_points(cls, value: int) -> int:
        if value < 2:
            raise ValueError("grid_points must be at least 2")
        return value

    @model_validator(mode="after")
    def _check_profile(self) -> "CellProblem":
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("values must have one entry more than breakpoints")
        edges = (0.0, *self.breakpoints, 1.0)
        if any(lo >= hi for lo, hi in zip(edges[:-1], edges[1:])):
            raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
        if min(self.values) <= 0:
            raise ValueError("conductivity must be bounded below by a positive k0")
        return self

    @property
    def k0(self) -> float:
        return min(self.values)

    def conductivity_at(self, z) -> np.ndarray:
        index = np.searchsorted(np.asarray(self.breakpoints), z, side="right")
        return np.asarray(self.values)[index]

    def harmonic_mean(self) -> float:
        """k* = (∫₀¹ 1/k dz)⁻¹."""
        edges = np.array((0.0, *self.breakpoints, 1.0))
        return 1.0 / float(np.sum(np.diff(edges) / np.asarray(self.values)))


def _energy(v: np.ndarray, k: np.ndarray, h: float, j: float) -> float:
    gradient = 2.0 * k * np.diff(v) ** 2 / h
    potential = h * j**2 / (4.0 * k) * (1.0 / v[:-1] ** 2 + 1.0 / v[1:] ** 2)
    return float(np.sum(gradient + potential))


def cell_N_variational(p: CellProblem) -> float:
    """Discrete minimum of ∫₀¹ [j²/(2kw) + 2k|∂_z√w|²] dz with w(0)=α, w(1)=β.

    The functional is minimized over v = √w on a uniform node grid by damped
    Newton. The Hessian is tridiagonal and positive definite, so each step is a
    banded solve.

    Parameters
    ----------
    p : CellProblem
        Cell data with strictly positive boundary densities.

    Returns
    -------
    float
        The discrete minimum, converging to ``cell_N_explicit(j, α, β, k*)``
        with k* the harmonic mean of the profile.
    """
    if p.alpha * p.beta == 0:
        raise InvalidArgumentError(
            "variational cell problem needs alpha, beta > 0; use cell_N_explicit"
        )
    n = p.grid_points
    h = 1.0 / n
    midpoints = (np.arange(n) + 0.5) * h
    k = p.conductivity_at(midpoints)
    j = p.flux

    v = np.linspace(np.sqrt(p.alpha), np.sqrt(p.beta), n + 1)

    weight = h * j**2 / 4.0 * (1.0 / k[:-1] + 1.0 / k[1:])
    energy = _energy(v, k, h, j)
    for iteration in range(_MAX_NEWTON):
        inner = v[1:-1]
        grad = (
            4.0 * k[:-1] * (inner - v[:-2]) / h
            - 4.0 * k[1:] * (v[2:] - inner) / h
            - 2.0 * weight / inner**3
        )
        bands = np.zeros((3, n - 1))
        bands[0, 1:] = -4.0 * k[1:-1] / h
        bands[1] = 4.0 * (k[:-1] + k[1:]) / h + 6.0 * weight / inner**4
        bands[2, :-1] = -4.0 * k[1:-1] / h
        step = solve_banded((1, 1), bands, -grad)
        decrement = float(-grad @ step)
        if decrement < 1e-20 * max(1.0, energy):
            logger.debug("cell problem converged after %d Newton steps", iteration)
            return energy

        t = 1.0
        while True:
            trial = v.copy()
            trial[1:-1] = np.maximum(inner + t * step, _V_FLOOR)
            trial_energy = _energy(trial, k, h, j)
            if trial_energy <= energy - 0.25 * t * decrement or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            if decrement < 1e-10 * max(1.0, energy):
                return energy
            break
        v, energy = trial, trial_energy

    raise NumericalFailureError(
        "damped Newton did not converge on the cell problem",
        {"grid_points": n, "energy": energy},
    )


def series_infimum(
    j: float, alpha: float, beta: float, k1: float, k2: float
) -> tuple[float, float]:
    """Minimize 𝒩(j, α, γ; k₁) + 𝒩(j, γ, β; k₂) over the intermediate density γ.

    Returns
    -------
    tuple of float
        The infimum and the minimizing γ.
    """

    def objective(log_gamma: float) -> float:
        gamma = np.exp(log_gamma)
        return float(
            cell_N_explicit(j, alpha, gamma, k1) + cell_N_explicit(j, gamma, beta, k2)
        )

    centre = 0.5 * (np.log(alpha) + np.log(beta))
    result = minimize_scalar(
        objective,
        bounds=(centre - 20.0, centre + 20.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(result.fun), float(np.exp(result.x))


def parallel_infimum(j: float, alpha: float, beta: float, ks) -> tuple[float, np.ndarray]:
    """Minimize Σ𝒩(jⁱ, α, β; kⁱ) over flux splits with Σjⁱ = j.

    Returns
    -------
    tuple
        The infimum and the minimizing split.
    """
    ks = np.asarray(ks, dtype=float)
    if ks.size == 1:
        return float(cell_N_explicit(j, alpha, beta, ks[0])), np.array([j])

    def objective(free: np.ndarray) -> float:
        split = np.append(free, j - free.sum())
        return float(np.sum(cell_N_explicit(split, alpha, beta, ks)))

    start = j * ks[:-1] / ks.sum()
    result = minimize(
        objective, start, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000},
    )
    split = np.append(result.x, j - result.x.sum())
    return float(result.fun), split
