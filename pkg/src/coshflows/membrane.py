"""Thin-membrane limit of a one-dimensional Fokker–Planck equation.

The reference geometry is [−1, 0] ∪ (0, 1) ∪ [1, 2]: two bulk regions with
mobilities a₋, a₊ and a membrane with mobility a*. In the ε-problem the
membrane occupies [0, ε] with mobility ε·a*(x/ε) and the right bulk is shifted
to [ε, 1 + ε]. As ε → 0 the membrane becomes a transmission condition whose
coefficient is computed by :func:`membrane_sigma`.

Densities are driven by the potential W = V + F; w = ρe^{W} is the density
relative to e^{−W}, and the steady flux through a layer is the jump of w over
the layer resistance ∫ e^{W}/a.
"""

import logging
import warnings
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.integrate import IntegrationWarning, quad

from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.fokker_planck import FVProblem, bernoulli, constant_potential, fv_evolve
from coshflows.sweeps import Deadline, ErrorTable, run_sweep

logger = logging.getLogger(__name__)


class MembraneSetup(BaseModel):
    """Mobilities, potential and tilt on the reference geometry [−1, 2]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a_minus: Callable = constant_potential(1.0)
    a_plus: Callable = constant_potential(1.0)
    a_star: Callable = constant_potential(1.0)
    V: Callable = constant_potential(0.0)
    F: Callable = constant_potential(0.0)
    eps: float = 0.1

    @field_validator("a_minus", "a_plus", "a_star", "V", "F", mode="before")
    @classmethod
    def _wrap_constant(cls, value):
        if isinstance(value, (int, float)):
            return constant_potential(float(value))
        return value

    @model_validator(mode="after")
    def _check_mobilities(self) -> "MembraneSetup":
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        sample_points = {
            "a_minus": (self.a_minus, np.linspace(-1.0, 0.0, 101)),
            "a_star": (self.a_star, np.linspace(0.0, 1.0, 101)),
            "a_plus": (self.a_plus, np.linspace(1.0, 2.0, 101)),
        }
        for name, (mobility, points) in sample_points.items():
            values = np.asarray(mobility(points), dtype=float)
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise ValueError(f"{name} must be positive and finite")
        return self

    def with_eps(self, eps: float) -> "MembraneSetup":
        return self.model_copy(update={"eps": eps})

    def W(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.asarray(self.V(s), dtype=float) + np.asarray(self.F(s), dtype=float)

    def membrane_resistance(self) -> float:
        """∫₀¹ e^{W}/a*, the resistance of the membrane for w."""
        return _integrate(lambda s: float(np.exp(self.W(s)) / self.a_star(np.float64(s))))


def _integrate(f: Callable) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(f, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-10)
        except IntegrationWarning as warning:
            raise NumericalFailureError(
                "membrane quadrature did not converge", {"detail": str(warning)}
            ) from None
    return value


def membrane_sigma(setup: MembraneSetup, u_left: float, u_right: float) -> float:
    """σ = √(u(0⁻)u(1⁺)) / ∫₀¹ (1/a*) e^{V} e^{(2F(s) − F(0) − F(1))/2} ds.

    Adding a constant to F leaves σ unchanged. Raising F inside the membrane
    by α multiplies the integral by e^{α}, so σ scales by e^{−α}.
    """
    if u_left < 0 or u_right < 0:
        raise InvalidArgumentError("densities must be non-negative")
    F0, F1 = float(setup.F(np.float64(0.0))), float(setup.F(np.float64(1.0)))

    def integrand(s: float) -> float:
        s = np.float64(s)
        exponent = setup.V(s) + (2.0 * setup.F(s) - F0 - F1) / 2.0
        return float(np.exp(exponent) / setup.a_star(s))

    return float(np.sqrt(u_left * u_right)) / _integrate(integrand)


def _harmonic_faces(widths: np.ndarray, cell_mobility: np.ndarray) -> np.ndarray:
    # face mobility from the two half-cell resistances in series
    distance = 0.5 * (widths[:-1] + widths[1:])
    resistance = 0.5 * widths[:-1] / cell_mobility[:-1] + 0.5 * widths[1:] / cell_mobility[1:]
    return distance / resistance


class MembraneLayout(BaseModel):
    """Cell index ranges of the bulk regions inside an FV problem."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    problem: FVProblem
    left: slice
    right: slice
    membrane: slice
    reference_centers: np.ndarray

    @property
    def bulk_index(self) -> np.ndarray:
        index = np.arange(self.problem.n)
        return np.concatenate([index[self.left], index[self.right]])


def membrane_problem(setup: MembraneSetup, n_bulk: int = 100, n_membrane: int = 20) -> MembraneLayout:
    """SG discretization of the ε-problem in physical coordinates [−1, 1 + ε]."""
    if n_bulk < 2 or n_membrane < 1:
        raise InvalidArgumentError("need at least two bulk cells and one membrane cell")
    eps = setup.eps
    faces = np.concatenate(
        [
            np.linspace(-1.0, 0.0, n_bulk + 1),
            np.linspace(0.0, eps, n_membrane + 1)[1:],
            np.linspace(eps, 1.0 + eps, n_bulk + 1)[1:],
        ]
    )
    centers = 0.5 * (faces[1:] + faces[:-1])
    left = slice(0, n_bulk)
    membrane = slice(n_bulk, n_bulk + n_membrane)
    right = slice(n_bulk + n_membrane, 2 * n_bulk + n_membrane)

    reference = centers.copy()
    reference[membrane] = centers[membrane] / eps
    reference[right] = centers[right] - eps + 1.0
    mobility = np.empty_like(centers)
    mobility[left] = setup.a_minus(reference[left])
    mobility[membrane] = eps * np.asarray(setup.a_star(reference[membrane]), dtype=float)
    mobility[right] = setup.a_plus(reference[right])

    problem = FVProblem(
        faces=faces,
        potential=setup.W(reference),
        mobility=_harmonic_faces(np.diff(faces), mobility),
        gamma=1.0,
        scheme="SG",
    )
    return MembraneLayout(
        problem=problem, left=left, right=right, membrane=membrane, reference_centers=reference
    )


def limit_problem(setup: MembraneSetup, n_bulk: int = 100) -> MembraneLayout:
    """Bulk regions joined at a single face carrying the transmission condition.

    The interface flux G(w_L − w_R) uses the series resistance of the two
    half cells and the membrane; as an SG face it needs the mobility
    G d e^{W_R}/B(W_L − W_R).
    """
    faces = np.concatenate([np.linspace(-1.0, 0.0, n_bulk + 1), np.linspace(0.0, 1.0, n_bulk + 1)[1:]])
    centers = 0.5 * (faces[1:] + faces[:-1])
    widths = np.diff(faces)
    left = slice(0, n_bulk)
    right = slice(n_bulk, 2 * n_bulk)
    reference = centers.copy()
    reference[right] = centers[right] + 1.0
    cell_mobility = np.empty_like(centers)
    cell_mobility[left] = setup.a_minus(reference[left])
    cell_mobility[right] = setup.a_plus(reference[right])
    W = setup.W(reference)

    face_mobility = _harmonic_faces(widths, cell_mobility)
    L, R = n_bulk - 1, n_bulk
    resistance = (
        0.5 * widths[L] * np.exp(W[L]) / cell_mobility[L]
        + setup.membrane_resistance()
        + 0.5 * widths[R] * np.exp(W[R]) / cell_mobility[R]
    )
    distance = 0.5 * (widths[L] + widths[R])
    face_mobility[L] = distance * np.exp(W[R]) / (resistance * bernoulli(W[L] - W[R]))

    problem = FVProblem(faces=faces, potential=W, mobility=face_mobility, gamma=1.0, scheme="SG")
    return MembraneLayout(
        problem=problem, left=left, right=right, membrane=slice(0, 0), reference_centers=reference
    )


def _initial_masses(layout: MembraneLayout, density: Callable | None) -> np.ndarray:
    p = layout.problem
    if density is None:
        weights = np.ones(p.n) * p.volumes
    else:
        weights = np.asarray(density(layout.reference_centers), dtype=float) * p.volumes
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidArgumentError("initial density must be non-negative with positive mass")
    return weights / weights.sum()


class MembraneFit(BaseModel):
    """Predicted and fitted transmission coefficients of the membrane."""

    model_config = ConfigDict(frozen=True)

    eps: float
    sigma0: float
    sigma_fit: float
    relative_deviation: float


def fit_transmission(setup: MembraneSetup, layout: MembraneLayout, solution) -> MembraneFit:
    """Least-squares fit of the membrane flux against the jump of w across it.

    The fitted series conductance G between the adjacent bulk cells is
    corrected for the two bulk half cells, leaving the membrane part.
    """
    p = layout.problem
    L = layout.left.stop - 1
    R = layout.right.start
    # implicit-step fluxes belong to the end of each step
    concentration = solution.states[1:] / p.volumes
    jump = concentration[:, L] * np.exp(p.potential[L]) - concentration[:, R] * np.exp(p.potential[R])
    membrane_faces = slice(layout.left.stop - 1, layout.right.start)
    flux = solution.face_fluxes[:, membrane_faces].mean(axis=1)
    late = solution.times[1:] >= 0.1 * solution.times[-1]
    denominator = float(np.sum(jump[late] ** 2))
    F0, F1 = float(setup.F(np.float64(0.0))), float(setup.F(np.float64(1.0)))
    sigma0 = membrane_sigma(setup, 1.0, 1.0)
    if denominator == 0.0:
        return MembraneFit(eps=setup.eps, sigma0=sigma0, sigma_fit=float("nan"), relative_deviation=float("nan"))
    conductance = float(np.sum(flux[late] * jump[late])) / denominator
    a_left = setup.a_minus(layout.reference_centers[L])
    a_right = setup.a_plus(layout.reference_centers[R])
    halves = 0.5 * p.volumes[L] * np.exp(p.potential[L]) / a_left
    halves += 0.5 * p.volumes[R] * np.exp(p.potential[R]) / a_right
    membrane_conductance = 1.0 / (1.0 / conductance - float(halves))
    # back to the normalization of membrane_sigma
    sigma_fit = membrane_conductance * float(np.exp(0.5 * (F0 + F1)))
    return MembraneFit(
        eps=setup.eps,
        sigma0=sigma0,
        sigma_fit=sigma_fit,
        relative_deviation=abs(sigma_fit - sigma0) / sigma0,
    )


def membrane_experiment(
    setup: MembraneSetup,
    eps_list,
    T: float,
    rho0: Callable | None = None,
    n_bulk: int = 100,
    n_membrane: int = 20,
    n_steps: int = 400,
    threads: int | None = None,
    deadline: Deadline | None = None,
) -> tuple[ErrorTable, MembraneFit]:
    """Sup-in-time L¹ bulk error of the ε-problems against the limit system.

    Parameters
    ----------
    setup : MembraneSetup
        Template; ``eps`` is replaced per sweep point.
    eps_list : sequence of float
        Membrane thicknesses.
    T : float
        Final time.
    rho0 : callable, optional
        Initial density on the reference geometry [−1, 2]; uniform by default.
        The membrane share is dropped for the limit and both initial states are
        normalized to unit mass.

    Returns
    -------
    tuple of ErrorTable and MembraneFit
        Columns ``eps`` and ``sup_error``; the fit uses the smallest ε.
    """
    eps_list = [float(eps) for eps in eps_list]
    if not eps_list:
        raise InvalidArgumentError("eps_list must not be empty")
    limit = limit_problem(setup, n_bulk)
    reference = fv_evolve(limit.problem, _initial_masses(limit, rho0), T, n_steps=n_steps)

    def sweep_point(eps: float):
        scaled = setup.with_eps(eps)
        layout = membrane_problem(scaled, n_bulk, n_membrane)
        solution = fv_evolve(layout.problem, _initial_masses(layout, rho0), T, n_steps=n_steps)
        error = np.abs(solution.states[:, layout.bulk_index] - reference.states).sum(axis=1)
        sup_error = float(error.max())
        logger.info("eps=%g sup_error=%.3e", eps, sup_error)
        return sup_error, (scaled, layout, solution)

    results = run_sweep(sweep_point, eps_list, threads, deadline)
    smallest = int(np.argmin(eps_list))
    scaled, layout, solution = results[smallest][0][1]
    fit = fit_transmission(scaled, layout, solution)
    logger.info("sigma0=%.6f fitted=%.6f", fit.sigma0, fit.sigma_fit)
    table = ErrorTable(
        columns=("eps", "sup_error"),
        rows=tuple((eps, result[0]) for eps, (result, _) in zip(eps_list, results)),
        runtimes=tuple(runtime for _, runtime in results),
    )
    return table, fit
