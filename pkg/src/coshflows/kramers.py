"""High-activation-energy limit of a double-well Fokker–Planck equation.

On the y-domain the density solves

    ∂tρ = τ_ε ∂_y(∂_yρ + ρ ∂_y(H/ε + F)),

time being measured in units of the typical transition time τ_ε. As ε → 0 the
well masses follow a two-state jump process whose rates carry the tilt only
through F(a), F(b) and the saddle value F(c).
"""

import logging
import warnings
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import IntegrationWarning, quad

from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.fokker_planck import FVProblem, fv_evolve, graded_grid
from coshflows.graph_system import MarkovGraph
from coshflows.sweeps import Deadline, ErrorTable, run_sweep

logger = logging.getLogger(__name__)

_QUAD_RTOL = 1e-8


class KramersSetup(BaseModel):
    """Double-well potential H with H(a) = H(b) = 0 and the saddle maximum H(c) > 0."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    H: Callable
    a: float
    b: float
    c: float
    domain: tuple[float, float]
    eps: float
    F: Callable | None = None
    m_upsilon: float = 1.0
    omega_vol: float = 1.0

    @model_validator(mode="after")
    def _check_wells(self) -> "KramersSetup":
        lo, hi = self.domain
        if not lo < self.a < self.c < self.b < hi:
            raise ValueError("need lo < a < c < b < hi")
        if self.eps <= 0 or self.m_upsilon <= 0 or self.omega_vol <= 0:
            raise ValueError("eps, m_upsilon and omega_vol must be positive")
        ha, hb, hc = (float(self.H(np.float64(y))) for y in (self.a, self.b, self.c))
        if abs(ha) > 1e-12 or abs(hb) > 1e-12:
            raise ValueError("H must vanish at both minima")
        if not hc > 0:
            raise ValueError("H must be positive at the saddle")
        samples = np.linspace(self.a, self.b, 2001)
        away = np.abs(samples - self.c) > 1e-2 * (self.b - self.a)
        if np.any(np.asarray(self.H(samples))[away] >= hc):
            raise ValueError("H must stay below H(c) between the wells")
        return self

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def tilt(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.zeros_like(y) if self.F is None else np.asarray(self.F(y), dtype=float)

    def tilt_at(self, y: float) -> float:
        return float(self.tilt(np.array([y]))[0])

    def with_eps(self, eps: float) -> "KramersSetup":
        return self.model_copy(update={"eps": eps})


def second_derivative(f: Callable, y: float, h: float) -> float:
    """Five-point central difference."""
    values = [float(f(np.float64(y + k * h))) for k in (-2, -1, 0, 1, 2)]
    return (-values[0] + 16 * values[1] - 30 * values[2] + 16 * values[3] - values[4]) / (12 * h * h)


def _integrate(f: Callable, lo: float, hi: float, points) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, error = quad(f, lo, hi, points=points, limit=400, epsabs=0.0, epsrel=_QUAD_RTOL)
        except IntegrationWarning as warning:
            raise NumericalFailureError(
                "adaptive quadrature did not converge", {"interval": [lo, hi], "detail": str(warning)}
            ) from None
    return value, error


class KramersConstants(BaseModel):
    """Normalization and time scale of the ε-problem with their Watson limits."""

    model_config = ConfigDict(frozen=True)

    Z_eps: float
    tau_eps: float
    log_tau_eps: float
    gamma_a: float
    gamma_b: float
    well_fraction_a: float
    well_fraction_b: float
    H2_a: float
    H2_b: float
    H2_c: float
    asymptotic_constant: float
    tau_asymptotic: float
    Z_error: float
    tau_error: float


def kramers_constants(setup: KramersSetup) -> KramersConstants:
    """Z_ε = |Ω|∫e^{−H/ε} and τ_ε = m_Υ (Z_ε/|Ω|) ∫_a^b e^{H/ε} by adaptive quadrature.

    The inner integral is evaluated as ∫ e^{(H − H(c))/ε} so only the final
    factor e^{H(c)/ε} can overflow; ``log_tau_eps`` stays finite regardless.
    γ^a, γ^b are the Watson weights (H″(a)^{−½}, H″(b)^{−½}) normalized to sum
    to 1/|Ω|, and the asymptotic τ is C ε e^{H(c)/ε} with
    C = 2π m_Υ (H″(a)^{−½} + H″(b)^{−½}) |H″(c)|^{−½}.
    """
    H, eps = setup.H, setup.eps
    lo, hi = setup.domain
    a, b, c = setup.a, setup.b, setup.c
    hc = float(H(np.float64(c)))

    def boltzmann(y):
        return float(np.exp(-H(np.float64(y)) / eps))

    def barrier(y):
        return float(np.exp((H(np.float64(y)) - hc) / eps))

    below, err_below = _integrate(boltzmann, lo, c, [a])
    above, err_above = _integrate(boltzmann, c, hi, [b])
    inner, err_inner = _integrate(barrier, a, b, [c])
    total = below + above

    log_tau = np.log(setup.m_upsilon) + np.log(total) + np.log(inner) + hc / eps
    h = 1e-4 * setup.width
    H2 = [second_derivative(H, y, h) for y in (a, b, c)]
    if H2[0] <= 0 or H2[1] <= 0 or H2[2] >= 0:
        raise InvalidArgumentError("H must have non-degenerate minima at a, b and a maximum at c")
    weights = np.array([H2[0] ** -0.5, H2[1] ** -0.5])
    gammas = weights / (weights.sum() * setup.omega_vol)
    constant = 2.0 * np.pi * setup.m_upsilon * weights.sum() * abs(H2[2]) ** -0.5
    with np.errstate(over="ignore"):
        tau = float(np.exp(log_tau))
        tau_asymptotic = float(constant * eps * np.exp(hc / eps))
    logger.debug("eps=%g: tau=%.6e (asymptotic %.6e)", eps, tau, tau_asymptotic)
    return KramersConstants(
        Z_eps=setup.omega_vol * total,
        tau_eps=tau,
        log_tau_eps=float(log_tau),
        gamma_a=float(gammas[0]),
        gamma_b=float(gammas[1]),
        well_fraction_a=below / total,
        well_fraction_b=above / total,
        H2_a=H2[0],
        H2_b=H2[1],
        H2_c=H2[2],
        asymptotic_constant=float(constant),
        tau_asymptotic=tau_asymptotic,
        Z_error=setup.omega_vol * (err_below + err_above),
        tau_error=float(tau * (err_inner / inner + (err_below + err_above) / total)),
    )


class KramersLimit(BaseModel):
    """Two-state limit of the well masses."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    graph: MarkovGraph
    pi0: np.ndarray
    prefactor: float
    F_a: float
    F_b: float
    F_c: float

    @property
    def relaxation_rate(self) -> float:
        kappa = self.graph.kappa
        return float(kappa[0, 1] + kappa[1, 0])

    def sigma(self, rho) -> float:
        """(m_Υ/|Ω|) √(u_a u_b) e^{(F(a)+F(b)−2F(c))/2} with u = ρ/π⁰."""
        u = np.asarray(rho, dtype=float) / self.pi0
        return self.prefactor * float(np.sqrt(u[0] * u[1])) * float(
            np.exp(0.5 * (self.F_a + self.F_b - 2.0 * self.F_c))
        )

    def well_mass_a(self, m0_a: float, times) -> np.ndarray:
        """Closed-form solution of the two-state equation for the mass in well a."""
        kappa = self.graph.kappa
        rate = self.relaxation_rate
        stationary = kappa[1, 0] / rate
        return stationary + (m0_a - stationary) * np.exp(-rate * np.asarray(times, dtype=float))


def kramers_limit_ode(setup: KramersSetup) -> KramersLimit:
    """Limit rates κ_ab = (m_Υ/|Ω|)(1/γ^a)e^{F(a)−F(c)}, κ_ba likewise.

    H(a) = H(b) = 0 fixes the well depths, so no further factors enter.
    """
    constants = kramers_constants(setup)
    F_a, F_b, F_c = (setup.tilt_at(y) for y in (setup.a, setup.b, setup.c))
    prefactor = setup.m_upsilon / setup.omega_vol
    kappa = np.array(
        [
            [0.0, prefactor / constants.gamma_a * np.exp(F_a - F_c)],
            [prefactor / constants.gamma_b * np.exp(F_b - F_c), 0.0],
        ]
    )
    pi0 = np.array([constants.gamma_a, constants.gamma_b]) * setup.omega_vol
    F_wells = np.array([F_a, F_b])
    weights = pi0 * np.exp(-(F_wells - F_wells.min()))
    graph = MarkovGraph(nodes=("a", "b"), kappa=kappa, pi=weights / weights.sum())
    return KramersLimit(graph=graph, pi0=pi0, prefactor=prefactor, F_a=F_a, F_b=F_b, F_c=F_c)


def kramers_problem(setup: KramersSetup, n_cells: int = 2000) -> FVProblem:
    """SG discretization with mobility τ_ε, γ = 1, V = H/ε + F on a saddle-refined grid."""
    constants = kramers_constants(setup)
    lo, hi = setup.domain
    faces = graded_grid(lo, hi, n_cells, setup.c, width=2.0 * np.sqrt(setup.eps))

    def potential(y):
        return setup.H(y) / setup.eps + setup.tilt(y)

    return FVProblem.build(faces, potential, mobility=constants.tau_eps, gamma=1.0, scheme="SG")


def _cell_masses(p: FVProblem, density: Callable | None, setup: KramersSetup) -> np.ndarray:
    if density is None:
        # local equilibrium of well a
        log_weights = np.log(p.volumes) - setup.H(p.centers) / setup.eps
        weights = np.where(p.centers < setup.c, np.exp(log_weights - log_weights.max()), 0.0)
    else:
        weights = np.asarray(density(p.centers), dtype=float) * p.volumes
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidArgumentError("initial density must be non-negative with positive mass")
    return weights / weights.sum()


def fitted_decay_rate(times, deviation, dt: float | None = None) -> float:
    """Exponential decay rate of |deviation| by a log-linear least-squares fit.

    With ``dt`` the fitted per-step factor is read as an implicit-Euler
    contraction 1/(1 + λ dt) and converted back to λ.
    """
    times = np.asarray(times, dtype=float)
    deviation = np.abs(np.asarray(deviation, dtype=float))
    keep = deviation > 1e-12 * max(1.0, float(deviation.max(initial=0.0)))
    if keep.sum() < 3:
        return float("nan")
    slope, _ = np.polyfit(times[keep], np.log(deviation[keep]), 1)
    if dt is None:
        return float(-slope)
    return float(np.expm1(-slope * dt) / dt)


class KramersRun(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eps: float
    times: np.ndarray
    mass_a: np.ndarray
    limit_mass_a: np.ndarray
    stationary_mass_a: float
    sup_error: float
    fitted_rate: float
    limit_rate: float


def kramers_run(
    setup: KramersSetup,
    T: float,
    rho0: Callable | None = None,
    n_cells: int = 2000,
    n_steps: int = 400,
) -> KramersRun:
    """One ε: FV evolution of the well masses against the two-state limit."""
    p = kramers_problem(setup, n_cells)
    masses0 = _cell_masses(p, rho0, setup)
    solution = fv_evolve(p, masses0, T, n_steps=n_steps)
    mass_a = solution.masses_below(p.centers, setup.c)
    limit = kramers_limit_ode(setup)
    limit_mass = limit.well_mass_a(mass_a[0], solution.times)
    stationary = float(p.stationary()[p.centers < setup.c].sum())
    transient = solution.times >= 0.1 * T
    rate = fitted_decay_rate(
        solution.times[transient], mass_a[transient] - stationary, dt=T / n_steps
    )
    return KramersRun(
        eps=setup.eps,
        times=solution.times,
        mass_a=mass_a,
        limit_mass_a=limit_mass,
        stationary_mass_a=stationary,
        sup_error=float(np.max(np.abs(mass_a - limit_mass))),
        fitted_rate=rate,
        limit_rate=limit.relaxation_rate,
    )


def kramers_experiment(
    setup: KramersSetup,
    eps_list,
    T: float,
    rho0: Callable | None = None,
    n_cells: int = 2000,
    n_steps: int = 400,
    threads: int | None = None,
    deadline: Deadline | None = None,
) -> ErrorTable:
    """Sup-in-time well-mass error and fitted relaxation rate for every ε.

    ``setup`` is a template whose ``eps`` is replaced per sweep point; ``rho0``
    is a density on the y-domain, the local equilibrium of well a by default.

    Returns
    -------
    ErrorTable
        Columns ``eps``, ``sup_error``, ``fitted_rate``.
    """
    eps_list = [float(eps) for eps in eps_list]
    if not eps_list:
        raise InvalidArgumentError("eps_list must not be empty")
    if any(later >= earlier for earlier, later in zip(eps_list, eps_list[1:])):
        raise InvalidArgumentError("eps_list must be strictly decreasing")
    if T <= 0:
        raise InvalidArgumentError("final time T must be positive")

    def sweep_point(eps: float) -> KramersRun:
        run = kramers_run(setup.with_eps(eps), T, rho0, n_cells, n_steps)
        logger.info(
            "eps=%g sup_error=%.3e fitted_rate=%.4f (limit %.4f)",
            eps,
            run.sup_error,
            run.fitted_rate,
            run.limit_rate,
        )
        return run

    results = run_sweep(sweep_point, eps_list, threads, deadline)
    return ErrorTable(
        columns=("eps", "sup_error", "fitted_rate"),
        rows=tuple((run.eps, run.sup_error, run.fitted_rate) for run, _ in results),
        runtimes=tuple(runtime for _, runtime in results),
    )
