"""Dissipation functionals, the EDP functional and the jump LDP rate functional."""

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import trapezoid
from scipy.special import kl_div

from coshflows.cosh_core import perspective, rate_density_L
from coshflows.errors import InvalidArgumentError, InvalidTrajectoryError
from coshflows.graph_system import MarkovGraph, Trajectory, continuity_residual, divergence
from coshflows.tilting import Tilt, tilted_or_plain

logger = logging.getLogger(__name__)

QuadratureRule = Literal["trapezoid", "left"]

_EXPECTED_ORDER = {"trapezoid": 2, "left": 1}


def dissipation_R(g: MarkovGraph, rho, j):
    """Primal dissipation R(ρ, j) = Σ_xy 𝖢(j_xy | σ_xy), σ_xy = ½𝒌_xy√(ρ_xρ_y).

    ``rho`` and ``j`` may carry a leading time axis; the sum runs over the last
    two axes. Edges with zero base and non-zero flux give +inf.
    """
    rho = np.asarray(rho, dtype=float)
    j = np.asarray(j, dtype=float)
    if np.any(rho < 0):
        raise InvalidArgumentError("states must be non-negative")
    sigma = 0.5 * g.activity() * np.sqrt(rho[..., :, None] * rho[..., None, :])
    values = np.asarray(perspective(j, sigma))
    total = values.sum(axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def dissipation_Rstar_grad(g: MarkovGraph, tilt: Tilt | None, rho):
    """Dual dissipation along the gradient of ℋ(·|π^F) in Hellinger form.

    Σ_xy 𝒌^F_xy √(π^F_xπ^F_y) (√u_x − √u_y)² with u = ρ/π^F, which is finite
    for every non-negative ρ.
    """
    gF = tilted_or_plain(g, tilt)
    rho = np.asarray(rho, dtype=float)
    root = np.sqrt(rho / gF.pi)
    weight = gF.activity() * np.sqrt(gF.pi[:, None] * gF.pi[None, :])
    difference = (root[..., :, None] - root[..., None, :]) ** 2
    total = (weight * difference).sum(axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def free_energy(g: MarkovGraph, tilt: Tilt | None, rho):
    """𝓔^F(ρ) = ℋ(ρ|π^F); broadcasts over a leading time axis."""
    gF = tilted_or_plain(g, tilt)
    total = kl_div(np.asarray(rho, dtype=float), gF.pi).sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


class EDPReport(BaseModel):
    """Energy-dissipation balance along a trajectory."""

    model_config = ConfigDict(frozen=True)

    energy_start: float
    energy_end: float
    integral_R: float
    integral_Rstar: float
    I_T: float
    tolerance: float
    rule: QuadratureRule = "trapezoid"
    expected_order: int = 2

    @model_validator(mode="after")
    def _balance(self) -> "EDPReport":
        if self.integral_R < 0 or self.integral_Rstar < 0:
            raise ValueError("dissipation integrals must be non-negative")
        if np.isfinite(self.I_T):
            total = self.energy_end - self.energy_start + self.integral_R + self.integral_Rstar
            if abs(total - self.I_T) > 1e-12 * max(1.0, abs(total)):
                raise ValueError("I_T does not match its components")
        return self


def _time_integral(times: np.ndarray, values: np.ndarray, rule: QuadratureRule) -> float:
    if not np.all(np.isfinite(values)):
        return float(np.inf)
    if rule == "left":
        return float(np.sum(np.diff(times) * values[:-1]))
    return float(trapezoid(values, times))


def edp_report(
    times, energies, R_values, Rstar_values, tol: float, rule: QuadratureRule = "trapezoid"
) -> EDPReport:
    """Assemble an :class:`EDPReport` from sampled energy and dissipation rates."""
    times = np.asarray(times, dtype=float)
    integral_R = _time_integral(times, np.asarray(R_values), rule)
    integral_Rstar = _time_integral(times, np.asarray(Rstar_values), rule)
    start, end = float(energies[0]), float(energies[-1])
    I_T = end - start + integral_R + integral_Rstar
    return EDPReport(
        energy_start=start,
        energy_end=end,
        integral_R=integral_R,
        integral_Rstar=integral_Rstar,
        I_T=I_T,
        tolerance=tol,
        rule=rule,
        expected_order=_EXPECTED_ORDER[rule],
    )


def edp_functional(
    g: MarkovGraph,
    tilt: Tilt | None,
    traj: Trajectory,
    tol: float = 1e-5,
    rule: QuadratureRule = "trapezoid",
) -> EDPReport:
    """The EDP functional ℐᵀ of a trajectory for the gradient system of ``g``.

    Parameters
    ----------
    g : MarkovGraph
        Untilted detailed-balance graph.
    tilt : Tilt or None
        Tilt defining the energy ℋ(·|π^F) and the tilted dual dissipation.
    traj : Trajectory
        States and net fluxes satisfying the discrete continuity equation.
    tol : float, optional
        Continuity tolerance relative to the trajectory mass.
    rule : {"trapezoid", "left"}, optional
        Time quadrature of the dissipation integrals.

    Returns
    -------
    EDPReport
        Energy change plus integrated dissipations; non-negative up to ``tol``.
    """
    if traj.fluxes is None:
        raise InvalidTrajectoryError("the EDP functional needs the trajectory fluxes")
    residual = traj.continuity_residual()
    if residual > tol * max(1.0, traj.mass):
        raise InvalidTrajectoryError(
            f"continuity residual {residual:.3e} exceeds tolerance {tol:.1e}"
        )
    gF = tilted_or_plain(g, tilt)
    R_values = dissipation_R(gF, traj.states, traj.fluxes)
    Rstar_values = dissipation_Rstar_grad(gF, None, traj.states)
    energies = free_energy(gF, None, traj.states)
    report = edp_report(traj.times, energies, R_values, Rstar_values, tol, rule)
    logger.debug("EDP functional I_T = %.3e (continuity %.1e)", report.I_T, residual)
    return report


def ldp_rate(g: MarkovGraph, times, rho_path, flux_path, tol: float = 1e-6) -> float:
    """Rate functional 𝒥 = ∫ Σ_xy η(j_xy | ρ_xκ_xy) dt of an empirical path.

    ``flux_path`` holds one-way fluxes (non-negative, not antisymmetric),
    either one per output time or one per interval. Per-interval fluxes are
    constant on their interval, as :func:`~coshflows.particles.gillespie`
    counts them, and are compared against the interval's mean state. Paths
    violating the continuity equation beyond ``tol`` have infinite rate.
    """
    times = np.asarray(times, dtype=float)
    rho_path = np.asarray(rho_path, dtype=float)
    flux_path = np.asarray(flux_path, dtype=float)
    if np.any(flux_path < 0) or np.any(rho_path < 0):
        raise InvalidArgumentError("one-way fluxes and states must be non-negative")
    per_interval = flux_path.shape[0] == times.size - 1
    widths = np.diff(times)
    if per_interval:
        change = np.diff(rho_path, axis=0) + widths[:, None] * divergence(flux_path)
        residual = float(np.max(np.abs(change))) if change.size else 0.0
        states = 0.5 * (rho_path[1:] + rho_path[:-1])
    elif flux_path.shape[0] == times.size:
        residual = continuity_residual(times, rho_path, flux_path)
        states = rho_path
    else:
        raise InvalidArgumentError("flux_path needs one entry per time or per interval")
    if residual > tol * max(1.0, float(rho_path[0].sum())):
        logger.debug("continuity residual %.3e: rate is infinite", residual)
        return float(np.inf)
    density = kl_div(flux_path, states[:, :, None] * g.kappa).sum(axis=(1, 2))
    if per_interval:
        return float(np.sum(widths * density))
    return _time_integral(times, density, "trapezoid")


def contracted_ldp_density(g: MarkovGraph, rho, j) -> float:
    """Minimum of Σ η(J_xy|ρ_xκ_xy) over one-way fluxes J with net flux ``j``.

    The net flux convention is that of :func:`master_flux`: J_xy − J_yx = 2j_xy.
    Each unordered pair contributes 𝖫(j_yx; u_x, u_y; π_xκ_xy).
    """
    rho = np.asarray(rho, dtype=float)
    j = np.asarray(j, dtype=float)
    u = rho / g.pi
    flow = g.equilibrium_flux()
    total = 0.0
    for x, y in g.edges():
        total += rate_density_L(j[y, x], u[x], u[y], flow[x, y])
    return float(total)
