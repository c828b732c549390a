"""Mass-action reaction networks as cosh gradient systems.

A reaction α ⇌ β with complexes α, β ∈ ℕ^species has the net rate

    r = ½ k (ρ^α/π^α − ρ^β/π^β),   k = D e^{−β_T E_act},   π_x = e^{−β_T E_x},

and the reaction-rate equation is ∂tρ = −Σ r (α − β). Monomials follow the
mass-action convention 0⁰ = 1.
"""

import logging
from typing import Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.integrate import solve_ivp
from scipy.linalg import null_space
from scipy.special import kl_div

from coshflows.cosh_core import cosh_dual, cosh_dual_prime, cosh_primal, hellinger_form
from coshflows.dissipation import EDPReport, QuadratureRule, edp_report
from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.graph_system import MarkovGraph, as_readonly

logger = logging.getLogger(__name__)

STIFF_RATE_SPREAD = 1e6
NEGATIVITY_LIMIT = 1e-8


class Reaction(BaseModel):
    """α ⇌ β with shared prefactor ``D`` and activation energy ``E_act``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: np.ndarray
    beta: np.ndarray
    D: float = 1.0
    E_act: float = 0.0

    @field_validator("alpha", "beta", mode="before")
    @classmethod
    def _coerce(cls, value) -> np.ndarray:
        return as_readonly(value, ndim=1)

    @model_validator(mode="after")
    def _check(self) -> "Reaction":
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same length")
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ValueError("stoichiometric coefficients must be non-negative")
        if np.array_equal(self.alpha, self.beta):
            raise ValueError("a reaction needs alpha != beta")
        if not self.D > 0:
            raise ValueError("prefactor D must be positive")
        return self

    @property
    def is_monomolecular(self) -> bool:
        return self.alpha.sum() == 1 and self.beta.sum() == 1 and np.all(self.alpha * self.beta == 0)


class ReactionNetwork(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    species: tuple[str, ...]
    energies: np.ndarray
    reactions: tuple[Reaction, ...] = ()
    inv_temp: float = 1.0

    @field_validator("energies", mode="before")
    @classmethod
    def _coerce(cls, value) -> np.ndarray:
        return as_readonly(value, ndim=1)

    @model_validator(mode="after")
    def _check(self) -> "ReactionNetwork":
        n = len(self.species)
        if len(set(self.species)) != n:
            raise ValueError("species ids must be unique")
        if self.energies.shape != (n,) or not np.all(np.isfinite(self.energies)):
            raise ValueError(f"energies must be {n} finite values")
        if not self.inv_temp > 0:
            raise ValueError("inverse temperature must be positive")
        for reaction in self.reactions:
            if reaction.alpha.shape != (n,):
                raise ValueError(f"reaction complexes must have {n} entries")
        return self

    @classmethod
    def from_dicts(
        cls,
        species,
        energies,
        reactions: list[Mapping],
        inv_temp: float = 1.0,
    ) -> "ReactionNetwork":
        """Build from complexes given as ``{species: coefficient}`` mappings."""
        species = tuple(species)
        index = {name: i for i, name in enumerate(species)}

        def complex_vector(mapping: Mapping) -> np.ndarray:
            vector = np.zeros(len(species))
            for name, coefficient in mapping.items():
                if name not in index:
                    raise InvalidArgumentError(f"unknown species {name!r} in reaction")
                vector[index[name]] = coefficient
            return vector

        built = tuple(
            Reaction(
                alpha=complex_vector(entry["alpha"]),
                beta=complex_vector(entry["beta"]),
                D=entry.get("D", 1.0),
                E_act=entry.get("E_act", 0.0),
            )
            for entry in reactions
        )
        return cls(species=species, energies=energies, reactions=built, inv_temp=inv_temp)

    @property
    def size(self) -> int:
        return len(self.species)

    @property
    def pi(self) -> np.ndarray:
        """Unnormalized π_x = e^{−β_T E_x}."""
        return np.exp(-self.inv_temp * self.energies)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.reactions]).reshape(len(self.reactions), self.size)

    @property
    def betas(self) -> np.ndarray:
        return np.array([r.beta for r in self.reactions]).reshape(len(self.reactions), self.size)

    def stoichiometry(self) -> np.ndarray:
        """Rows α − β, one per reaction."""
        return self.alphas - self.betas


def _monomials(values: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    # values (..., species), exponents (reactions, species) -> (..., reactions)
    base = values[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        powered = np.where(exponents > 0, base**exponents, 1.0)
    return np.prod(powered, axis=-1)


def _check_state(net: ReactionNetwork, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != net.size:
        raise InvalidArgumentError(f"state must have {net.size} entries")
    if np.any(rho < 0):
        raise InvalidArgumentError("state must be non-negative")
    return rho


def _relative_monomials(net: ReactionNetwork, rho) -> tuple[np.ndarray, np.ndarray]:
    u = _check_state(net, rho) / net.pi
    return _monomials(u, net.alphas), _monomials(u, net.betas)


def arrhenius(net: ReactionNetwork) -> np.ndarray:
    """k = D e^{−β_T E_act} per reaction."""
    D = np.array([r.D for r in net.reactions])
    E_act = np.array([r.E_act for r in net.reactions])
    return D * np.exp(-net.inv_temp * E_act)


def reaction_rates(net: ReactionNetwork, rho) -> np.ndarray:
    """Net rates ½k(ρ^α/π^α − ρ^β/π^β); broadcasts over a leading time axis."""
    forward, backward = _relative_monomials(net, rho)
    return 0.5 * arrhenius(net) * (forward - backward)


def rre_rhs(net: ReactionNetwork, rho) -> np.ndarray:
    """Right-hand side of the reaction-rate equation, −Σ r (α − β)."""
    if not net.reactions:
        return np.zeros_like(_check_state(net, rho))
    return -reaction_rates(net, rho) @ net.stoichiometry()


def chem_force(net: ReactionNetwork, rho) -> np.ndarray:
    """Ξ = (α − β)·log(ρ/π) per reaction; ±inf where a monomial vanishes."""
    forward, backward = _relative_monomials(net, rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(forward) - np.log(backward)


def chem_sigma(net: ReactionNetwork, rho) -> np.ndarray:
    """Activity ½k√(ρ^αρ^β/(π^απ^β)) per reaction."""
    forward, backward = _relative_monomials(net, rho)
    return 0.5 * arrhenius(net) * np.sqrt(forward * backward)


def chem_Rstar(net: ReactionNetwork, rho, Xi) -> float:
    """Σ σ 𝖢*(Ξ) over reactions; reactions with zero activity contribute 0."""
    sigma = chem_sigma(net, rho)
    Xi = np.asarray(Xi, dtype=float)
    if Xi.shape != sigma.shape:
        raise InvalidArgumentError("one force per reaction is required")
    with np.errstate(invalid="ignore"):
        terms = np.where(sigma > 0, sigma * np.asarray(cosh_dual(Xi)), 0.0)
    return float(terms.sum())


def chem_flux_from_force(net: ReactionNetwork, rho, Xi) -> np.ndarray:
    """∂_Ξ chem_Rstar = σ (𝖢*)′(Ξ)."""
    sigma = chem_sigma(net, rho)
    with np.errstate(invalid="ignore"):
        return np.where(sigma > 0, sigma * np.asarray(cosh_dual_prime(Xi)), 0.0)


def chem_Rstar_grad(net: ReactionNetwork, rho):
    """chem_Rstar at Ξ = chem_force, in the finite form Σ k(√(ρ^α/π^α) − √(ρ^β/π^β))²."""
    forward, backward = _relative_monomials(net, rho)
    total = (0.5 * arrhenius(net) * hellinger_form(forward, backward)).sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def chem_R(net: ReactionNetwork, rho, rates):
    """Primal dissipation Σ σ 𝖢(r/σ) of per-reaction net rates."""
    sigma = chem_sigma(net, rho)
    rates = np.asarray(rates, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(
            sigma > 0,
            sigma * np.asarray(cosh_primal(rates / np.where(sigma > 0, sigma, 1.0))),
            np.where(rates == 0, 0.0, np.inf),
        )
    total = terms.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def relative_free_energy(net: ReactionNetwork, rho):
    """ℋ(ρ|π) with the unnormalized π."""
    total = kl_div(np.asarray(rho, dtype=float), net.pi).sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


class ConservedCharges(BaseModel):
    """Orthonormal rows q with q·(α − β) = 0 for every reaction."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: np.ndarray

    def values(self, rho) -> np.ndarray:
        return np.asarray(rho, dtype=float) @ self.basis.T


def conserved_basis(net: ReactionNetwork) -> ConservedCharges:
    if not net.reactions:
        return ConservedCharges(basis=np.eye(net.size))
    return ConservedCharges(basis=null_space(net.stoichiometry()).T)


class ReactionTiltEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    reaction: int
    sigma_ratio: float
    extrapolated: bool


class ChemicalTiltReport(BaseModel):
    """σ(ρ, F)/σ(ρ, 0) per reaction.

    Only monomolecular reactions have a derived saddle-tilt law; for the others
    the same Arrhenius substitution is applied and the entry is flagged.
    """

    model_config = ConfigDict(frozen=True)

    entries: tuple[ReactionTiltEntry, ...]

    @property
    def any_extrapolated(self) -> bool:
        return any(entry.extrapolated for entry in self.entries)


def chemical_tilt(net: ReactionNetwork, F, F_act) -> tuple[ReactionNetwork, ChemicalTiltReport]:
    """Tilt the energy levels: E ↦ E + F, E_act ↦ E_act + F_act.

    Parameters
    ----------
    net : ReactionNetwork
        Untilted network.
    F : array_like
        Per-species tilt.
    F_act : array_like
        Per-reaction tilt of the saddle (activation) energy.

    Returns
    -------
    tuple of ReactionNetwork and ChemicalTiltReport
        The tilted network and the activity ratios
        e^{(β_T/2)(α·F + β·F − 2F_act)}.
    """
    F = np.asarray(F, dtype=float)
    F_act = np.asarray(F_act, dtype=float)
    if F.shape != (net.size,) or F_act.shape != (len(net.reactions),):
        raise InvalidArgumentError("F needs one value per species and F_act one per reaction")
    reactions = tuple(
        reaction.model_copy(update={"E_act": reaction.E_act + float(shift)})
        for reaction, shift in zip(net.reactions, F_act)
    )
    tilted = net.model_copy(update={"energies": as_readonly(net.energies + F), "reactions": reactions})
    entries = tuple(
        ReactionTiltEntry(
            reaction=i,
            sigma_ratio=float(
                np.exp(0.5 * net.inv_temp * (reaction.alpha @ F + reaction.beta @ F - 2.0 * F_act[i]))
            ),
            extrapolated=not reaction.is_monomolecular,
        )
        for i, reaction in enumerate(net.reactions)
    )
    if any(entry.extrapolated for entry in entries):
        logger.info("saddle tilt applied to non-monomolecular reactions by extrapolation")
    return tilted, ChemicalTiltReport(entries=entries)


def as_markov_graph(net: ReactionNetwork) -> MarkovGraph:
    """Induced jump process of a monomolecular network, κ_ab = k/(2π_a).

    The rates use the same π as :func:`rre_rhs`, so both evolutions coincide;
    the returned graph carries π normalized.
    """
    kappa = np.zeros((net.size, net.size))
    pi = net.pi
    for reaction, k in zip(net.reactions, arrhenius(net)):
        if not reaction.is_monomolecular:
            raise InvalidArgumentError("only monomolecular networks induce a jump process")
        a, b = int(np.argmax(reaction.alpha)), int(np.argmax(reaction.beta))
        kappa[a, b] += k / (2.0 * pi[a])
        kappa[b, a] += k / (2.0 * pi[b])
    return MarkovGraph(nodes=net.species, kappa=kappa, pi=pi / pi.sum())


class ReactionTrajectory(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray
    fluxes: np.ndarray


def evolve_rre(
    net: ReactionNetwork,
    rho0,
    T: float,
    output_grid=None,
    tol: float = 1e-5,
    rule: QuadratureRule = "trapezoid",
) -> tuple[ReactionTrajectory, EDPReport]:
    """Integrate the reaction-rate equation and evaluate its EDP functional.

    RK45 is used unless the Arrhenius rates spread over more than six decades,
    in which case the implicit Radau method takes over.

    Raises
    ------
    NumericalFailureError
        If the integrator fails or a state drops below −1e−8.
    """
    rho0 = _check_state(net, rho0)
    if T <= 0:
        raise InvalidArgumentError("final time T must be positive")
    grid = np.linspace(0.0, T, 101) if output_grid is None else np.asarray(output_grid, dtype=float)
    rates = arrhenius(net)
    spread = float(rates.max() / rates.min()) if rates.size else 1.0
    method = "RK45"
    if spread > STIFF_RATE_SPREAD:
        logger.info("rate spread %.1e: switching to Radau", spread)
        method = "Radau"

    def rhs(_, rho):
        return rre_rhs(net, np.maximum(rho, 0.0))

    solution = solve_ivp(
        rhs, (0.0, grid[-1]), rho0, method=method, t_eval=grid, rtol=1e-10, atol=1e-12
    )
    if not solution.success:
        raise NumericalFailureError("reaction-rate integration failed", {"message": solution.message})
    states = solution.y.T
    if states.min() < -NEGATIVITY_LIMIT:
        raise NumericalFailureError(
            "negative concentrations beyond the projection limit",
            {"min_state": float(states.min()), "time": float(grid[np.argmin(states.min(axis=1))])},
        )
    states = np.maximum(states, 0.0)
    fluxes = reaction_rates(net, states)
    report = edp_report(
        grid,
        relative_free_energy(net, states),
        chem_R(net, states, fluxes),
        chem_Rstar_grad(net, states),
        tol,
        rule,
    )
    logger.debug("RRE with %d species: I_T = %.3e", net.size, report.I_T)
    return ReactionTrajectory(times=grid, states=states, fluxes=fluxes), report
