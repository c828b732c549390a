"""Experiment kinds runnable from a config file.

Each kind is a function ``f(context, params)`` registered with
:func:`experiment`, which validates the config ``parameters`` against the
kind's pydantic model before the function runs. Experiments return their
tables and reports in memory; :class:`~coshflows.runner.ExperimentRunner`
writes them.
"""

import logging
from functools import wraps
from typing import Annotated, Any, Callable, Literal, Type

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from coshflows.config import ExperimentConfig
from coshflows.cosh_core import cosh_dual
from coshflows.dissipation import QuadratureRule, edp_functional, ldp_rate
from coshflows.errors import InvalidArgumentError
from coshflows.fokker_planck import FVProblem, fv_evolve, saddle_plateau_tilt, sg_flux, upwind_flux
from coshflows.graph_system import (
    MarkovGraph,
    Trajectory,
    activity_split,
    check_detailed_balance,
    evolve,
    integrate_continuity,
    random_admissible_trajectory,
)
from coshflows.kramers import kramers_constants, kramers_experiment
from coshflows.membrane import membrane_experiment, membrane_sigma
from coshflows.network_reduction import (
    TwoTerminalNetwork,
    capacity,
    chain_network,
    epsilon_convergence,
    limit_two_state,
    n_chain_conductance,
    reduce_to_capacity,
)
from coshflows.particles import gillespie
from coshflows.reaction_networks import conserved_basis, evolve_rre
from coshflows.schemas import GraphSpec, KramersSpec, MembraneSpec, PotentialSpec, ReactionSpec
from coshflows.sweeps import Deadline, ErrorTable, run_sweep
from coshflows.tilting import (
    ChemicalRule,
    MetropolisRule,
    ProductABRule,
    SymmetricRule,
    Tilt,
    detilt_quadratic,
    tilt_independence_check,
    tilt_kernel,
)

logger = logging.getLogger(__name__)


class RunContext(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    deadline: Deadline
    threads: int | None = None


class ExperimentResult(BaseModel):
    """Tables (written as CSV) and reports (written as JSON), keyed by file name."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    tables: dict[str, ErrorTable] = {}
    reports: dict[str, Any] = {}

    def runtimes(self) -> dict[str, list[float]]:
        return {name: list(table.runtimes) for name, table in self.tables.items() if table.runtimes}


Experiment = Callable[[RunContext], ExperimentResult]

EXPERIMENTS: dict[str, Experiment] = {}


def experiment(kind: str, params: Type[BaseModel]) -> Callable:
    """Register an experiment kind and validate its parameters on every call.

    Parameters
    ----------
    kind : str
        The ``kind`` value of the config files that select this experiment.
    params : Type[BaseModel]
        Model the config ``parameters`` are validated against.

    Returns
    -------
    Callable
        A decorator turning ``f(context, params)`` into ``f(context)``.
    """

    def decorator(f: Callable[[RunContext, BaseModel], ExperimentResult]) -> Experiment:
        @wraps(f)
        def wrapper(context: RunContext) -> ExperimentResult:
            validated = params.model_validate(context.config.parameters)
            logger.debug("running %s with %r", kind, validated)
            return f(context, validated)

        wrapper.params_model = params
        EXPERIMENTS[kind] = wrapper
        return wrapper

    return decorator


def get_experiment(kind: str) -> Experiment:
    try:
        return EXPERIMENTS[kind]
    except KeyError:
        raise InvalidArgumentError(f"no experiment registered for kind {kind!r}") from None


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _strictly_decreasing(values: list[float]) -> list[float]:
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError("values must be strictly decreasing")
    return values


Decreasing = Annotated[list[PositiveFloat], AfterValidator(_strictly_decreasing)]


def _initial_state(rho0: list[float] | None, size: int) -> np.ndarray:
    if rho0 is None:
        state = np.zeros(size)
        state[0] = 1.0
        return state
    state = np.asarray(rho0, dtype=float)
    if state.shape != (size,):
        raise InvalidArgumentError(f"rho0 must have {size} entries")
    return state


def _vector(values: list[float] | None, size: int, name: str) -> np.ndarray | None:
    if values is None:
        return None
    vector = np.asarray(values, dtype=float)
    if vector.shape != (size,):
        raise InvalidArgumentError(f"{name} must have {size} entries")
    return vector


def _state_table(times, states, labels) -> ErrorTable:
    rows = tuple(
        (float(t), *(float(value) for value in state)) for t, state in zip(times, states)
    )
    return ErrorTable(columns=("t", *labels), rows=rows)


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


class EvolveParams(_Params):
    T: PositiveFloat
    n_output: int = Field(101, ge=2)
    rho0: list[float] | None = None


@experiment("evolve", EvolveParams)
def run_evolve(context: RunContext, params: EvolveParams) -> ExperimentResult:
    g = context.config.load_input("graph", GraphSpec).to_graph()
    rho0 = _initial_state(params.rho0, g.size)
    grid = np.linspace(0.0, params.T, params.n_output)
    traj = evolve(g, rho0, params.T, grid, with_fluxes=False)
    report = {"nodes": list(g.nodes), "final_state": traj.states[-1].tolist(), "mass": traj.mass}
    return ExperimentResult(
        tables={"trajectory.csv": _state_table(traj.times, traj.states, g.nodes)},
        reports={"evolve.json": report},
    )


class EDPParams(_Params):
    T: PositiveFloat = 1.0
    dt_list: Decreasing = [1e-2, 1e-3, 1e-4]
    rule: QuadratureRule = "trapezoid"
    rho0: list[float] | None = None
    F: list[float] | None = None
    tol: PositiveFloat = 1e-5
    n_random: int = Field(100, ge=0)
    perturbation: float = Field(0.5, gt=0.0, lt=1.0)


def _random_edp_values(
    context: RunContext, g: MarkovGraph, tilt, grid, params: EDPParams
) -> list[float]:
    rng = np.random.default_rng(context.config.seed)
    values = []
    for k in range(params.n_random):
        if k % 10 == 0:
            context.deadline.check(f"before random trajectory {k}")
        traj = random_admissible_trajectory(g, rng.dirichlet(np.ones(g.size)), grid, rng)
        values.append(edp_functional(g, tilt, traj, tol=params.tol, rule=params.rule).I_T)
    return values


def _perturbed_edp_value(
    g: MarkovGraph, tilt, solution: Trajectory, params: EDPParams
) -> float:
    fluxes = (1.0 - params.perturbation) * solution.fluxes
    states = integrate_continuity(solution.times, solution.states[0], fluxes)
    if np.any(states < 0):
        raise InvalidArgumentError("perturbed trajectory has negative states")
    traj = Trajectory(times=solution.times, states=states, fluxes=fluxes)
    return edp_functional(g, tilt, traj, tol=params.tol, rule=params.rule).I_T


@experiment("edp", EDPParams)
def run_edp(context: RunContext, params: EDPParams) -> ExperimentResult:
    g = context.config.load_input("graph", GraphSpec).to_graph()
    rho0 = _initial_state(params.rho0, g.size)
    F = _vector(params.F, g.size, "F")
    tilt = None if F is None else Tilt(F=F)
    dynamics = g if tilt is None else tilt_kernel(g, tilt)

    def grid_for(dt: float) -> np.ndarray:
        steps = max(1, int(round(params.T / dt)))
        return np.linspace(0.0, params.T, steps + 1)

    def sweep_point(dt: float):
        traj = evolve(dynamics, rho0, params.T, grid_for(dt))
        return edp_functional(g, tilt, traj, tol=params.tol, rule=params.rule)

    results = run_sweep(sweep_point, params.dt_list, context.threads, context.deadline)
    reports = [report for report, _ in results]
    table = ErrorTable(
        columns=("dt", "I_T", "integral_R", "integral_Rstar", "energy_start", "energy_end"),
        rows=tuple(
            (dt, r.I_T, r.integral_R, r.integral_Rstar, r.energy_start, r.energy_end)
            for dt, r in zip(params.dt_list, reports)
        ),
        runtimes=tuple(runtime for _, runtime in results),
    )
    measured = _loglog_slope(params.dt_list, [r.I_T for r in reports])
    expected = reports[0].expected_order
    coarse = grid_for(params.dt_list[0])
    random_values = _random_edp_values(context, g, tilt, coarse, params)
    solution = evolve(dynamics, rho0, params.T, coarse)
    summary = {
        "rule": params.rule,
        "expected_order": expected,
        "measured_order": measured,
        "order_ratio": measured / expected,
        "n_random": params.n_random,
        "min_I_T": min(random_values) if random_values else None,
        "perturbation": params.perturbation,
        "perturbed_I_T": _perturbed_edp_value(g, tilt, solution, params),
    }
    return ExperimentResult(tables={"edp.csv": table}, reports={"edp_report.json": summary})


_RULES = {
    "symmetric": SymmetricRule,
    "chemical": ChemicalRule,
    "product_ab": ProductABRule,
    "metropolis": MetropolisRule,
}


class TiltParams(_Params):
    F: list[float] | None = None
    rules: list[Literal["symmetric", "chemical", "product_ab", "metropolis"]] = list(_RULES)
    n_samples: PositiveInt = 100
    T: PositiveFloat = 1.0


@experiment("tilt", TiltParams)
def run_tilt(context: RunContext, params: TiltParams) -> ExperimentResult:
    g = context.config.load_input("graph", GraphSpec).to_graph()
    rng = np.random.default_rng(context.config.seed)
    F = _vector(params.F, g.size, "F")
    if F is None:
        F = rng.normal(size=g.size)
    activity, _ = activity_split(g)
    rows = []
    for name in params.rules:
        context.deadline.check(f"before tilt rule {name}")
        rule = _RULES[name]()
        tilted = tilt_kernel(g, Tilt(F=F, rule=rule))
        balance = check_detailed_balance(tilted)
        tilted_activity, _ = activity_split(tilted)
        report = tilt_independence_check(g, rule, params.n_samples, context.config.seed, params.T)
        rows.append(
            (
                name,
                balance.residual,
                float(np.max(np.abs(tilted_activity - activity))),
                report.shift_invariant,
                report.monotone,
                report.max_shift_residual,
                report.max_monotone_violation,
                float("nan") if report.evolution_sup_error is None else report.evolution_sup_error,
            )
        )
    table = ErrorTable(
        columns=(
            "rule",
            "db_residual",
            "activity_change",
            "shift_invariant",
            "monotone",
            "max_shift_residual",
            "max_monotone_violation",
            "evolution_sup_error",
        ),
        rows=tuple(rows),
    )

    rho = rng.dirichlet(np.ones(g.size))
    Xi = rng.uniform(-2.0, 2.0, size=(g.size, g.size))
    Xi = Xi - Xi.T
    detilted = detilt_quadratic(g, F, rho, Xi)
    cosh_form = 0.5 * activity * np.sqrt(np.outer(rho, rho)) * np.asarray(cosh_dual(Xi))
    detilt_report = {
        "max_deviation_from_cosh": float(np.max(np.abs(detilted.dual_dissipation - cosh_form))),
        "quadrature_error": detilted.quadrature_error,
    }
    return ExperimentResult(tables={"tilt.csv": table}, reports={"detilt.json": detilt_report})


def _chain_rates(network: TwoTerminalNetwork) -> np.ndarray | None:
    """Rates of a uniform-π path listed in node order from terminal a to b, else None."""
    g = network.graph
    n = g.size
    kappa = np.asarray(g.kappa)
    path = np.zeros_like(kappa, dtype=bool)
    index = np.arange(n - 1)
    path[index, index + 1] = path[index + 1, index] = True
    if (kappa > 0).tolist() != path.tolist() or not np.allclose(g.pi, g.pi[0]):
        return None
    if (network.a, network.b) != (0, n - 1):
        return None
    return kappa[index, index + 1]


class ReduceParams(_Params):
    F: list[float] | None = None
    n_orders: PositiveInt = 3
    eps_list: Decreasing | None = None
    T: PositiveFloat = 5.0
    n_output: int = Field(201, ge=2)
    rho0: list[float] | None = None


@experiment("reduce", ReduceParams)
def run_reduce(context: RunContext, params: ReduceParams) -> ExperimentResult:
    network = context.config.load_input("network", GraphSpec).to_network()
    F = _vector(params.F, network.graph.size, "F")
    result = capacity(network, F)
    rows = [("dirichlet", result.capacity)]
    rng = np.random.default_rng(context.config.seed)
    fast_ids = [network.graph.nodes[x] for x in network.fast]
    for i in range(params.n_orders):
        order = [fast_ids[j] for j in rng.permutation(len(fast_ids))]
        rows.append((f"elimination_{i}", reduce_to_capacity(network, F, order)))
    rates = _chain_rates(network)
    if rates is not None:
        rows.append(("literal_k_chain", n_chain_conductance(rates, F).literal_k_chain))
    tables = {"capacity.csv": ErrorTable(columns=("method", "capacity"), rows=tuple(rows))}
    reports = {
        "capacity.json": {
            "capacity": result.capacity,
            "residual": result.residual,
            "terminals_connected": result.terminals_connected,
            "harmonic_potential": result.harmonic_potential.tolist(),
        }
    }
    if params.eps_list:
        rho0 = _initial_state(params.rho0, network.graph.size)
        grid = np.linspace(0.0, params.T, params.n_output)
        table = epsilon_convergence(
            network, F, rho0, params.T, params.eps_list, grid, context.threads, context.deadline
        )
        tables["eps.csv"] = table
        reports["eps_report.json"] = {
            "loglog_slope": _loglog_slope(table.column("eps"), table.column("sup_error"))
        }
    return ExperimentResult(tables=tables, reports=reports)


class ChainParams(_Params):
    kappas: list[PositiveFloat]
    F: list[float] | None = None
    eps_list: Decreasing = [1e-1, 1e-2, 1e-3]
    T: PositiveFloat = 5.0
    n_output: int = Field(201, ge=2)


@experiment("chain", ChainParams)
def run_chain(context: RunContext, params: ChainParams) -> ExperimentResult:
    network = chain_network(params.kappas)
    F = _vector(params.F, network.graph.size, "F")
    conductance = n_chain_conductance(params.kappas, F)
    untilted = capacity(network).capacity
    limit = limit_two_state(network, F)
    summary = ErrorTable(
        columns=("capacity", "literal_k_chain", "capacity_untilted", "predicted_rate_factor"),
        rows=((conductance.capacity, conductance.literal_k_chain, untilted, conductance.capacity / untilted),),
    )
    rho0 = _initial_state(None, network.graph.size)
    grid = np.linspace(0.0, params.T, params.n_output)
    table = epsilon_convergence(
        network, F, rho0, params.T, params.eps_list, grid, context.threads, context.deadline
    )
    report = {
        "loglog_slope": _loglog_slope(table.column("eps"), table.column("sup_error")),
        "limit_rates": [float(limit.graph.kappa[0, 1]), float(limit.graph.kappa[1, 0])],
    }
    return ExperimentResult(
        tables={"chain.csv": summary, "eps.csv": table}, reports={"chain_report.json": report}
    )


class KramersParams(_Params):
    eps_list: Decreasing = [0.1, 0.05]
    T: PositiveFloat = 2.0
    n_cells: int = Field(2000, ge=10)
    n_steps: PositiveInt = 400
    saddle_tilt: float | None = None


@experiment("kramers", KramersParams)
def run_kramers(context: RunContext, params: KramersParams) -> ExperimentResult:
    setup = context.config.load_input("setup", KramersSpec).to_setup()
    if params.saddle_tilt is not None:
        setup = setup.model_copy(update={"F": saddle_plateau_tilt(params.saddle_tilt, center=setup.c)})
    table = kramers_experiment(
        setup,
        params.eps_list,
        params.T,
        n_cells=params.n_cells,
        n_steps=params.n_steps,
        threads=context.threads,
        deadline=context.deadline,
    )
    constants = {
        repr(eps): kramers_constants(setup.with_eps(eps)).model_dump() for eps in params.eps_list
    }
    return ExperimentResult(tables={"kramers.csv": table}, reports={"kramers_constants.json": constants})


class MembraneParams(_Params):
    eps_list: Decreasing = [0.1, 0.02]
    T: PositiveFloat = 0.5
    n_bulk: int = Field(100, ge=2)
    n_membrane: PositiveInt = 20
    n_steps: PositiveInt = 400
    rho0: PotentialSpec = PotentialSpec(name="linear", params={"slope": -0.5, "offset": 1.25})


@experiment("membrane", MembraneParams)
def run_membrane(context: RunContext, params: MembraneParams) -> ExperimentResult:
    setup = context.config.load_input("setup", MembraneSpec).to_setup()
    table, fit = membrane_experiment(
        setup,
        params.eps_list,
        params.T,
        rho0=params.rho0.to_callable(),
        n_bulk=params.n_bulk,
        n_membrane=params.n_membrane,
        n_steps=params.n_steps,
        threads=context.threads,
        deadline=context.deadline,
    )
    report = fit.model_dump()
    report["sigma_unit_densities"] = membrane_sigma(setup, 1.0, 1.0)
    return ExperimentResult(tables={"membrane.csv": table}, reports={"membrane_fit.json": report})


class FVParams(_Params):
    potential: PotentialSpec = PotentialSpec(name="quartic_double_well")
    domain: tuple[float, float] = (-1.5, 1.5)
    n_cells: int = Field(50, ge=3)
    gammas: Decreasing = [1e-1, 1e-2, 1e-3]
    n_random: PositiveInt = 20
    scheme_gamma: PositiveFloat = 1.0
    T: PositiveFloat = 0.1
    n_steps: PositiveInt = 50


@experiment("fv", FVParams)
def run_fv(context: RunContext, params: FVParams) -> ExperimentResult:
    rng = np.random.default_rng(context.config.seed)
    u = rng.uniform(0.1, 2.0, size=(2, 1000))
    Xi = rng.uniform(-2.0, 2.0, size=1000)
    upwind = upwind_flux(1.0, u[0], u[1], Xi)
    deviation = ErrorTable(
        columns=("gamma", "max_deviation"),
        rows=tuple(
            (gamma, float(np.max(np.abs(sg_flux(1.0, gamma, u[0], u[1], Xi) - upwind))))
            for gamma in params.gammas
        ),
    )

    potential = params.potential.to_callable()
    lo, hi = params.domain
    starts = rng.dirichlet(np.ones(params.n_cells), size=params.n_random)
    rows = []
    for scheme in ("SG", "Upwind", "CoshSqrt"):
        context.deadline.check(f"before scheme {scheme}")
        p = FVProblem.uniform(
            lo, hi, params.n_cells, potential, gamma=params.scheme_gamma, scheme=scheme
        )
        energy_increase = -np.inf
        mass_drift = 0.0
        for rho0 in starts:
            solution = fv_evolve(p, rho0, params.T, params.n_steps)
            energy_increase = max(energy_increase, float(np.max(np.diff(solution.energies))))
            steps = np.abs(np.diff(solution.states.sum(axis=1)))
            mass_drift = max(mass_drift, float(steps.max()))
        rows.append((scheme, energy_increase, mass_drift))
    schemes = ErrorTable(columns=("scheme", "max_energy_increase", "max_mass_drift_per_step"), rows=tuple(rows))
    return ExperimentResult(
        tables={"fv_upwind_limit.csv": deviation, "fv_schemes.csv": schemes},
        reports={"fv_report.json": {"upwind_slope": _loglog_slope(params.gammas, deviation.column("max_deviation"))}},
    )


class RREParams(_Params):
    T: PositiveFloat = 10.0
    n_output: int = Field(201, ge=2)
    rho0: list[float] | None = None
    tol: PositiveFloat = 1e-5
    rule: QuadratureRule = "trapezoid"


@experiment("rre", RREParams)
def run_rre(context: RunContext, params: RREParams) -> ExperimentResult:
    net = context.config.load_input("network", ReactionSpec).to_network()
    rho0 = np.ones(net.size) if params.rho0 is None else _initial_state(params.rho0, net.size)
    grid = np.linspace(0.0, params.T, params.n_output)
    traj, report = evolve_rre(net, rho0, params.T, grid, params.tol, params.rule)
    charges = conserved_basis(net)
    values = charges.values(traj.states)
    summary = {
        "edp": report.model_dump(),
        "conserved_drift": float(np.max(np.abs(values - values[0]))) if values.size else 0.0,
        "final_state": traj.states[-1].tolist(),
    }
    return ExperimentResult(
        tables={"rre.csv": _state_table(traj.times, traj.states, net.species)},
        reports={"rre_report.json": summary},
    )


class GillespieParams(_Params):
    n_particles: PositiveInt = 10_000
    T: PositiveFloat = 100.0
    n_output: int = Field(101, ge=2)
    rho0: list[float] | None = None
    perturbation: float = Field(0.5, gt=0.0, lt=1.0)


@experiment("gillespie", GillespieParams)
def run_gillespie(context: RunContext, params: GillespieParams) -> ExperimentResult:
    g: MarkovGraph = context.config.load_input("graph", GraphSpec).to_graph()
    rho0 = None if params.rho0 is None else _initial_state(params.rho0, g.size)
    grid = np.linspace(0.0, params.T, params.n_output)
    run = gillespie(g, params.n_particles, params.T, context.config.seed, rho0, grid)
    empirical = run.empirical_measure()
    final = empirical[-1]
    sd = np.sqrt(g.pi * (1.0 - g.pi) / params.n_particles)
    z = np.where(sd > 0, (final - g.pi) / np.where(sd > 0, sd, 1.0), 0.0)
    one_way = run.one_way_flux_path()
    slowed = (1.0 - params.perturbation) * one_way
    # clip round-off below zero on nodes that stay empty
    slowed_states = np.maximum(integrate_continuity(grid, empirical[0], slowed), 0.0)
    report = {
        "final_empirical": final.tolist(),
        "pi": g.pi.tolist(),
        "z_scores": z.tolist(),
        "within_3_sigma": bool(np.all(np.abs(z) <= 3.0)),
        "n_events": run.n_events,
        "mean_one_way_flux": run.mean_one_way_flux().tolist(),
        "equilibrium_flux": g.equilibrium_flux().tolist(),
        "ldp_rate_empirical": ldp_rate(g, grid, empirical, one_way),
        "perturbation": params.perturbation,
        "ldp_rate_perturbed": ldp_rate(g, grid, slowed_states, slowed),
    }
    return ExperimentResult(
        tables={"gillespie.csv": _state_table(run.times, empirical, g.nodes)},
        reports={"gillespie_report.json": report},
    )
