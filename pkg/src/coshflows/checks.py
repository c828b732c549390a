"""Invariant suite run by ``coshflows check``.

Every check samples its inputs from a seeded generator and compares an
implementation against an independent oracle.
"""

import logging
import time
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize_scalar

from coshflows.cell_problem import CellProblem, cell_N_variational, parallel_infimum, series_infimum
from coshflows.cosh_core import (
    cell_N_explicit,
    cosh_dual,
    cosh_dual_prime,
    cosh_primal,
    cosh_primal_prime,
    eta,
    hellinger_form,
    parallel_combine,
    rate_density_L,
    series_combine,
)
from coshflows.dissipation import edp_functional
from coshflows.graph_system import MarkovGraph, check_detailed_balance, random_admissible_trajectory
from coshflows.network_reduction import TwoTerminalNetwork, capacity, reduce_to_capacity
from coshflows.tilting import (
    ChemicalRule,
    MetropolisRule,
    ProductABRule,
    SymmetricRule,
    Tilt,
    tilt_kernel,
)

logger = logging.getLogger(__name__)


class CheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    worst: float
    tolerance: float
    runtime_s: float = 0.0
    detail: str = ""


Check = Callable[[np.random.Generator], CheckResult]

CHECKS: list[Check] = []


def check(f: Check) -> Check:
    CHECKS.append(f)
    return f


def _result(name: str, worst: float, tolerance: float, detail: str = "") -> CheckResult:
    return CheckResult(
        name=name, passed=bool(worst <= tolerance), worst=float(worst), tolerance=tolerance, detail=detail
    )


@check
def legendre_duality(rng: np.random.Generator) -> CheckResult:
    xi = rng.uniform(-20.0, 20.0, 10_000)
    s = np.asarray(cosh_dual_prime(xi))
    # sup_s (sξ − 𝖢(s)) is attained at s = (𝖢*)′(ξ)
    gap = np.abs(s * xi - np.asarray(cosh_primal(s)) - np.asarray(cosh_dual(xi)))
    relative = gap / np.maximum(1.0, np.asarray(cosh_dual(xi)))
    return _result("legendre duality", float(relative.max()), 1e-10)


@check
def derivative_inversion(rng: np.random.Generator) -> CheckResult:
    xi = rng.uniform(-20.0, 20.0, 10_000)
    back = np.asarray(cosh_primal_prime(cosh_dual_prime(xi)))
    return _result("derivative inversion", float(np.max(np.abs(back - xi))), 1e-10)


@check
def hellinger_identity(rng: np.random.Generator) -> CheckResult:
    p, q = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), size=(2, 10_000)))
    lhs = np.sqrt(p * q) * np.asarray(cosh_dual(np.log(p) - np.log(q)))
    rhs = np.asarray(hellinger_form(p, q))
    relative = np.abs(lhs - rhs) / np.maximum(rhs, np.finfo(float).tiny)
    return _result("hellinger identity", float(relative.max()), 1e-10)


def brute_force_L(j: float, alpha: float, beta: float, k: float) -> float:
    """inf{η(a|αk) + η(b|βk) : b − a = 2j} by a bounded search over a."""
    lo = max(0.0, -2.0 * j)
    hi = lo + 2.0 * abs(j) + 2.0 * k * np.sqrt(alpha * beta) + 1.0
    result = minimize_scalar(
        lambda a: float(eta(a, alpha * k) + eta(a + 2.0 * j, beta * k)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-13},
    )
    return float(result.fun)


@check
def contraction_oracle(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(1000):
        j = rng.uniform(-3.0, 3.0)
        alpha, beta, k = rng.uniform(0.1, 3.0, size=3)
        closed = float(rate_density_L(j, alpha, beta, k))
        worst = max(worst, abs(closed - brute_force_L(j, alpha, beta, k)))
    return _result("contraction oracle", worst, 1e-8)


@check
def cell_convergence(rng: np.random.Generator) -> CheckResult:
    j, alpha, beta = 0.7, 0.8, 1.6
    problems = [
        CellProblem(flux=j, alpha=alpha, beta=beta, breakpoints=(0.5,), values=(1.0, 3.0), grid_points=n)
        for n in (100, 200, 400, 1000)
    ]
    exact = float(cell_N_explicit(j, alpha, beta, problems[0].harmonic_mean()))
    errors = [abs(cell_N_variational(p) - exact) / abs(exact) for p in problems]
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    worst = errors[-1] if monotone else np.inf
    return _result("cell formula convergence", worst, 1e-3, f"errors {errors}")


@check
def series_and_parallel_laws(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(10):
        j = rng.uniform(-1.0, 1.0)
        alpha, beta, k1, k2 = rng.uniform(0.5, 2.0, size=4)
        series, _ = series_infimum(j, alpha, beta, k1, k2)
        target = float(cell_N_explicit(j, alpha, beta, series_combine(k1, k2)))
        worst = max(worst, abs(series - target))
        ks = rng.uniform(0.5, 2.0, size=3)
        parallel, _ = parallel_infimum(j, alpha, beta, ks)
        target = float(cell_N_explicit(j, alpha, beta, parallel_combine(ks)))
        worst = max(worst, abs(parallel - target))
    return _result("series and parallel laws", worst, 1e-6)


def random_graph(rng: np.random.Generator, n_nodes: int, density: float = 0.5) -> MarkovGraph:
    """Connected detailed-balance graph built from symmetric conductances."""
    pi = rng.uniform(0.5, 1.5, n_nodes)
    pi /= pi.sum()
    conductance = np.zeros((n_nodes, n_nodes))
    for x in range(n_nodes):
        for y in range(x + 1, n_nodes):
            if y == x + 1 or rng.random() < density:
                conductance[x, y] = conductance[y, x] = rng.uniform(0.1, 2.0)
    return MarkovGraph.build([f"n{i}" for i in range(n_nodes)], conductance / pi[:, None], pi)


@check
def tilt_detailed_balance(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    worst_rule = ""
    for rule in (SymmetricRule(), ChemicalRule(), ProductABRule(), MetropolisRule()):
        for _ in range(10):
            g = random_graph(rng, int(rng.integers(2, 8)))
            tilted = tilt_kernel(g, Tilt(F=rng.normal(scale=2.0, size=g.size), rule=rule))
            residual = check_detailed_balance(tilted).residual
            if residual > worst:
                worst = residual
                worst_rule = rule.kind
    return _result("tilt detailed balance", worst, 1e-10, worst_rule)


@check
def capacity_vs_elimination(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(50):
        g = random_graph(rng, int(rng.integers(3, 21)), density=0.3)
        network = TwoTerminalNetwork(graph=g, terminal_a=g.nodes[0], terminal_b=g.nodes[-1])
        reference = capacity(network).capacity
        fast = [g.nodes[x] for x in network.fast]
        for _ in range(3):
            order = [fast[i] for i in rng.permutation(len(fast))]
            value = reduce_to_capacity(network, order=order)
            worst = max(worst, abs(value - reference) / reference)
    return _result("capacity vs star-mesh elimination", worst, 1e-9)


@check
def edp_chain_rule(rng: np.random.Generator) -> CheckResult:
    times = np.linspace(0.0, 1.0, 101)
    lowest = np.inf
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(2, 8)))
        traj = random_admissible_trajectory(g, rng.dirichlet(np.ones(g.size)), times, rng)
        lowest = min(lowest, edp_functional(g, None, traj).I_T)
    return _result("EDP chain rule on random trajectories", max(-lowest, 0.0), 1e-9)


def run_checks(seed: int = 0) -> list[CheckResult]:
    """Run every registered check with generators derived from ``seed``."""
    results = []
    streams = np.random.SeedSequence(seed).spawn(len(CHECKS))
    for f, stream in zip(CHECKS, streams):
        start = time.perf_counter()
        result = f(np.random.default_rng(stream))
        result = result.model_copy(update={"runtime_s": time.perf_counter() - start})
        logger.debug("%s: worst %.3e (tolerance %.1e)", result.name, result.worst, result.tolerance)
        results.append(result)
    return results
