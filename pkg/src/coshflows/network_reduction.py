"""Reduction of two-terminal networks with fast interior nodes.

Rates out of the fast (non-terminal) nodes are scaled by 1/ε. As ε → 0 the
fast subnetwork collapses to a single edge between the terminals whose
conductance is the effective capacity of the pair conductances

    k^F_xy = π_xκ_xy/(π_a + π_b) · e^{−(F_x + F_y)/2}.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.graph_system import MarkovGraph, evolve
from coshflows.sweeps import Deadline, ErrorTable, run_sweep
from coshflows.tilting import SymmetricRule, Tilt, tilt_kernel

logger = logging.getLogger(__name__)


class TwoTerminalNetwork(BaseModel):
    """A graph with two distinguished terminal nodes; all other nodes are fast."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    graph: MarkovGraph
    terminal_a: str
    terminal_b: str

    @model_validator(mode="after")
    def _check_terminals(self) -> "TwoTerminalNetwork":
        if self.terminal_a == self.terminal_b:
            raise ValueError("terminals must be distinct")
        for node in (self.terminal_a, self.terminal_b):
            if node not in self.graph.nodes:
                raise ValueError(f"terminal {node!r} is not a node of the graph")
        if not self.terminals_connected:
            logger.warning(
                "terminals %s and %s are disconnected; capacity is 0",
                self.terminal_a,
                self.terminal_b,
            )
        return self

    @property
    def a(self) -> int:
        return self.graph.index(self.terminal_a)

    @property
    def b(self) -> int:
        return self.graph.index(self.terminal_b)

    @property
    def fast(self) -> list[int]:
        return [x for x in range(self.graph.size) if x not in (self.a, self.b)]

    @property
    def terminals_connected(self) -> bool:
        _, labels = connected_components(
            csr_matrix(np.asarray(self.graph.kappa) > 0), directed=False
        )
        return bool(labels[self.a] == labels[self.b])


class CapacityResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    capacity: float
    harmonic_potential: np.ndarray
    residual: float
    terminals_connected: bool


def _tilt_vector(n: TwoTerminalNetwork, F) -> np.ndarray:
    if F is None:
        return np.zeros(n.graph.size)
    F = np.asarray(F, dtype=float)
    if F.shape != (n.graph.size,):
        raise InvalidArgumentError(f"tilt must have {n.graph.size} entries")
    return F


def pair_conductances(n: TwoTerminalNetwork, F=None) -> np.ndarray:
    """Symmetric k^F_xy = k⁰_xy e^{−(F_x+F_y)/2} with k⁰_xy = π_xκ_xy/(π_a+π_b)."""
    F = _tilt_vector(n, F)
    pi = n.graph.pi
    k0 = n.graph.equilibrium_flux() / (pi[n.a] + pi[n.b])
    k0 = 0.5 * (k0 + k0.T)
    return k0 * np.exp(-0.5 * (F[:, None] + F[None, :]))


def scale_fast(n: TwoTerminalNetwork, eps: float) -> MarkovGraph:
    """Speed up the fast nodes: κ^ε rows × 1/ε, π^ε fast weights × ε, renormalized."""
    if not 0 < eps <= 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1], got {eps}")
    kappa = np.array(n.graph.kappa)
    weights = np.array(n.graph.pi)
    fast = n.fast
    kappa[fast] /= eps
    weights[fast] *= eps
    return MarkovGraph(nodes=n.graph.nodes, kappa=kappa, pi=weights / weights.sum())


def _solve_dirichlet(block: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(block), rhs)
    except LinAlgError:
        logger.warning("Laplacian block is not numerically SPD; using pivoted LU")
    solution = lu_solve(lu_factor(block), rhs)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if not np.all(np.isfinite(solution)) or np.max(np.abs(block @ solution - rhs)) > 1e-10 * scale:
        raise NumericalFailureError(
            "singular Laplacian block in the Dirichlet problem",
            {"condition_estimate": float(np.linalg.cond(block))},
        )
    return solution


def capacity(n: TwoTerminalNetwork, F=None) -> CapacityResult:
    """Effective capacity of the terminals by a Dirichlet solve on the fast nodes.

    Parameters
    ----------
    n : TwoTerminalNetwork
        The network.
    F : array_like, optional
        Node tilt; zero by default.

    Returns
    -------
    CapacityResult
        cap^F = ½ Σ_xy k^F_xy |h_y − h_x|² with h harmonic on the fast nodes,
        h(a) = 1 and h(b) = 0.
    """
    k = pair_conductances(n, F)
    size = n.graph.size
    laplacian = np.diag(k.sum(axis=1)) - k
    _, labels = connected_components(csr_matrix(k > 0), directed=False)
    anchored = {labels[n.a], labels[n.b]}
    active = [x for x in n.fast if labels[x] in anchored]

    h = np.zeros(size)
    h[n.a] = 1.0
    if active:
        rhs = -laplacian[np.ix_(active, [n.a])][:, 0]
        h[active] = _solve_dirichlet(laplacian[np.ix_(active, active)], rhs)

    fast = n.fast
    residual = float(np.max(np.abs((laplacian @ h)[fast]))) if fast else 0.0
    gradient = h[None, :] - h[:, None]
    value = 0.5 * float(np.sum(k * gradient**2))
    return CapacityResult(
        capacity=value,
        harmonic_potential=h,
        residual=residual,
        terminals_connected=bool(labels[n.a] == labels[n.b]),
    )


def star_mesh_eliminate(k, w: int) -> np.ndarray:
    """Eliminate node ``w``: k̂_xy = k_xy + k_xw k_yw / Σ_z k_zw.

    A node with zero star sum is removed without fill-in.
    """
    k = np.asarray(k, dtype=float)
    star = k[:, w].copy()
    total = star.sum() - star[w]
    reduced = k.copy()
    if total > 0:
        star[w] = 0.0
        reduced = reduced + np.outer(star, star) / total
        np.fill_diagonal(reduced, 0.0)
    keep = [x for x in range(k.shape[0]) if x != w]
    return reduced[np.ix_(keep, keep)]


def reduce_to_capacity(n: TwoTerminalNetwork, F=None, order=None) -> float:
    """Capacity by successive star-mesh elimination of the fast nodes.

    ``order`` is a permutation of the fast node ids; natural order by default.
    """
    fast_ids = [n.graph.nodes[x] for x in n.fast]
    if order is None:
        order = fast_ids
    elif sorted(order) != sorted(fast_ids):
        raise InvalidArgumentError("order must be a permutation of the fast nodes")
    k = pair_conductances(n, F)
    remaining = list(n.graph.nodes)
    for node in order:
        position = remaining.index(node)
        k = star_mesh_eliminate(k, position)
        remaining.pop(position)
    return float(k[0, 1])


class TwoStateLimit(BaseModel):
    """Two-state jump process between the terminals in the fast limit."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    graph: MarkovGraph
    capacity: float
    pi0: np.ndarray
    F_terminals: np.ndarray
    harmonic_potential: np.ndarray
    terminals: tuple[int, int]

    def sigma(self, rho) -> float:
        """cap^F √(u^F_a u^F_b) with u^F = (ρ/π⁰) e^F."""
        u = np.asarray(rho, dtype=float) / self.pi0 * np.exp(self.F_terminals)
        return self.capacity * float(np.sqrt(u[0] * u[1]))

    def net_flux(self, rho) -> float:
        """Mass transfer a → b per unit time, cap^F (u^F_a − u^F_b)."""
        u = np.asarray(rho, dtype=float) / self.pi0 * np.exp(self.F_terminals)
        return self.capacity * float(u[0] - u[1])

    def transfer_initial(self, rho0) -> np.ndarray:
        """Carry the mass on fast nodes to the terminal hit first."""
        rho0 = np.asarray(rho0, dtype=float)
        a, b = self.terminals
        h = self.harmonic_potential
        fast = [x for x in range(rho0.size) if x not in (a, b)]
        to_a = rho0[a] + float(np.sum(h[fast] * rho0[fast]))
        to_b = rho0[b] + float(np.sum((1.0 - h[fast]) * rho0[fast]))
        return np.array([to_a, to_b])


def limit_two_state(n: TwoTerminalNetwork, F=None) -> TwoStateLimit:
    """Limit system with ∂tρ_a = −cap^F (u^F_a − u^F_b).

    Writing the net flux as a two-state master equation gives the rates
    κ⁰_ab = cap^F e^{F_a}/π⁰_a and κ⁰_ba = cap^F e^{F_b}/π⁰_b, which are in
    detailed balance with e^{−F}π⁰.
    """
    F = _tilt_vector(n, F)
    result = capacity(n, F)
    a, b = n.a, n.b
    pi0 = np.array([n.graph.pi[a], n.graph.pi[b]])
    pi0 = pi0 / pi0.sum()
    F_terminals = np.array([F[a], F[b]])
    cap = result.capacity
    kappa = np.array(
        [[0.0, cap * np.exp(F[a]) / pi0[0]], [cap * np.exp(F[b]) / pi0[1], 0.0]]
    )
    weights = pi0 * np.exp(-(F_terminals - F_terminals.min()))
    graph = MarkovGraph(
        nodes=(n.terminal_a, n.terminal_b), kappa=kappa, pi=weights / weights.sum()
    )
    return TwoStateLimit(
        graph=graph,
        capacity=cap,
        pi0=pi0,
        F_terminals=F_terminals,
        harmonic_potential=result.harmonic_potential,
        terminals=(a, b),
    )


def epsilon_convergence(
    n: TwoTerminalNetwork,
    F,
    rho0,
    T: float,
    eps_list,
    output_grid=None,
    threads: int | None = None,
    deadline: Deadline | None = None,
) -> ErrorTable:
    """Sup-in-time terminal-marginal error of the ε-system against the limit.

    Returns
    -------
    ErrorTable
        Columns ``eps`` and ``sup_error``, one row per ε.
    """
    eps_list = [float(eps) for eps in eps_list]
    if any(later >= earlier for earlier, later in zip(eps_list, eps_list[1:])):
        raise InvalidArgumentError("eps_list must be strictly decreasing")
    F = _tilt_vector(n, F)
    rho0 = np.asarray(rho0, dtype=float)
    grid = np.linspace(0.0, T, 201) if output_grid is None else np.asarray(output_grid)
    limit = limit_two_state(n, F)
    reference = evolve(
        limit.graph, limit.transfer_initial(rho0), T, grid, with_fluxes=False
    ).states
    terminals = list(limit.terminals)

    def sweep_point(eps: float) -> float:
        graph = tilt_kernel(scale_fast(n, eps), Tilt(F=F, rule=SymmetricRule()))
        states = evolve(graph, rho0, T, grid, with_fluxes=False).states
        error = float(np.max(np.abs(states[:, terminals] - reference)))
        logger.info("eps=%g sup_error=%.3e", eps, error)
        return error

    results = run_sweep(sweep_point, eps_list, threads, deadline)
    return ErrorTable(
        columns=("eps", "sup_error"),
        rows=tuple((eps, error) for eps, (error, _) in zip(eps_list, results)),
        runtimes=tuple(runtime for _, runtime in results),
    )


def chain_network(kappas, F=None) -> TwoTerminalNetwork:
    """Uniform-π N-chain with κ_{i,i+1} = κ_{i+1,i} = kappas[i], terminals at the ends."""
    kappas = np.asarray(kappas, dtype=float)
    if kappas.ndim != 1 or kappas.size < 1 or np.any(kappas <= 0):
        raise InvalidArgumentError("chain rates must be a non-empty positive list")
    size = kappas.size + 1
    kappa = np.zeros((size, size))
    index = np.arange(kappas.size)
    kappa[index, index + 1] = kappas
    kappa[index + 1, index] = kappas
    nodes = tuple(f"n{i}" for i in range(size))
    graph = MarkovGraph(nodes=nodes, kappa=kappa, pi=np.full(size, 1.0 / size))
    return TwoTerminalNetwork(graph=graph, terminal_a=nodes[0], terminal_b=nodes[-1])


class ChainConductance(BaseModel):
    model_config = ConfigDict(frozen=True)

    capacity: float
    literal_k_chain: float


def n_chain_conductance(kappas, F=None) -> ChainConductance:
    """Effective conductance of an N-chain.

    ``capacity`` is the series combination of the pair conductances k^F
    obtained by elimination. ``literal_k_chain`` is the closed form
    2(Σ_i 1/(κ_i e^{−(F_i+F_{i+1})/2}))⁻¹; on the uniform chain the two
    differ by the factor (π_a + π_b)/(2π) hidden in k⁰, so both are reported.
    """
    network = chain_network(kappas)
    F = _tilt_vector(network, F)
    kappas = np.asarray(kappas, dtype=float)
    literal = 2.0 / float(np.sum(1.0 / (kappas * np.exp(-0.5 * (F[:-1] + F[1:])))))
    return ChainConductance(
        capacity=reduce_to_capacity(network, F), literal_k_chain=literal
    )
