"""Detailed-balance jump systems on finite graphs.

A :class:`MarkovGraph` stores a double-directed rate kernel ``kappa`` and a
stationary measure ``pi``. States ``rho`` are non-negative vectors over the
nodes. Fluxes are antisymmetric matrices ``j`` with ``j[x, y]`` the net flux
from ``x`` to ``y`` (one half of the net mass transfer, as in the
skew-symmetrization of one-way fluxes).
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from coshflows.errors import (
    InvalidArgumentError,
    InvalidKernelError,
    NumericalFailureError,
)

logger = logging.getLogger(__name__)

DENSE_EXPM_LIMIT = 200
POSITIVITY_FLOOR = -1e-14


def as_readonly(value, ndim: int | None = None) -> np.ndarray:
    """Coerce ``value`` to a read-only float64 array."""
    array = np.array(value, dtype=float)
    if ndim is not None and array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {array.shape}")
    array.setflags(write=False)
    return array


def check_kernel_support(kappa: np.ndarray) -> None:
    """Raise :class:`InvalidKernelError` unless κ_xy > 0 ⇔ κ_yx > 0."""
    positive = kappa > 0
    mismatch = np.argwhere(positive != positive.T)
    if mismatch.size:
        x, y = mismatch[0]
        raise InvalidKernelError(
            f"kernel is not double-directed: kappa[{x}, {y}] = {kappa[x, y]} "
            f"but kappa[{y}, {x}] = {kappa[y, x]}"
        )


class MarkovGraph(BaseModel):
    """A finite jump process with rates ``kappa`` and stationary measure ``pi``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nodes: tuple[str, ...]
    kappa: np.ndarray
    pi: np.ndarray

    @field_validator("kappa", mode="before")
    @classmethod
    def _coerce_kappa(cls, value) -> np.ndarray:
        return as_readonly(value, ndim=2)

    @field_validator("pi", mode="before")
    @classmethod
    def _coerce_pi(cls, value) -> np.ndarray:
        return as_readonly(value, ndim=1)

    @model_validator(mode="after")
    def _check_invariants(self) -> "MarkovGraph":
        n = len(self.nodes)
        if len(set(self.nodes)) != n:
            raise ValueError("node ids must be unique")
        if self.kappa.shape != (n, n) or self.pi.shape != (n,):
            raise ValueError(
                f"shape mismatch: {n} nodes, kappa {self.kappa.shape}, pi {self.pi.shape}"
            )
        if np.any(self.kappa < 0) or not np.all(np.isfinite(self.kappa)):
            raise ValueError("rates must be finite and non-negative")
        if np.any(np.diag(self.kappa) != 0):
            raise ValueError("the diagonal of kappa must be zero")
        if np.any(self.pi <= 0):
            raise ValueError("pi must be strictly positive")
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise ValueError(f"pi must sum to 1, got {self.pi.sum()!r}")
        check_kernel_support(self.kappa)
        if n > 1:
            count, _ = connected_components(csr_matrix(self.kappa > 0), directed=False)
            if count > 1:
                logger.warning("positive-rate graph has %d components", count)
        return self

    @classmethod
    def build(cls, nodes, kappa, pi) -> "MarkovGraph":
        """Construct a graph, normalizing ``pi`` to a probability vector."""
        pi = np.asarray(pi, dtype=float)
        return cls(nodes=tuple(str(x) for x in nodes), kappa=kappa, pi=pi / pi.sum())

    @property
    def size(self) -> int:
        return len(self.nodes)

    def index(self, node: str) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise InvalidArgumentError(f"unknown node {node!r}") from None

    def edges(self) -> list[tuple[int, int]]:
        """Unordered pairs ``x < y`` with positive rates."""
        xs, ys = np.nonzero(np.triu(self.kappa > 0))
        return list(zip(xs.tolist(), ys.tolist()))

    def activity(self) -> np.ndarray:
        """𝒌_xy = √(κ_xy κ_yx)."""
        return np.sqrt(self.kappa * self.kappa.T)

    def equilibrium_flux(self) -> np.ndarray:
        """k_xy = π_x κ_xy."""
        return self.pi[:, None] * self.kappa


class DetailedBalanceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    holds: bool
    residual: float
    worst_pair: tuple[str, str] | None


def check_detailed_balance(g: MarkovGraph, tol: float = 1e-10) -> DetailedBalanceReport:
    """Check π_x κ_xy = π_y κ_yx in relative terms over all positive pairs."""
    flow = g.equilibrium_flux()
    total = flow + flow.T
    with np.errstate(invalid="ignore", divide="ignore"):
        relative = np.where(total > 0, np.abs(flow - flow.T) / total, 0.0)
    if not np.any(total > 0):
        return DetailedBalanceReport(holds=True, residual=0.0, worst_pair=None)
    x, y = np.unravel_index(np.argmax(relative), relative.shape)
    residual = float(relative[x, y])
    return DetailedBalanceReport(
        holds=residual <= tol,
        residual=residual,
        worst_pair=(g.nodes[x], g.nodes[y]),
    )


def activity_split(g: MarkovGraph) -> tuple[np.ndarray, np.ndarray]:
    """Split rates into activity a_xy = √(κ_xyκ_yx) and s_xy = log(κ_xy/κ_yx).

    κ_xy = a_xy e^{s_xy/2}; on non-edges both parts are zero.
    """
    kappa = np.asarray(g.kappa)
    check_kernel_support(kappa)
    positive = kappa > 0
    safe = np.where(positive, kappa, 1.0)
    a = np.sqrt(kappa * kappa.T)
    s = np.where(positive, np.log(safe) - np.log(safe.T), 0.0)
    return a, s


def generator(g: MarkovGraph) -> np.ndarray:
    """Matrix A of the master equation dρ/dt = Aρ."""
    kappa = np.asarray(g.kappa)
    return kappa.T - np.diag(kappa.sum(axis=1))


def master_flux(g: MarkovGraph, rho) -> np.ndarray:
    """Net flux j_xy = (ρ_xκ_xy − ρ_yκ_yx)/2; broadcasts over leading axes of rho."""
    rho = np.asarray(rho, dtype=float)
    one_way = rho[..., :, None] * g.kappa
    return 0.5 * (one_way - np.swapaxes(one_way, -1, -2))


def divergence(j) -> np.ndarray:
    """Graph divergence (div j)_x = Σ_y (j_xy − j_yx)."""
    j = np.asarray(j, dtype=float)
    return j.sum(axis=-1) - j.sum(axis=-2)


def energy_force(g: MarkovGraph, rho, F=None) -> np.ndarray:
    """Ξ = −∇̄D(ℋ(·|π) + ⟨F,·⟩), i.e. Ξ_xy = (log u_x + F_x) − (log u_y + F_y)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise InvalidArgumentError("energy_force needs a strictly positive state")
    potential = np.log(rho / g.pi)
    if F is not None:
        potential = potential + np.asarray(F, dtype=float)
    return potential[..., :, None] - potential[..., None, :]


def kinetic_relation(g: MarkovGraph, rho, Xi) -> np.ndarray:
    """Cosh kinetic relation j_xy = 𝒌_xy √(ρ_xρ_y) sinh(Ξ_xy/2)."""
    rho = np.asarray(rho, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    if np.any(rho < 0):
        raise InvalidArgumentError("states must be non-negative")
    geometric = np.sqrt(rho[..., :, None] * rho[..., None, :])
    return g.activity() * geometric * np.sinh(Xi / 2.0)


def single_edge_view(g: MarkovGraph, rho) -> tuple[list[tuple[str, str]], np.ndarray]:
    """Unordered edges with σ̄ = σ_xy + σ_yx = 𝒌_xy √(ρ_xρ_y)."""
    rho = np.asarray(rho, dtype=float)
    pairs = g.edges()
    activity = g.activity()
    sigma_bar = np.array([activity[x, y] * np.sqrt(rho[x] * rho[y]) for x, y in pairs])
    return [(g.nodes[x], g.nodes[y]) for x, y in pairs], sigma_bar


class Trajectory(BaseModel):
    """States and net fluxes on an increasing time grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray
    fluxes: np.ndarray | None = None

    @field_validator("times", "states", "fluxes", mode="before")
    @classmethod
    def _coerce(cls, value):
        return None if value is None else as_readonly(value)

    @model_validator(mode="after")
    def _check_invariants(self) -> "Trajectory":
        m = self.times.shape[0]
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be a strictly increasing grid")
        if self.states.ndim != 2 or self.states.shape[0] != m:
            raise ValueError("states must have one row per time")
        if self.fluxes is not None:
            n = self.states.shape[1]
            if self.fluxes.shape != (m, n, n):
                raise ValueError("fluxes must have shape (times, nodes, nodes)")
        mass = self.states.sum(axis=1)
        if np.max(np.abs(mass - mass[0])) > 1e-9 * max(1.0, abs(mass[0])):
            raise ValueError("trajectory does not conserve mass")
        return self

    @property
    def mass(self) -> float:
        return float(self.states[0].sum())

    def continuity_residual(self) -> float:
        """Max of |ρ_{i+1} − ρ_i + Δt_i div(½(j_i + j_{i+1}))|."""
        if self.fluxes is None:
            raise InvalidArgumentError("trajectory carries no fluxes")
        return continuity_residual(self.times, self.states, self.fluxes)


def continuity_residual(times, states, fluxes) -> float:
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    averaged = 0.5 * (fluxes[1:] + fluxes[:-1])
    change = np.diff(states, axis=0) + np.diff(times)[:, None] * divergence(averaged)
    return float(np.max(np.abs(change))) if change.size else 0.0


def integrate_continuity(times, rho0, fluxes) -> np.ndarray:
    """Re-integrate states from a flux path.

    A flux per output time is averaged over each interval with the trapezoid
    rule; a flux per interval is held constant on it.
    """
    times = np.asarray(times, dtype=float)
    fluxes = np.asarray(fluxes, dtype=float)
    if fluxes.shape[0] != times.size - 1:
        fluxes = 0.5 * (fluxes[1:] + fluxes[:-1])
    increments = -np.diff(times)[:, None] * divergence(fluxes)
    start = np.asarray(rho0, dtype=float)[None, :]
    return np.concatenate([start, start + np.cumsum(increments, axis=0)])


def random_admissible_trajectory(
    g: MarkovGraph, rho0, times, rng: np.random.Generator, spread: float = 0.5
) -> Trajectory:
    """Trajectory driven by random net fluxes that are linear in time on every edge.

    States come from :func:`integrate_continuity`, so the path satisfies the
    discrete continuity equation exactly. The fluxes are scaled so that no
    state moves by more than ``spread`` times the smallest entry of ``rho0``,
    which keeps the path strictly positive.
    """
    rho0 = _validate_state(g, rho0)
    if np.any(rho0 <= 0):
        raise InvalidArgumentError("random trajectories need a strictly positive start")
    if not 0.0 < spread < 1.0:
        raise InvalidArgumentError("spread must lie in (0, 1)")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise InvalidArgumentError("times must be an increasing grid with at least two points")
    fluxes = np.zeros((times.size, g.size, g.size))
    pairs = g.edges()
    if pairs:
        xs, ys = (np.array(side) for side in zip(*pairs))
        start, slope = rng.normal(size=(2, len(pairs)))
        s = (times - times[0]) / (times[-1] - times[0])
        values = start + slope * s[:, None]
        fluxes[:, xs, ys] = values
        fluxes[:, ys, xs] = -values
    states = integrate_continuity(times, rho0, fluxes)
    drift = float(np.max(np.abs(states - rho0)))
    if drift > 0:
        fluxes *= spread * rho0.min() / drift
        states = integrate_continuity(times, rho0, fluxes)
    return Trajectory(times=times, states=states, fluxes=fluxes)


def _validate_state(g: MarkovGraph, rho0) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != (g.size,):
        raise InvalidArgumentError(f"state must have {g.size} entries")
    if np.any(rho0 < 0):
        raise InvalidArgumentError("state must be non-negative")
    return rho0


def _output_grid(T: float, output_grid) -> np.ndarray:
    if output_grid is None:
        return np.linspace(0.0, T, 101)
    grid = np.asarray(output_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > T:
        raise InvalidArgumentError("output grid must be increasing inside [0, T]")
    return grid


def _propagate_dense(A: np.ndarray, rho0: np.ndarray, grid: np.ndarray) -> np.ndarray:
    states = np.empty((grid.size, rho0.size))
    current = expm(A * grid[0]) @ rho0 if grid[0] > 0 else rho0.copy()
    states[0] = current
    propagators: dict[float, np.ndarray] = {}
    for i, dt in enumerate(np.diff(grid), start=1):
        key = round(float(dt), 15)
        if key not in propagators:
            propagators[key] = expm(A * dt)
        current = propagators[key] @ current
        states[i] = current
    return states


def _propagate_adaptive(g: MarkovGraph, rho0: np.ndarray, grid: np.ndarray) -> np.ndarray:
    A = csr_matrix(generator(g))
    max_exit = float(np.max(np.asarray(g.kappa).sum(axis=1)))
    max_step = 0.5 / max_exit if max_exit > 0 else np.inf
    solution = solve_ivp(
        lambda _, y: A @ y,
        (0.0, grid[-1]),
        rho0,
        method="RK45",
        t_eval=grid,
        max_step=max_step,
        rtol=1e-9,
        atol=1e-13,
    )
    if not solution.success:
        raise NumericalFailureError(
            "adaptive master-equation integration failed", {"message": solution.message}
        )
    return solution.y.T


def project_positive(states: np.ndarray) -> np.ndarray:
    """Clip round-off negatives; warn when a value falls below the floor."""
    if np.any(states < POSITIVITY_FLOOR):
        logger.warning(
            "positivity projection removed %.3e of mass", -states[states < 0].sum()
        )
    return np.where(states < 0, 0.0, states)


def evolve(
    g: MarkovGraph, rho0, T: float, output_grid=None, with_fluxes: bool = True
) -> Trajectory:
    """Solve the master equation dρ/dt = Aρ on an output grid.

    Parameters
    ----------
    g : MarkovGraph
        The jump process.
    rho0 : array_like
        Non-negative initial state.
    T : float
        Positive final time.
    output_grid : array_like, optional
        Increasing output times inside [0, T]; 101 uniform points by default.
    with_fluxes : bool, optional
        Whether to store the per-time net fluxes.

    Returns
    -------
    Trajectory
        States (and fluxes) at the output times.
    """
    if T <= 0:
        raise InvalidArgumentError("final time T must be positive")
    rho0 = _validate_state(g, rho0)
    grid = _output_grid(T, output_grid)
    if g.size <= DENSE_EXPM_LIMIT:
        states = _propagate_dense(generator(g), rho0, grid)
    else:
        logger.debug("using adaptive RK45 for %d nodes", g.size)
        states = _propagate_adaptive(g, rho0, grid)
    states = project_positive(states)
    fluxes = master_flux(g, states) if with_fluxes else None
    return Trajectory(times=grid, states=states, fluxes=fluxes)
