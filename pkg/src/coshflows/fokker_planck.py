"""One-dimensional finite-volume Fokker–Planck schemes as cosh gradient systems.

Cells carry masses ρ_x; u = ρ/π_vol with π_vol = vol/vol(Ω). The transmission
coefficient of the face between neighbouring cells x and y is
τ_xy = a_xy/(d_xy vol(Ω)) with d_xy the distance of the cell centers. All
three schemes are linear in u, with face net flux

    J_xy = forward_xy · u_x − backward_xy · u_y,

and v_xy = V_x − V_y:

* ``SG`` (Scharfetter–Gummel): τγ[B(−v/γ)u_x − B(v/γ)u_y],
* ``CoshSqrt``: τγ(u_x e^{v/2γ} − u_y e^{−v/2γ}),
* ``Upwind``: τ(u_x v₊ − u_y v₋).

The boundary faces of the domain carry no flux.
"""

import logging
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded
from scipy.sparse import diags
from scipy.sparse.linalg import expm_multiply
from scipy.special import kl_div

from coshflows.cosh_core import _TAYLOR_SWITCH, _out, _sinhc_ratio
from coshflows.errors import InvalidArgumentError, NumericalFailureError
from coshflows.graph_system import MarkovGraph, as_readonly, project_positive

logger = logging.getLogger(__name__)

Scheme = Literal["SG", "Upwind", "CoshSqrt"]
Potential = Callable[[np.ndarray], np.ndarray]


def bernoulli(z):
    """B(z) = z/(e^z − 1) with B(0) = 1; B(z) → 0 for z → +inf and ~ −z for z → −inf."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    with np.errstate(over="ignore"):
        direct = safe / np.expm1(safe)
    return _out(np.where(small, 1.0 - z / 2.0 + z**2 / 12.0, direct))


def _log_sinh_abs(x: np.ndarray) -> np.ndarray:
    # log|sinh x| without overflow; −inf at zero
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        return ax + np.log1p(-np.exp(-2.0 * ax)) - np.log(2.0)


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value}")


def sg_flux(tau: float, gamma: float, u_x, u_y, Xi):
    """Scharfetter–Gummel kinetic relation j(u_x, u_y, Ξ).

    j = (τγ/2) Λ₋₁(u_x e^{−Ξ/2γ}, u_y e^{Ξ/2γ}) (𝖢*)′(Ξ/γ), evaluated as

        τγ √(u_x u_y) · (δ/2)/sinh(δ/2) · sinh(s),  s = Ξ/2γ,  δ = log(u_y/u_x) + 2s,

    with the sinh ratio taken in the log domain so that γ → 0 is stable. The
    flux vanishes when either density is zero.

    Parameters
    ----------
    tau, gamma : float
        Positive transmission coefficient and viscosity.
    u_x, u_y : array_like
        Non-negative densities on both sides of the face.
    Xi : array_like
        Driving force across the face.

    Returns
    -------
    float or numpy.ndarray
        Net flux (half the FV face flux, in the graph convention).
    """
    _check_positive(tau=tau, gamma=gamma)
    u_x, u_y, Xi = np.broadcast_arrays(
        np.asarray(u_x, dtype=float), np.asarray(u_y, dtype=float), np.asarray(Xi, dtype=float)
    )
    if np.any(u_x < 0) or np.any(u_y < 0):
        raise InvalidArgumentError("densities must be non-negative")
    both = (u_x > 0) & (u_y > 0)
    log_x = np.log(np.where(both, u_x, 1.0))
    log_y = np.log(np.where(both, u_y, 1.0))
    s = Xi / (2.0 * gamma)
    delta = log_y - log_x + 2.0 * s
    log_root = 0.5 * (log_x + log_y)

    small = np.abs(delta) < _TAYLOR_SWITCH
    with np.errstate(over="ignore"):
        near = np.exp(log_root) * _sinhc_ratio(delta) * np.sinh(s)
    safe_delta = np.where(small, 1.0, delta)
    with np.errstate(divide="ignore", over="ignore"):
        magnitude = np.exp(
            np.log(np.abs(safe_delta) / 2.0)
            + log_root
            + _log_sinh_abs(s)
            - _log_sinh_abs(safe_delta / 2.0)
        )
    far = np.sign(s) * np.sign(safe_delta) * magnitude
    value = tau * gamma * np.where(small, near, far)
    return _out(np.where(both, value, 0.0))


def upwind_flux(tau: float, u_x, u_y, Xi):
    """Upwind kinetic relation (τ/2)(u_x Ξ₊ − u_y Ξ₋), the γ → 0 limit of :func:`sg_flux`."""
    Xi = np.asarray(Xi, dtype=float)
    return _out(0.5 * tau * (np.asarray(u_x) * np.maximum(Xi, 0.0) - np.asarray(u_y) * np.maximum(-Xi, 0.0)))


def cosh_sqrt_flux(tau: float, gamma: float, u_x, u_y, Xi):
    """Kinetic relation of the θ(a, b) = √(ab) member: τγ√(u_x u_y) sinh(Ξ/2γ)."""
    _check_positive(tau=tau, gamma=gamma)
    root = np.sqrt(np.asarray(u_x, dtype=float) * np.asarray(u_y, dtype=float))
    with np.errstate(over="ignore"):
        return _out(tau * gamma * root * np.sinh(np.asarray(Xi, dtype=float) / (2.0 * gamma)))


class FVProblem(BaseModel):
    """Finite-volume discretization of ∂tρ = ∂_y(a(γ∂_yρ + ρ∂_yV)) with no-flux ends.

    Use :meth:`build` to evaluate potentials and mobilities given as callables.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    faces: np.ndarray
    potential: np.ndarray
    mobility: np.ndarray
    gamma: float = 1.0
    scheme: Scheme = "SG"

    @field_validator("faces", "potential", "mobility", mode="before")
    @classmethod
    def _coerce(cls, value) -> np.ndarray:
        return as_readonly(value, ndim=1)

    @model_validator(mode="after")
    def _check_invariants(self) -> "FVProblem":
        n = self.faces.size - 1
        if n < 2:
            raise ValueError("at least two cells are required")
        if np.any(np.diff(self.faces) <= 0):
            raise ValueError("cell volumes must be positive")
        if self.potential.shape != (n,):
            raise ValueError(f"potential needs one value per cell ({n})")
        if self.mobility.shape != (n - 1,):
            raise ValueError(f"mobility needs one value per interior face ({n - 1})")
        if np.any(self.mobility <= 0) or not np.all(np.isfinite(self.mobility)):
            raise ValueError("mobility must be positive and finite")
        if not np.all(np.isfinite(self.potential)):
            raise ValueError("potential must be finite")
        if self.scheme != "Upwind" and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        return self

    @classmethod
    def build(
        cls,
        faces,
        potential: Potential | np.ndarray,
        mobility: Potential | float | np.ndarray = 1.0,
        gamma: float = 1.0,
        scheme: Scheme = "SG",
    ) -> "FVProblem":
        faces = np.asarray(faces, dtype=float)
        centers = 0.5 * (faces[1:] + faces[:-1])
        values = potential(centers) if callable(potential) else potential
        inner = faces[1:-1]
        if callable(mobility):
            a = mobility(inner)
        else:
            a = np.broadcast_to(np.asarray(mobility, dtype=float), inner.shape)
        return cls(
            faces=faces,
            potential=np.broadcast_to(np.asarray(values, dtype=float), centers.shape),
            mobility=np.array(a, dtype=float),
            gamma=gamma,
            scheme=scheme,
        )

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, potential, mobility=1.0, **kwargs) -> "FVProblem":
        return cls.build(np.linspace(lo, hi, n + 1), potential, mobility, **kwargs)

    @property
    def n(self) -> int:
        return self.faces.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    @property
    def volumes(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def total_volume(self) -> float:
        return float(self.faces[-1] - self.faces[0])

    @property
    def pi_vol(self) -> np.ndarray:
        return self.volumes / self.total_volume

    @property
    def transmission(self) -> np.ndarray:
        """τ per interior face."""
        return self.mobility / (np.diff(self.centers) * self.total_volume)

    def face_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(forward, backward) with J = forward·u_x − backward·u_y per interior face."""
        tau = self.transmission
        v = self.potential[:-1] - self.potential[1:]
        if self.scheme == "Upwind":
            return tau * np.maximum(v, 0.0), tau * np.maximum(-v, 0.0)
        z = v / self.gamma
        if self.scheme == "SG":
            return tau * self.gamma * bernoulli(-z), tau * self.gamma * bernoulli(z)
        with np.errstate(over="ignore"):
            forward, backward = np.exp(z / 2.0), np.exp(-z / 2.0)
        if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(backward))):
            raise NumericalFailureError("CoshSqrt face coefficients overflow")
        return tau * self.gamma * forward, tau * self.gamma * backward

    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-neighbour rates (κ_{i,i+1}, κ_{i+1,i})."""
        forward, backward = self.face_coefficients()
        pi_vol = self.pi_vol
        return forward / pi_vol[:-1], backward / pi_vol[1:]

    def stationary(self) -> np.ndarray:
        """Normalized stationary masses ∝ vol·e^{−V/γ}; concentrated on the minimum for Upwind."""
        if self.scheme == "Upwind":
            weights = (self.potential == self.potential.min()).astype(float) * self.volumes
        else:
            log_weights = np.log(self.volumes) - self.potential / self.gamma
            weights = np.exp(log_weights - log_weights.max())
        return weights / weights.sum()

    def face_fluxes(self, rho) -> np.ndarray:
        """Net face fluxes J_{i,i+1}; broadcasts over a leading time axis."""
        u = np.asarray(rho, dtype=float) / self.pi_vol
        forward, backward = self.face_coefficients()
        return forward * u[..., :-1] - backward * u[..., 1:]


def _flux_divergence(J: np.ndarray) -> np.ndarray:
    padded = np.concatenate([np.zeros(J.shape[:-1] + (1,)), J, np.zeros(J.shape[:-1] + (1,))], axis=-1)
    return padded[..., 1:] - padded[..., :-1]


def fv_generator(p: FVProblem):
    """Sparse tridiagonal M with dρ/dt = Mρ."""
    up, down = p.rates()
    exit_rates = np.concatenate([up, [0.0]]) + np.concatenate([[0.0], down])
    return diags([up, -exit_rates, down], [-1, 0, 1], format="csr")


def assemble_fp_graph(p: FVProblem) -> MarkovGraph:
    """The FV scheme as a detailed-balance jump process on the cells.

    Returns
    -------
    MarkovGraph
        Nearest-neighbour rates from :meth:`FVProblem.rates` and π ∝ vol·e^{−V/γ}.
    """
    if p.n < 3:
        raise InvalidArgumentError("at least three cells are required")
    if p.scheme == "Upwind":
        raise InvalidArgumentError("the Upwind scheme has no detailed-balance measure")
    up, down = p.rates()
    kappa = np.zeros((p.n, p.n))
    index = np.arange(p.n - 1)
    kappa[index, index + 1] = up
    kappa[index + 1, index] = down
    pi = p.stationary()
    if np.any(pi <= 0):
        raise InvalidArgumentError("potential range underflows the stationary measure")
    return MarkovGraph(nodes=tuple(f"c{i}" for i in range(p.n)), kappa=kappa, pi=pi)


def free_energy(p: FVProblem, rho):
    """γℋ(ρ|π_vol) + ⟨V, ρ⟩, or ⟨V, ρ⟩ for the pure-drift Upwind scheme."""
    rho = np.asarray(rho, dtype=float)
    drift = rho @ p.potential
    if p.scheme == "Upwind":
        return _out(drift)
    return _out(p.gamma * kl_div(rho, p.pi_vol).sum(axis=-1) + drift)


class FVSolution(BaseModel):
    """Cell masses on the step grid, face fluxes per step and the free energy."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray
    face_fluxes: np.ndarray
    energies: np.ndarray

    def masses_below(self, centers: np.ndarray, threshold: float) -> np.ndarray:
        """Mass in the cells with center below ``threshold`` at every time."""
        return self.states[:, centers < threshold].sum(axis=1)


def fv_evolve(
    p: FVProblem,
    rho0,
    T: float,
    n_steps: int = 200,
    method: Literal["implicit", "expm"] = "implicit",
) -> FVSolution:
    """Evolve the FV scheme on [0, T].

    Parameters
    ----------
    p : FVProblem
        The discretization.
    rho0 : array_like
        Non-negative initial cell masses.
    T : float
        Positive final time.
    n_steps : int, optional
        Number of uniform time steps (and output intervals).
    method : {"implicit", "expm"}, optional
        ``"implicit"`` solves (I − ΔtM)ρ* = ρⁿ with a banded direct solve and
        sets ρⁿ⁺¹ = ρⁿ − Δt div J(ρ*), which conserves mass to round-off.
        ``"expm"`` propagates the generator exactly; only suited to moderately
        stiff problems.

    Returns
    -------
    FVSolution
    """
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != (p.n,) or np.any(rho0 < 0):
        raise InvalidArgumentError(f"rho0 must be a non-negative vector of {p.n} cells")
    if T <= 0 or n_steps < 1:
        raise InvalidArgumentError("T and n_steps must be positive")
    times = np.linspace(0.0, T, n_steps + 1)
    M = fv_generator(p)

    if method == "expm":
        states = expm_multiply(M.tocsc(), rho0, start=0.0, stop=T, num=n_steps + 1, endpoint=True)
        states = project_positive(np.asarray(states))
        fluxes = p.face_fluxes(states[1:])
    elif method == "implicit":
        dt = T / n_steps
        banded = np.zeros((3, p.n))
        banded[0, 1:] = -dt * M.diagonal(1)
        banded[1] = 1.0 - dt * M.diagonal(0)
        banded[2, :-1] = -dt * M.diagonal(-1)
        states = np.empty((n_steps + 1, p.n))
        fluxes = np.empty((n_steps, p.n - 1))
        states[0] = rho0
        for step in range(n_steps):
            solved = solve_banded((1, 1), banded, states[step], check_finite=False)
            fluxes[step] = p.face_fluxes(solved)
            states[step + 1] = states[step] - dt * _flux_divergence(fluxes[step])
        if not np.all(np.isfinite(states)):
            raise NumericalFailureError("implicit FV step produced non-finite masses")
        states = project_positive(states)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    logger.debug("FV %s run: %d cells, %d steps, scheme %s", method, p.n, n_steps, p.scheme)
    return FVSolution(
        times=times, states=states, face_fluxes=fluxes, energies=free_energy(p, states)
    )


def graded_grid(
    lo: float, hi: float, n: int, center: float, width: float, refinement: float = 4.0
) -> np.ndarray:
    """Faces equidistributing the density 1 + refinement·exp(−((y − center)/width)²)."""
    if not hi > lo or n < 2:
        raise InvalidArgumentError("need hi > lo and at least two cells")
    _check_positive(width=width)
    if refinement < 0:
        raise InvalidArgumentError("refinement must be non-negative")
    fine = np.linspace(lo, hi, 40 * n + 1)
    density = 1.0 + refinement * np.exp(-(((fine - center) / width) ** 2))
    cumulative = cumulative_trapezoid(density, fine, initial=0.0)
    targets = np.linspace(0.0, cumulative[-1], n + 1)
    faces = np.interp(targets, cumulative, fine)
    faces[0], faces[-1] = lo, hi
    return faces


def quartic_double_well(y):
    """H(y) = (1 − y²)², minima at ±1, saddle at 0 with H = 1."""
    return (1.0 - np.asarray(y, dtype=float) ** 2) ** 2


def linear_potential(slope: float = 1.0, offset: float = 0.0) -> Potential:
    def potential(y):
        return offset + slope * np.asarray(y, dtype=float)

    return potential


def constant_potential(value: float = 0.0) -> Potential:
    def potential(y):
        return np.full(np.shape(y), float(value))

    return potential


def sampled_potential(points, values) -> Potential:
    """Piecewise-linear interpolation of sampled values."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if points.shape != values.shape or points.ndim != 1 or np.any(np.diff(points) <= 0):
        raise InvalidArgumentError("samples need increasing points and matching values")

    def potential(y):
        return np.interp(np.asarray(y, dtype=float), points, values)

    return potential


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def saddle_plateau_tilt(
    alpha: float, center: float = 0.0, inner: float = 0.5, outer: float = 0.7
) -> Potential:
    """α on |y − center| ≤ inner, falling to 0 at |y − center| = outer (C¹)."""
    if not 0 < inner < outer:
        raise InvalidArgumentError("need 0 < inner < outer")

    def tilt(y):
        distance = np.abs(np.asarray(y, dtype=float) - center)
        return alpha * (1.0 - _smoothstep((distance - inner) / (outer - inner)))

    return tilt


def _quartic_factory() -> Potential:
    return quartic_double_well


BUILTIN_POTENTIALS: dict[str, Callable[..., Potential]] = {
    "quartic_double_well": _quartic_factory,
    "linear": linear_potential,
    "constant": constant_potential,
    "saddle_plateau": saddle_plateau_tilt,
    "sampled": sampled_potential,
}


def named_potential(name: str, **params) -> Potential:
    """Instantiate a built-in potential by name with keyword parameters."""
    try:
        factory = BUILTIN_POTENTIALS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown potential {name!r}; choose from {sorted(BUILTIN_POTENTIALS)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as error:
        raise InvalidArgumentError(f"bad parameters for potential {name!r}: {error}") from None
