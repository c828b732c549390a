import numpy as np
import pytest
from pydantic import ValidationError

from coshflows.cell_problem import CellProblem, cell_N_variational, parallel_infimum, series_infimum
from coshflows.cosh_core import cell_N_explicit, parallel_combine, series_combine
from coshflows.errors import InvalidArgumentError


def test_constant_conductivity_matches_explicit_formula():
    p = CellProblem(flux=1.0, alpha=1.0, beta=1.0, grid_points=1000)
    assert cell_N_variational(p) == pytest.approx(cell_N_explicit(1.0, 1.0, 1.0, 1.0), rel=1e-3)


def test_zero_flux_leaves_boundary_term():
    p = CellProblem(flux=0.0, alpha=4.0, beta=1.0, values=(2.0,), grid_points=400)
    assert cell_N_variational(p) == pytest.approx(2.0 * 2.0 * (2.0 - 1.0) ** 2, rel=1e-3)


def test_piecewise_profile_uses_harmonic_mean():
    p = CellProblem(flux=0.7, alpha=0.8, beta=1.6, breakpoints=(0.5,), values=(1.0, 3.0), grid_points=1000)
    assert p.harmonic_mean() == pytest.approx(1.5)
    expected = cell_N_explicit(0.7, 0.8, 1.6, 1.5)
    assert cell_N_variational(p) == pytest.approx(expected, rel=1e-3)


def test_refinement_reduces_error():
    errors = []
    for n in (100, 200, 400, 1000):
        p = CellProblem(flux=0.7, alpha=0.8, beta=1.6, breakpoints=(0.5,), values=(1.0, 3.0), grid_points=n)
        exact = cell_N_explicit(0.7, 0.8, 1.6, p.harmonic_mean())
        errors.append(abs(cell_N_variational(p) - exact))
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_vanishing_boundary_density_is_rejected():
    with pytest.raises(InvalidArgumentError):
        cell_N_variational(CellProblem(flux=1.0, alpha=0.0, beta=1.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha": -1.0},
        {"grid_points": 1},
        {"breakpoints": (0.5,), "values": (1.0,)},
        {"breakpoints": (1.5,), "values": (1.0, 2.0)},
        {"values": (0.0,)},
    ],
)
def test_invalid_cell_data(kwargs):
    data = {"flux": 1.0, "alpha": 1.0, "beta": 1.0, **kwargs}
    with pytest.raises(ValidationError):
        CellProblem(**data)


def test_series_law(rng):
    for _ in range(5):
        j = rng.uniform(-1.0, 1.0)
        alpha, beta, k1, k2 = rng.uniform(0.5, 2.0, size=4)
        value, gamma = series_infimum(j, alpha, beta, k1, k2)
        assert value == pytest.approx(cell_N_explicit(j, alpha, beta, series_combine(k1, k2)), abs=1e-6)
        assert gamma > 0


def test_parallel_law(rng):
    j, alpha, beta = 0.8, 1.2, 0.6
    ks = np.array([0.5, 1.0, 1.5])
    value, split = parallel_infimum(j, alpha, beta, ks)
    assert value == pytest.approx(cell_N_explicit(j, alpha, beta, parallel_combine(ks)), abs=1e-6)
    assert split.sum() == pytest.approx(j)
    # optimal splits are proportional to the conductivities
    np.testing.assert_allclose(split, j * ks / ks.sum(), atol=1e-4)
