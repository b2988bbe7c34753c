import math

import numpy as np
import pytest

from helmdd.errors import ConfigurationError
from helmdd.problems import BenchmarkProblem, Kind, LayeredSpeed, cells_for, from_benchmark, make_problem


def test_homogeneous_reporting():
    mesh, spec, info = make_problem("homogeneous", 20.0)
    assert info.L_lambda == pytest.approx(math.sqrt(2) * 20 / (2 * math.pi))
    assert round(info.L_lambda, 2) == 4.50
    assert info.cells == 64 == mesh.cells_per_side  # ceil(20 * 20 / 2pi)
    assert info.n == 65 * 65 and info.lambda_min == pytest.approx(2 * math.pi / 20)
    assert np.allclose(spec.wavenumber_at(mesh.barycentres()), 20.0)


def test_cells_rule():
    assert cells_for(20.0, 20.0) == 64
    assert cells_for(2 * math.pi, 10.0) == 10  # exact products are not bumped up


def test_layers_unit_contrast_is_homogeneous():
    mesh, spec, _ = make_problem("layers", 12.0, rho=1.0)
    _, ref, _ = make_problem("homogeneous", 12.0)
    pts = mesh.barycentres()
    assert np.array_equal(spec.coeffs.sample(pts)[1], ref.coeffs.sample(pts)[1])


def test_layers_top_band_is_fast():
    mesh, spec, info = make_problem(Kind.LAYERS, 20.0, rho=10.0)
    c = mesh.vertices[mesh.triangles]
    inside = (c[..., 1].min(axis=1) >= 0.9)
    speed = spec.coeffs.sample(mesh.barycentres())[1] ** -0.5
    assert inside.any() and np.allclose(speed[inside], 10.0)
    assert info.k_max == 20.0 and info.lambda_min == pytest.approx(2 * math.pi / 20)


def test_layered_speed_profile():
    ls = LayeredSpeed(4.0)
    y = np.array([0.05, 0.15, 0.25, 0.95, 1.0])
    assert ls.speed(0 * y, y).tolist() == [1.0, 4.0, 1.0, 4.0, 4.0]
    assert LayeredSpeed(4.0, n_layers=4).speed(0.0, 0.3) == 4.0


@pytest.mark.parametrize("kwargs", [
    dict(omega=0.0), dict(omega=10.0, rho=0.5), dict(omega=10.0, points_per_wavelength=5),
])
def test_rejects_invalid(kwargs):
    with pytest.raises(ConfigurationError):
        make_problem("homogeneous", **kwargs)
    with pytest.raises(ValueError):
        make_problem("cylinder", 10.0)


def test_from_benchmark_and_override():
    mesh, _, info = from_benchmark(BenchmarkProblem(Kind.HOMOGENEOUS, 5.0, cells=7))
    assert mesh.cells_per_side == 7 == info.cells
