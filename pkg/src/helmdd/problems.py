"""Unit-square benchmark instances: homogeneous and layered media."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fem import CoefficientField, ProblemSpec, gaussian_source
from .mesh import Tag, TriMesh, build_square_mesh


class Kind(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    LAYERS = "layers"


@dataclass(frozen=True)
class LayeredSpeed:
    """Wave speed rho on odd-numbered horizontal bands, 1 elsewhere (top band fast)."""

    rho: float
    n_layers: int = 10

    def speed(self, x, y):
        band = np.clip(np.floor(self.n_layers * np.asarray(y, dtype=float)), 0, self.n_layers - 1)
        return np.where(band.astype(int) % 2 == 1, self.rho, 1.0)

    def slowness2(self, x, y):
        return self.speed(x, y) ** -2.0


@dataclass(frozen=True)
class BenchmarkProblem:
    kind: Kind
    omega: float
    rho: float = 10.0
    points_per_wavelength: float = 20.0
    n_layers: int = 10
    cells: int | None = None  # overrides the wavelength rule


@dataclass(frozen=True)
class ProblemInfo:
    kind: Kind
    omega: float
    rho: float
    cells: int
    n: int
    lambda_min: float
    L_lambda: float  # domain diameter in minimal wavelengths
    k_max: float


def cells_for(omega: float, ppw: float, multiple: int = 1) -> int:
    m = math.ceil(ppw * omega / (2 * math.pi) - 1e-9)
    return int(multiple * math.ceil(m / multiple))


def make_problem(
    kind: Kind | str,
    omega: float,
    rho: float = 10.0,
    points_per_wavelength: float = 20.0,
    n_layers: int = 10,
    cells: int | None = None,
) -> tuple[TriMesh, ProblemSpec, ProblemInfo]:
    """Mesh, coefficients and reporting metadata for one square benchmark.

    The mesh has ``ceil(ppw * omega / 2pi)`` cells per side.  Layer
    interfaces need not follow mesh lines; coefficients are sampled at
    element barycentres.
    """
    kind = Kind(kind)
    if not omega > 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    if rho < 1:
        raise ConfigurationError(f"contrast rho must be >= 1, got {rho}")
    if points_per_wavelength < 10:
        raise ConfigurationError(f"at least 10 points per wavelength required, got {points_per_wavelength}")
    if cells is None:
        cells = cells_for(omega, points_per_wavelength)
    mesh = build_square_mesh(cells, Tag.ROBIN)
    if kind is Kind.HOMOGENEOUS:
        coeffs = CoefficientField()
    else:
        coeffs = CoefficientField(m_coef=LayeredSpeed(rho, n_layers).slowness2)
    spec = ProblemSpec(omega=omega, coeffs=coeffs, source=gaussian_source)
    lambda_min = 2 * math.pi / omega  # slowest speed is 1 in both media
    info = ProblemInfo(
        kind=kind,
        omega=omega,
        rho=rho if kind is Kind.LAYERS else 1.0,
        cells=cells,
        n=mesh.n_vertices,
        lambda_min=lambda_min,
        L_lambda=math.sqrt(2) / lambda_min,
        k_max=omega,
    )
    return mesh, spec, info


def from_benchmark(p: BenchmarkProblem):
    return make_problem(p.kind, p.omega, p.rho, p.points_per_wavelength, p.n_layers, p.cells)
