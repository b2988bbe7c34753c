import numpy as np
import pytest

from helmdd.decomp import assemble_local_matrices, decompose, global_operators
from helmdd.fem import CoefficientField, ProblemSpec
from helmdd.mesh import build_square_mesh


def build_case(m=8, px=2, py=1, omega=5.0, overlap=1, pou="steep", extra_layers=0, coeffs=None):
    mesh = build_square_mesh(m)
    spec = ProblemSpec(omega=omega, coeffs=coeffs or CoefficientField())
    ops = global_operators(mesh, spec)
    dec = decompose(mesh, px, py, overlap, pou, extra_layers=extra_layers)
    lms = [assemble_local_matrices(mesh, s, spec, ops) for s in dec.subdomains]
    return mesh, spec, ops, dec, lms


@pytest.fixture(scope="session")
def strip():
    """m=8 square, two vertical strips, omega=5, one overlap layer, extended by one layer."""
    return build_case(8, 2, 1, 5.0, extra_layers=1)


@pytest.fixture(scope="session")
def grid2x2():
    return build_case(12, 2, 2, 10.0, extra_layers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
