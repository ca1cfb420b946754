import sys
from pathlib import Path

import numpy as np
import pytest

# allow `import dense_ref` from test modules
sys.path.insert(0, str(Path(__file__).parent))

from ssmfrc.beam import BeamConfig, build_beam
from ssmfrc.spectral import (
    MechanicalSystem,
    ModalNonlinearity,
    PolynomialForce,
    decompose,
    modal_forcing,
    to_first_order,
)
from ssmfrc.ssm_auto import build_autonomous


class Pipeline:
    """Bundle of everything downstream of one mechanical system."""

    def __init__(self, system, order=1, master_pair=0):
        self.system = system
        self.first = to_first_order(system)
        self.dec = decompose(self.first.A, system, master_pair=master_pair)
        self.nl = ModalNonlinearity.from_system(system, self.dec)
        self.forcing = modal_forcing(system, self.dec)
        self.auto = build_autonomous(self.dec, self.nl, order)


@pytest.fixture(scope="session")
def beam10():
    """Ten-DOF benchmark beam, cubic tip spring, order-3 reduction."""
    return Pipeline(build_beam(BeamConfig(elements=5)))


@pytest.fixture(scope="session")
def beam10_linear():
    """Same beam without the cubic spring."""
    return Pipeline(build_beam(BeamConfig(elements=5, cubic_spring=0.0)))


def make_two_dof(kappa=0.3):
    """Two-DOF chain with proportional damping and one cubic spring."""
    M = np.eye(2)
    K = np.array([[2.0, -1.0], [-1.0, 2.0]])
    C = 0.02 * M + 0.01 * K
    force = PolynomialForce(terms=((0, kappa, {0: 3}),)) if kappa else PolynomialForce()
    return MechanicalSystem(
        n=2, mass=M, damping=C, stiffness=K, nonlinearity=force,
        forcing_shape=np.array([1.0, 0.0]),
    )


@pytest.fixture(scope="session")
def twodof():
    return Pipeline(make_two_dof())
