import numpy as np
import pytest

from mocapdyn.skeleton import builtin_models


@pytest.fixture(scope="session")
def models():
    return builtin_models()


@pytest.fixture(scope="session")
def biped(models):
    return models["biped12"]


@pytest.fixture(scope="session")
def pendulum(models):
    return models["pendulum2"]


@pytest.fixture(scope="session")
def freebox(models):
    return models["freebox6"]


def random_pose(skel, rng, spread=0.5):
    """Random pose; spread < pi/2 - 0.1 keeps free-joint Euler angles away
    from the gimbal-lock singularity."""
    return rng.uniform(-spread, spread, skel.dof_count)
