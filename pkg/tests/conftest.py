import os
import sys

import pytest

SCRIPTS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "scripts")
sys.path.insert(0, os.path.abspath(SCRIPTS_DIR))
# Worker processes started by joblib import the modules by name
os.environ["PYTHONPATH"] = os.pathsep.join(
    p for p in (os.path.abspath(SCRIPTS_DIR), os.environ.get("PYTHONPATH")) if p
)

from design_sizer import DesignScenario  # noqa: E402


@pytest.fixture
def table1_row():
    """p=0.3, q=0.5, delta=0.10, d=0.15, phi=0 with PCS targets 0.8"""
    return DesignScenario(p=0.3, q=0.5, delta=0.10, d=0.15, phi=0.0, alpha_L=0.8, alpha_H=0.8)
