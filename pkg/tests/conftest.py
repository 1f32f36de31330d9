"""
Pytest fixtures for mf-label tests.

Provides:
- cli_main: main(argv) of the mf-label entry script
- rng: seeded numpy generator
- signal_assignment / signal_graph: the ten-pixel signal example
"""

from importlib.util import module_from_spec, spec_from_file_location
from pathlib import Path

import numpy as np
import pytest

from library import analysis


def _load_mf_label():
    """Load mf-label.py as a module despite the hyphenated name."""
    app_path = Path(__file__).resolve().parent.parent / "mf-label.py"
    spec = spec_from_file_location("mf_label", app_path)
    if spec is None or spec.loader is None:
        raise ImportError(f"Could not load loader for {app_path} (from {__file__})")
    mf_label = module_from_spec(spec)
    spec.loader.exec_module(mf_label)
    return mf_label


# Load the entry script once for all fixtures
_mf_label = _load_mf_label()


@pytest.fixture
def cli_main():
    """The ``main(argv) -> int`` function of the entry script."""
    return _mf_label.main


@pytest.fixture
def rng():
    """Seeded random generator; every test gets the same stream."""
    return np.random.default_rng(20240611)


@pytest.fixture
def signal_assignment():
    """Initial assignment of the ten-pixel signal example."""
    return analysis.signal_example_assignment()


@pytest.fixture
def signal_graph():
    """Three-point mirrored uniform window on the 1 x 10 grid."""
    return analysis.signal_example_graph()
