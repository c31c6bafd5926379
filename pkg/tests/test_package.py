import doctest
import importlib

import pytest

import mcpt

MODULES = ["atomic", "liouville", "solve", "observe", "nulling", "toymodel", "config", "model", "constants", "cli"]


@pytest.mark.parametrize("name", MODULES)
def test_doctests(name):
    module = importlib.import_module(f"mcpt.{name}")
    result = doctest.testmod(module, optionflags=doctest.ELLIPSIS)
    assert result.failed == 0


def test_public_api():
    for name in mcpt.__all__:
        assert hasattr(mcpt, name)
    assert mcpt.__version__
    assert issubclass(mcpt.DegenerateExpansionError, mcpt.SolverError)
    assert issubclass(mcpt.ConfigError, mcpt.MCPTError)
