# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: __init__.py

# Enforce Python version check during package import.
# This is the same check as the one at the top of setup.py
import sys

__minimum_python_version__ = "3.6"
__version__ = "0.1.dev"


class UnsupportedPythonError(Exception):
    pass


if sys.version_info < tuple((int(val) for val in __minimum_python_version__.split('.'))):
    raise UnsupportedPythonError("ggufquant does not support Python < {}".format(__minimum_python_version__))

from .exceptions import GGUFQuantError, InputError  # noqa: E402
from .schemes import SCHEMES, get_scheme  # noqa: E402
