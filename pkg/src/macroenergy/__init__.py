"""Macro-energy forecasting toolkit.

Linear and time-varying VARs, GARCH-t marginals with DCC/ADCC/t-copula
dependence, Archimedean copulas with bootstrap goodness of fit, and
Gaussian-process residual correction, with a rolling out-of-sample harness.
"""

__version__ = "0.1.0"

from .exceptions import ConfigError, DataError, MacroEnergyError, NumericalError  # noqa: E402
from .data import *  # noqa: E402,F401,F403
from .diagnostics import *  # noqa: E402,F401,F403
from .var import *  # noqa: E402,F401,F403
from .tvp import *  # noqa: E402,F401,F403
from .garch import *  # noqa: E402,F401,F403
from .copulas import *  # noqa: E402,F401,F403
from .gpr import *  # noqa: E402,F401,F403
from .config import *  # noqa: E402,F401,F403
from .evaluation import *  # noqa: E402,F401,F403
