"""Exception hierarchy; the CLI maps each class to an exit code."""


class MacroEnergyError(Exception):
    exit_code = 1


class ConfigError(MacroEnergyError, ValueError):
    exit_code = 2


class NumericalError(MacroEnergyError, ArithmeticError):
    """Estimation failed: singular moments, lost positive definiteness, etc."""

    exit_code = 3


class DataError(MacroEnergyError, ValueError):
    exit_code = 4
