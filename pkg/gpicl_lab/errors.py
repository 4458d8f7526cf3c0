"""
Exception hierarchy shared by every subpackage.

Each error carries the process exit code the CLI reports for it.
"""


class GpiclError(Exception):
    exit_code = 1


class ConfigError(GpiclError, ValueError):
    exit_code = 2


class FormatError(GpiclError, ValueError):
    exit_code = 2


class ShapeError(GpiclError, ValueError):
    exit_code = 1


class EmptyBatchError(GpiclError, ValueError):
    exit_code = 1


class NumericsError(GpiclError, ArithmeticError):
    exit_code = 3
