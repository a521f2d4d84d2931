"""Error categories surfaced by the command line (one exit code each)."""


class GnefitError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(GnefitError):
    category = "config error"
    exit_code = 2


class InputFileError(GnefitError):
    category = "input error"
    exit_code = 3


class DimensionError(GnefitError):
    category = "dimension error"
    exit_code = 4


class NumericalError(GnefitError):
    category = "numerical error"
    exit_code = 5
