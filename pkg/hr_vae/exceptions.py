# -*- coding: utf-8 -*-
"""
Exceptions raised across the package. Every error carries a readable message
naming the offending field, parameter or shapes, and the process exit code the
command line reports for it.
"""


class HrVaeError(Exception):
    """Base class for all errors raised by hr_vae."""
    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message


class ContractError(HrVaeError, ValueError):
    """A caller broke a precondition: shapes, ranges, empty inputs."""
    exit_code = 2


class DomainError(HrVaeError, ArithmeticError):
    """A value left the domain of an operation (log of a non-positive value, NaN)."""
    exit_code = 4


class ConfigError(HrVaeError):
    """Invalid or unknown configuration field, or an unreadable configured path."""
    exit_code = 2


class CheckpointError(HrVaeError):
    """A checkpoint cannot be read or does not match the config, vocab or data given."""
    exit_code = 3


class NumericalError(HrVaeError):
    """Training produced a non-finite loss or gradient."""
    exit_code = 4
