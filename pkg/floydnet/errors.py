# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information


class FloydNetException(Exception):
    pass


class GraphFormatError(FloydNetException):
    """Raise this exception when a graph file does not parse"""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = 'line %s: %s' % (lineno, message)
        super().__init__(message)
        self.lineno = lineno


class DimensionMismatch(FloydNetException):
    """Raise this exception when feature dimensions disagree with the
    declared (or configured) ones"""
    pass


class PermutationError(FloydNetException):
    """Raise this exception when a permutation is not a bijection of the
    expected size"""
    pass


class CapabilityError(FloydNetException):
    """Raise this exception when a computation is asked for a size it
    cannot enumerate exhaustively"""
    pass


class NegativeWeightError(FloydNetException):
    pass


class ShapeError(FloydNetException):
    pass


class NonFiniteError(FloydNetException):
    """Raise this exception when a primitive produced NaN or Inf"""
    pass


class MissingForwardRecord(FloydNetException):
    """Raise this exception when a backward pass is requested for a tensor
    that no recorded forward produced"""
    pass


class RotationError(FloydNetException):
    pass


class SupernodeRequired(FloydNetException):
    pass


class ConfigError(FloydNetException):
    pass


class CheckpointError(FloydNetException):
    pass


class TrainingDiverged(FloydNetException):
    """Raise this exception when a loss or a gradient stops being finite"""
    pass


class CheckFailed(FloydNetException):
    """Raise this exception when a verification ran to completion and did
    not pass"""
    pass
