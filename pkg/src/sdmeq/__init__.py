"""Output SNR of finite-length MMSE MIMO equalizers for SDM optical links.

Modules: :mod:`~sdmeq.channel` (random path synthesis, noise whitening),
:mod:`~sdmeq.discretize` (fractionally spaced taps), :mod:`~sdmeq.mmse`
(closed-form equalizer and SNR), :mod:`~sdmeq.simulator` (waveform Monte
Carlo with supervised LMS) and :mod:`~sdmeq.cli` (experiment runner).
"""
from .errors import (AliasingError, ChannelTooLongError, ConfigError, DegenerateModeError,
                     DivergenceError, InvalidDimensionError, InvalidSpecError,
                     NumericalDomainError, SdmeqError)

__version__ = "0.1.0"

__all__ = ["AliasingError", "ChannelTooLongError", "ConfigError", "DegenerateModeError",
           "DivergenceError", "InvalidDimensionError", "InvalidSpecError",
           "NumericalDomainError", "SdmeqError", "__version__"]
