class SdmeqError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SdmeqError, ValueError):
    pass


class InvalidSpecError(SdmeqError, ValueError):
    pass


class NumericalDomainError(SdmeqError, ArithmeticError):
    """A matrix that must be Hermitian PSD (or PD) is not, beyond tolerance."""


class AliasingError(SdmeqError):
    """Impulse response wraps around the FFT window."""


class ChannelTooLongError(SdmeqError):
    pass


class DegenerateModeError(SdmeqError, ArithmeticError):
    """An equalizer output carries no information (error variance >= 1)."""


class DivergenceError(SdmeqError):
    def __init__(self, mu, symbol_index):
        super().__init__(f"LMS diverged with mu={mu:g} at symbol {symbol_index}")
        self.mu = mu
        self.symbol_index = symbol_index


class ConfigError(SdmeqError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
