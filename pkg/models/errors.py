"""Exception hierarchy shared by the models, services and entrypoints."""

from typing import Optional


class MixedPairError(Exception):
    """Base class for every error raised by this package."""


class SpecValidationError(MixedPairError, ValueError):
    """A spec document (distribution, map, chain, density) is malformed."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field {field}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class InvalidDistributionError(MixedPairError, ValueError):
    pass


class AtomIndexError(MixedPairError, IndexError):
    pass


class UndefinedPosteriorError(MixedPairError, ArithmeticError):
    """Posterior weights requested where the marginal density vanishes."""


class IntegrationError(MixedPairError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance."""


class DivergentIntegralError(IntegrationError):
    """Tail contribution at the maximum truncation radius is still significant."""


class UncertifiedDistributionError(MixedPairError):
    pass


class DomainError(MixedPairError, ValueError):
    pass


class UnsupportedShapeError(MixedPairError, ValueError):
    pass


class DimensionLimitError(MixedPairError, ValueError):
    pass


class CertificationFailure(MixedPairError):
    """A computed claim (bijectivity, preservation, identity) did not hold."""


class NonBijectiveMapError(CertificationFailure):
    pass


class ReducibleChainError(MixedPairError, ValueError):
    pass


class NonStationaryStartError(MixedPairError, ValueError):
    pass


class DegenerateSampleError(MixedPairError, ValueError):
    pass


class TooFewEventsError(MixedPairError, ValueError):
    pass
