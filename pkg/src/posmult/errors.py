"""Exception types shared by every module.

Numerical verdicts that come out negative are usually returned, not raised.
Exceptions are reserved for violated preconditions; where a certificate of
the violation exists (a negative-eigenvalue vector, a linear relation, a
defect value) it is attached to the exception.
"""
import numpy as np


class PosmultError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(PosmultError, ValueError):
    pass


class NotHermitian(PosmultError, ValueError):
    def __init__(self, msg, asymmetry=None):
        super().__init__(msg)
        self.asymmetry = asymmetry


class NoConvergence(PosmultError, ArithmeticError):
    pass


class NotPsd(PosmultError, ValueError):
    """Raised when positivity is required; carries the negative direction."""

    def __init__(self, msg, witness=None, min_eigenvalue=None):
        super().__init__(msg)
        self.witness = None if witness is None else np.asarray(witness)
        self.min_eigenvalue = min_eigenvalue


class NotCompletelyPositive(NotPsd):
    def __init__(self, msg, witness=None, min_eigenvalue=None, level=None):
        super().__init__(msg, witness, min_eigenvalue)
        self.level = level


class DomainViolation(PosmultError, ValueError):
    def __init__(self, msg, offending=()):
        super().__init__(msg)
        self.offending = list(offending)


class NodesCollide(PosmultError, ValueError):
    pass


class NonPositiveNode(PosmultError, ValueError):
    pass


class NotBimodular(PosmultError, ValueError):
    def __init__(self, msg, defect=None):
        super().__init__(msg)
        self.defect = defect


class NotMinimalInput(PosmultError, ValueError):
    def __init__(self, msg, relation=None):
        super().__init__(msg)
        self.relation = None if relation is None else np.asarray(relation)


class InconsistentRestriction(PosmultError, ValueError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class ProjectionNotInAlgebra(PosmultError, ValueError):
    def __init__(self, msg, defect=None):
        super().__init__(msg)
        self.defect = defect


class InconsistentFiltration(PosmultError, ValueError):
    def __init__(self, msg, level=None, residual=None):
        super().__init__(msg)
        self.level = level
        self.residual = residual


class InvalidAlgebra(PosmultError, ValueError):
    pass


class NotMultiplier(PosmultError, ValueError):
    def __init__(self, msg, defect=None):
        super().__init__(msg)
        self.defect = defect


class MembershipViolation(PosmultError, ValueError):
    def __init__(self, msg, index=None, defect=None):
        super().__init__(msg)
        self.index = index
        self.defect = defect


class NotCommuting(PosmultError, ValueError):
    def __init__(self, msg, pair=None, norm=None):
        super().__init__(msg)
        self.pair = pair
        self.norm = norm


class InconsistentAtoms(PosmultError, ValueError):
    pass
