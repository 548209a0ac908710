"""Exception hierarchy.

Validation errors signal malformed input (CLI exit code 1); numerical errors
signal a degenerate estimate or model (CLI exit code 2).
"""


class CVMDIError(Exception):
    pass


class ValidationError(CVMDIError, ValueError):
    pass


class NumericalError(CVMDIError, ArithmeticError):
    pass


class NotSymmetric(ValidationError):
    pass


class NotPSD(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class UnknownStrategy(ValidationError):
    pass


class SingularBlock(NumericalError):
    pass


class DegenerateAnnouncement(NumericalError):
    pass


class IncompatibleVZ(NumericalError):
    pass
