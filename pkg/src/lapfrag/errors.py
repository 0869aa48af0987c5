"""Exception hierarchy.

Validation errors map to CLI exit code 1, numeric errors to exit code 2.
"""


class ValidationError(ValueError):
    """Input fails a structural precondition (bad graph, bad flag, bad scenario)."""


class NumericError(RuntimeError):
    """A numerical operation failed or is ill-posed on the given data."""


class DegenerateSpectrumError(NumericError):
    """Perturbation theory refused: the spectrum has (near-)repeated eigenvalues."""

    def __init__(self, gap, scale, pair=None):
        self.gap = gap
        self.scale = scale
        self.pair = pair
        where = f" between eigenvalues {pair[0]} and {pair[1]}" if pair else ""
        super().__init__(
            f"spectrum is numerically degenerate{where}: "
            f"min gap {gap:.3e} < 1e-8 * {scale:.3e}"
        )


class AmbiguousMatchError(NumericError):
    """Perturbed/nominal eigenvalue matching by eigenvector overlap is ambiguous."""


class ResolventSingularError(NumericError):
    """Transfer-function evaluation requested within 1e-12 of a pole."""

    def __init__(self, s):
        self.s = s
        super().__init__(f"resolvent singular at s = {s}")


class UnstableSystemError(ValidationError):
    """H-infinity norm requested for a system with an observable unstable pole."""

    def __init__(self, pole):
        self.pole = pole
        super().__init__(
            f"observable pole {pole} is not in the open left half-plane; "
            "the H-infinity norm is undefined"
        )


class StaleDestabilizerError(ValidationError):
    """A destabilizer does not satisfy its defining identities for this system."""
