"""Exception types shared across the solver pipeline.

The CLI maps these onto exit codes: configuration problems exit 1,
admissibility rejections exit 2, numerical failures exit 3.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


class GridError(ValueError):
    """A time grid did not satisfy an operation's grid requirements."""


class AdmissibilityError(ValueError):
    """Kernel or coefficient data violates an admissibility condition."""


class EllipticityError(AdmissibilityError):
    """Diffusion coefficient is not uniformly positive definite."""


class ContourAdmissibilityError(AdmissibilityError):
    """Resolvent factorization failed at one or more contour nodes."""

    def __init__(self, failed_nodes, message=None):
        self.failed_nodes = tuple(failed_nodes)
        if message is None:
            shown = ", ".join(f"{p:.6g}" for p in self.failed_nodes[:5])
            more = "" if len(self.failed_nodes) <= 5 else ", ..."
            message = (
                f"resolvent factorization failed at {len(self.failed_nodes)} "
                f"contour node(s): {shown}{more}"
            )
        super().__init__(message)


class ResolventError(RuntimeError):
    """A shifted elliptic system was singular or numerically near-singular."""

    def __init__(self, shift, message=None):
        self.shift = shift
        super().__init__(message or "singular or near-singular resolvent system")


class PipelineError(RuntimeError):
    """Wraps a failure with the pipeline stage where it occurred."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}': {cause}")
