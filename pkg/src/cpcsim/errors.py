"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A computation reached a numerically degenerate or unusable state.

    Raised instead of silently regularizing: degenerate predictive densities,
    failed Cholesky factorizations, and solver non-convergence all surface
    through this type so callers (and the CLI) can distinguish numerical
    failure from usage errors.
    """


class SinkhornConvergenceError(NumericalError):
    """Sinkhorn iterations did not reach the marginal tolerance.

    Usually means epsilon is too small for the numeric range of the cost
    matrix; increase epsilon or max_iter.
    """
