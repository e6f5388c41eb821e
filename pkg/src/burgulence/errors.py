"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid size, parameter, or configuration value."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class GridMismatchError(ValueError):
    """Two fields live on grids of different sizes."""


class ContractError(ValueError):
    """An operation was called with inputs it is not defined for."""


class OracleError(RuntimeError):
    """A reference solution could not be computed reliably."""


class InstabilityError(RuntimeError):
    """Non-finite values appeared during time integration."""

    def __init__(self, t, dt, nu, grid_size, message=None):
        self.t = t
        self.dt = dt
        self.nu = nu
        self.grid_size = grid_size
        if message is None:
            message = (
                f"non-finite solution at t={t:.6g} (dt={dt:.3e}, nu={nu:.4g}, "
                f"N={grid_size})"
            )
        super().__init__(message)
