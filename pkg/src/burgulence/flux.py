"""Strongly convex flux functions ``f`` for ``u_t + f'(u) u_x = nu u_xx``.

All callables act elementwise on numpy arrays.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from burgulence.errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class FluxFunction:
    """A flux ``f`` with its first two derivatives and convexity floor ``sigma``.

    ``sigma = 0`` is accepted only so that degenerate test fluxes (pure heat
    flow) can be represented; the kicked simulator rejects them.
    """

    name: str
    eval_f: Callable[[np.ndarray], np.ndarray]
    eval_fp: Callable[[np.ndarray], np.ndarray]
    eval_fpp: Callable[[np.ndarray], np.ndarray]
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigurationError(f"sigma must be non-negative, got {self.sigma}")

    def f(self, u):
        return self.eval_f(np.asarray(u, dtype=float))

    def fp(self, u):
        return self.eval_fp(np.asarray(u, dtype=float))

    def fpp(self, u):
        return self.eval_fpp(np.asarray(u, dtype=float))

    @property
    def is_classical(self):
        return self.name == "classical"


def _classical():
    return FluxFunction(
        name="classical",
        eval_f=lambda u: u * u,
        eval_fp=lambda u: 2.0 * u,
        eval_fpp=lambda u: np.full_like(u, 2.0),
        sigma=2.0,
    )


def _quartic():
    return FluxFunction(
        name="quartic",
        eval_f=lambda u: u * u + u**4 / 12.0,
        eval_fp=lambda u: 2.0 * u + u**3 / 3.0,
        eval_fpp=lambda u: 2.0 + u * u,
        sigma=2.0,
    )


_BUILTIN = {"classical": _classical, "quartic": _quartic}
BUILTIN_NAMES = tuple(_BUILTIN)


def builtin_flux(name):
    """Return ``classical`` (f = u^2) or ``quartic`` (f = u^2 + u^4/12)."""
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown flux {name!r}; expected one of {', '.join(BUILTIN_NAMES)}"
        ) from None


def linear_test_flux():
    """``f = 0``: the equation reduces to heat flow. Not strongly convex."""
    return FluxFunction(
        name="linear",
        eval_f=np.zeros_like,
        eval_fp=np.zeros_like,
        eval_fpp=np.zeros_like,
        sigma=0.0,
    )


def shifted_flux(flux, b):
    """Flux ``g(y) = f(y + b) - b y`` for data with mean value ``b``.

    If ``u`` solves the equation with flux ``f`` and has mean ``b``, then
    ``v(t, x) = u(t, x + b t) - b`` has zero mean and solves it with ``g``.
    """
    b = float(b)
    return FluxFunction(
        name=f"{flux.name}+shift({b:g})",
        eval_f=lambda y: flux.eval_f(y + b) - b * y,
        eval_fp=lambda y: flux.eval_fp(y + b) - b,
        eval_fpp=lambda y: flux.eval_fpp(y + b),
        sigma=flux.sigma,
    )


def verify_convexity(flux, radius=10.0, n_samples=1001):
    """Sample ``f''`` on ``[-radius, radius]``.

    Returns ``(ok, min_fpp)`` where ``ok`` means ``min f'' >= sigma (1 - 1e-12)``.
    """
    if n_samples < 100:
        raise ConfigurationError("convexity check needs at least 100 samples")
    if not radius > 0:
        raise ConfigurationError("radius must be positive")
    u = np.linspace(-radius, radius, int(n_samples))
    min_fpp = float(np.min(flux.fpp(u)))
    ok = flux.sigma > 0 and min_fpp >= flux.sigma * (1.0 - 1e-12)
    return ok, min_fpp
