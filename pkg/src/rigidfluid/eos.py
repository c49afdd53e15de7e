"""Barotropic pressure laws."""

import numpy as np

from .errors import InputError


class PressureLaw:
    """gamma-law ``p = a rho**gamma`` with inverse and pressure potential.

    The potential satisfies ``P'(rho) rho - P(rho) = p(rho)``:
    ``P = a rho**gamma / (gamma - 1)`` for ``gamma > 1`` and
    ``P = a rho log(rho)`` for the isothermal law ``gamma = 1``.
    """

    def __init__(self, a=1.0, gamma=1.4):
        if not a > 0:
            raise InputError("pressure law coefficient 'a' must be positive")
        if not gamma >= 1:
            raise InputError("pressure law exponent 'gamma' must be >= 1")
        self.a = float(a)
        self.gamma = float(gamma)

    def pressure(self, rho):
        return self.a * np.power(rho, self.gamma)

    __call__ = pressure

    def dpressure(self, rho):
        return self.a * self.gamma * np.power(rho, self.gamma - 1)

    def density(self, p):
        """Inverse law; nonpositive pressures are rejected."""
        p = np.asarray(p, dtype=float)
        if np.any(~(p > 0)):
            raise InputError("pressure must be positive to invert the pressure law")
        return np.power(p / self.a, 1.0 / self.gamma)

    def potential(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.gamma == 1.0:
            return self.a * rho * np.log(rho)
        return self.a * np.power(rho, self.gamma) / (self.gamma - 1)

    def dpotential(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.gamma == 1.0:
            return self.a * (np.log(rho) + 1)
        return self.a * self.gamma / (self.gamma - 1) * np.power(rho, self.gamma - 1)

    def to_dict(self):
        return {"kind": "gamma", "a": self.a, "gamma": self.gamma}

    def __repr__(self):
        return f"PressureLaw(a={self.a}, gamma={self.gamma})"
