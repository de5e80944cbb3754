"""
Friction coefficients of the Gaussian thermostats.

All inner products run over the flattened N*d arrays in particle-major
order.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import ZeroMomentum
from .forces import ForceFieldSpec, grad_V, total_force, xi_at

__all__ = [
    "ThermostatMode", "alpha_ik", "alpha_ie", "alpha_generalized", "alpha_for",
]

KINDS = {"IK": K.IK, "IE": K.IE, "generalized": K.GENERALIZED, "constant": K.CONSTANT}
ZERO_P2 = K.ZERO_P2


@dataclass(frozen=True)
class ThermostatMode:
    """
    ``kind`` is one of ``"IK"``, ``"IE"``, ``"generalized"`` or
    ``"constant"``. The generalized mode holds ``p**2/(2*mtilde) + Vt``
    fixed, where Vt is the pair potential with strength ``vtilde_epsilon``
    and range ``vtilde_range``.
    """

    kind: str = "IK"
    alpha_const: float = 0.0
    mtilde: float = 1.0
    vtilde_epsilon: float = 0.0
    vtilde_range: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown thermostat kind {self.kind!r}")
        if self.kind == "constant" and not self.alpha_const > 0:
            raise ValueError("constant alpha must be > 0")
        if self.mtilde <= 0:
            raise ValueError("mtilde must be > 0")

    @property
    def code(self):
        return KINDS[self.kind]

    @classmethod
    def constant(cls, alpha):
        return cls("constant", alpha_const=alpha)

    def vtilde(self):
        return ForceFieldSpec(self.vtilde_epsilon, self.vtilde_range)


def _flat(a):
    return np.asarray(a, dtype=float).ravel()


def _p2(p):
    p2 = float(np.dot(p, p))
    if p2 < ZERO_P2:
        raise ZeroMomentum(f"p^2 = {p2:g}; the friction coefficient is undefined")
    return p2


def alpha_ik(F_total, p):
    """Isokinetic friction (F.p)/(p.p) with F = -dV/dq + xi."""
    p = _flat(p)
    return float(np.dot(_flat(F_total), p)) / _p2(p)


def alpha_ie(xi, p):
    """Isoenergetic friction (xi.p)/(p.p)."""
    p = _flat(p)
    return float(np.dot(_flat(xi), p)) / _p2(p)


def alpha_generalized(grad_V, grad_Vt, xi, p, m, mt):
    """Friction that holds ``p**2/(2 mt) + Vt`` fixed."""
    p = _flat(p)
    p2 = _p2(p)
    combo = (mt / m) * _flat(grad_Vt) - _flat(grad_V) + _flat(xi)
    return float(np.dot(combo, p)) / p2


def alpha_for(mode, x, spec, ff):
    if mode.kind == "constant":
        return mode.alpha_const
    if mode.kind == "IK":
        return alpha_ik(total_force(x, spec, ff), x.p)
    if mode.kind == "IE":
        return alpha_ie(xi_at(x, spec, ff), x.p)
    return alpha_generalized(grad_V(x, spec, ff), grad_V(x, spec, mode.vtilde()),
                             xi_at(x, spec, ff), x.p, spec.mass, mode.mtilde)
