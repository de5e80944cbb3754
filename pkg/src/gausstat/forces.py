"""
Potential energy, its derivatives, and the nongradient driving field.

The pair potential is

    phi(r) = eps * (1 - (r/rc)**2)**4    for r < rc,   0 otherwise,

which is smooth, bounded by ``eps`` and compactly supported, so the total
potential of N particles lies in ``[0, eps*N*(N-1)/2]``.

The driving field is a constant vector per particle. With
``charges="alternating"`` particle i carries the field times (-1)**i, a
colour field that does not push the centre of mass.

A ``gauge_shift`` g moves the linear potential ``g.q`` into V and its
gradient into the field, leaving the total force unchanged.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

__all__ = [
    "ForceFieldSpec", "EnergyReport", "pair_potential", "total_potential",
    "grad_V", "hessian_V", "xi_at", "total_force", "energies",
]


@dataclass(frozen=True)
class ForceFieldSpec:
    pair_epsilon: float = 1.0
    pair_range: float = 1.0
    xi: tuple = ()
    charges: object = "uniform"
    gauge_shift: object = None
    cells: int = -1

    def __post_init__(self):
        if self.pair_epsilon < 0:
            raise ValueError("pair_epsilon must be >= 0")
        if self.pair_range <= 0:
            raise ValueError("pair_range must be > 0")
        object.__setattr__(self, "xi", tuple(float(x) for x in np.atleast_1d(self.xi)))
        if not isinstance(self.charges, str):
            object.__setattr__(self, "charges", tuple(float(c) for c in self.charges))
        if self.gauge_shift is not None:
            g = np.asarray(self.gauge_shift, dtype=float)
            object.__setattr__(self, "gauge_shift", tuple(map(tuple, np.atleast_2d(g))))

    @property
    def field_magnitude(self):
        return float(np.linalg.norm(self.xi)) if self.xi else 0.0

    def charge_vector(self, n):
        if isinstance(self.charges, str):
            if self.charges == "uniform":
                return np.ones(n)
            if self.charges == "alternating":
                return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
            raise ValueError(f"unknown charges {self.charges!r}")
        c = np.asarray(self.charges, dtype=float)
        if c.shape != (n,):
            raise ValueError(f"need {n} charges, got shape {c.shape}")
        return c

    def field_arrays(self, spec):
        """(xi_force, gauge) as N x d arrays for this system."""
        n, d = spec.n_particles, spec.dim
        if self.xi and any(self.xi):
            field = np.zeros(d)
            field[: len(self.xi)] = self.xi
            if len(self.xi) > d:
                raise ValueError(f"xi has {len(self.xi)} components for d={d}")
            xi = self.charge_vector(n)[:, None] * field[None, :]
        else:
            xi = np.zeros((n, d))
        if self.gauge_shift is None:
            g = np.zeros((n, d))
        else:
            g = np.broadcast_to(np.asarray(self.gauge_shift, dtype=float), (n, d)).copy()
        return np.ascontiguousarray(xi), np.ascontiguousarray(g)

    def check(self, spec):
        if self.pair_epsilon > 0 and spec.torus_dims > 0:
            lmin = spec.box[spec.wall_dims:].min()
            if self.pair_range >= lmin / 2:
                raise ValueError(
                    f"pair_range {self.pair_range} must be below half the smallest "
                    f"periodic box length ({lmin})")

    def max_potential(self, n):
        return self.pair_epsilon * n * (n - 1) / 2.0


@dataclass(frozen=True)
class EnergyReport:
    V: float
    K: float
    H: float


def pair_potential(r, eps=1.0, rc=1.0):
    r = np.asarray(r, dtype=float)
    u = np.clip(1.0 - (r / rc) ** 2, 0.0, None)
    out = eps * u ** 4
    return float(out) if out.ndim == 0 else out


def _pair(x, spec, ff, method="auto"):
    cells = {"auto": ff.cells, "direct": 0, "cells": 1}[method]
    F = np.zeros_like(x.q)
    V = K.pair_forces(x.q, spec.box, spec.wall_dims, float(ff.pair_epsilon),
                      float(ff.pair_range), F, cells)
    return V, F


def total_potential(x, spec, ff, method="auto"):
    V, _ = _pair(x, spec, ff, method)
    _, g = ff.field_arrays(spec)
    return V + float(np.sum(g * x.q))


def grad_V(x, spec, ff, method="auto"):
    """Gradient dV/dq (the force is its negative), shape N x d."""
    _, F = _pair(x, spec, ff, method)
    _, g = ff.field_arrays(spec)
    return -F + g


def hessian_V(x, spec, ff):
    D = x.q.size
    H = np.zeros((D, D))
    K.pair_hessian(x.q, spec.box, spec.wall_dims, float(ff.pair_epsilon),
                   float(ff.pair_range), H)
    return H


def xi_at(x, spec, ff):
    xi, g = ff.field_arrays(spec)
    return xi + g


def total_force(x, spec, ff, method="auto"):
    """-dV/dq + xi. The gauge shift cancels and is left out."""
    _, F = _pair(x, spec, ff, method)
    xi, _ = ff.field_arrays(spec)
    return F + xi


def energies(x, spec, ff):
    V = total_potential(x, spec, ff)
    kin = x.p2() / (2.0 * spec.mass)
    return EnergyReport(V=V, K=kin, H=kin + V)
