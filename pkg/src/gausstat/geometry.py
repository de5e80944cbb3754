"""
Configuration-space geometry for a box with walls in the first ``u``
dimensions and periodic (torus) boundaries in the remaining ``v``.

Coordinates along wall dimensions live in ``[0, L]`` and are kept there by
elastic reflection; coordinates along torus dimensions live in ``[0, L)``.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SystemSpec:
    wall_dims: int
    torus_dims: int
    box_lengths: tuple
    n_particles: int
    mass: float = 1.0

    def __post_init__(self):
        box = tuple(float(b) for b in np.atleast_1d(self.box_lengths))
        if len(box) == 1 and self.dim > 1:
            box = box * self.dim
        object.__setattr__(self, "box_lengths", box)
        if self.wall_dims < 0 or self.torus_dims < 0 or self.dim < 1:
            raise ValueError("need u >= 0, v >= 0 and u + v >= 1")
        if len(box) != self.dim:
            raise ValueError(f"expected {self.dim} box lengths, got {len(box)}")
        if min(box) <= 0:
            raise ValueError("box lengths must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")

    @property
    def dim(self):
        return self.wall_dims + self.torus_dims

    @property
    def box(self):
        return np.asarray(self.box_lengths, dtype=float)

    @property
    def wall_mask(self):
        """Boolean mask over dimensions, True where the boundary is a wall."""
        return np.arange(self.dim) < self.wall_dims

    @property
    def volume(self):
        return float(np.prod(self.box))

    @classmethod
    def at_density(cls, n_particles, density, wall_dims=0, torus_dims=2, mass=1.0):
        """Cubic box holding ``n_particles`` at number density ``density``."""
        d = wall_dims + torus_dims
        side = (n_particles / density) ** (1.0 / d)
        return cls(wall_dims, torus_dims, (side,) * d, n_particles, mass)


@dataclass
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=float)
        self.p = np.ascontiguousarray(self.p, dtype=float)
        if self.q.ndim == 1:
            self.q = self.q.reshape(-1, 1)
        if self.p.ndim == 1:
            self.p = self.p.reshape(-1, 1)
        if self.q.shape != self.p.shape:
            raise ValueError(f"q {self.q.shape} and p {self.p.shape} differ in shape")

    def copy(self):
        return PhasePoint(self.q.copy(), self.p.copy())

    @property
    def n_particles(self):
        return self.q.shape[0]

    def p2(self):
        return float(np.dot(self.p.ravel(), self.p.ravel()))


def wrap_torus(q, spec):
    """Map torus coordinates into ``[0, L)``; wall coordinates pass through."""
    q = np.array(q, dtype=float, copy=True)
    shape = q.shape
    q = q.reshape(-1, spec.dim)
    box = spec.box
    for k in range(spec.wall_dims, spec.dim):
        q[:, k] = np.mod(q[:, k], box[k])
        # np.mod can return L itself for tiny negative inputs
        q[q[:, k] >= box[k], k] = 0.0
    return q.reshape(shape)


def minimum_image(dq, spec):
    """Shortest periodic image of a displacement, torus parts in ``(-L/2, L/2]``."""
    dq = np.array(dq, dtype=float, copy=True)
    shape = dq.shape
    dq = dq.reshape(-1, spec.dim)
    box = spec.box
    for k in range(spec.wall_dims, spec.dim):
        L = box[k]
        dq[:, k] = dq[:, k] - L * np.ceil(dq[:, k] / L - 0.5)
    return dq.reshape(shape)


def reflect(p, n):
    """Specular reflection ``p - 2 (p.n) n`` for a unit wall normal ``n``."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    return p - 2.0 * np.dot(p, n) * n
