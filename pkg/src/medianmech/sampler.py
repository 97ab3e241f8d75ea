"""Approximately uniform sampling from consistent polytopes.

Hit-and-run over the explicit halfspace system, after an affine rescale of
each coordinate by a bounding-box upper so the walk sees a roughly unit box.
The stepping loop is the hot path; a compiled kernel is used when available
and a NumPy fallback otherwise (see `backend_name`).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import DegeneratePolytopeError
from .polytope import ConsistentPolytope, interior_point

_CHORD_MARGIN = 1e-7   # relative shrink keeping recorded points strictly interior
_DIR_REL_TOL = 1e-12   # constraint-evaluation tolerance inside the walk
_BLOCK_STEPS = 1024


def load_backend(name: str | None = None):
    """Return (kernel module, backend name); name forces a specific backend.

    With no explicit name, the MEDIANMECH_BACKEND environment variable is
    honored, then the compiled kernel is preferred over the NumPy fallback.
    """
    if name is None:
        name = os.environ.get("MEDIANMECH_BACKEND") or None
    if name in (None, "compiled"):
        try:
            from . import _hitrun
            return _hitrun, "compiled"
        except ImportError:
            if name == "compiled":
                raise
    if name in (None, "python"):
        from . import _hitrun_py
        return _hitrun_py, "python"
    raise ValueError(f"unknown backend {name!r}")


_DEFAULT_KERNEL, _DEFAULT_NAME = load_backend()


def backend_name() -> str:
    """Which stepping kernel this process selected at import."""
    return _DEFAULT_NAME


@dataclass(frozen=True)
class WalkConfig:
    """Chain schedule; None fields resolve against the dimension at run time."""

    burn_in: int | None = None
    thinning: int | None = None
    chains: int = 4

    def resolve(self, dim: int) -> tuple[int, int, int]:
        burn = 50 * dim if self.burn_in is None else self.burn_in
        thin = 5 * dim if self.thinning is None else self.thinning
        if burn < 0 or thin < 1 or self.chains < 1:
            raise ValueError("need burn_in >= 0, thinning >= 1, chains >= 1")
        return burn, thin, self.chains


def sample_uniform(p: ConsistentPolytope, count: int,
                   walk_config: WalkConfig | None = None,
                   rng: np.random.Generator | None = None,
                   start: np.ndarray | None = None,
                   backend: str | None = None) -> np.ndarray:
    """Draw `count` approximately uniform points from the polytope.

    Runs `chains` parallel chains from a strictly interior start and merges
    records by chain index. Raises DegeneratePolytopeError when the polytope
    is infeasible or measure-zero.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    kernel, _ = (_DEFAULT_KERNEL, _DEFAULT_NAME) if backend is None \
        else load_backend(backend)
    x0 = np.asarray(start, dtype=float) if start is not None else interior_point(p)

    upper = p.bounding_box_upper()
    if (upper <= 1e-12 * max(1.0, p.m)).any():
        raise DegeneratePolytopeError("polytope is measure-zero along a coordinate")
    a, b = p.halfspaces()
    a_scaled = np.ascontiguousarray(a * upper[None, :])
    y0 = x0 / upper

    dim = p.domain_size
    burn, thin, chains = (walk_config or WalkConfig()).resolve(dim)
    slabs = math.ceil(count / chains)
    x = np.tile(y0, (chains, 1))
    ax = x @ a_scaled.T
    out = np.empty((slabs, chains, dim))
    dir_tol = _DIR_REL_TOL * np.linalg.norm(a_scaled, axis=1)

    countdown = burn + thin
    written = 0
    while written < slabs:
        steps_left = countdown + (slabs - written - 1) * thin
        steps = min(_BLOCK_STEPS, steps_left)
        normals = rng.standard_normal((steps, chains, dim))
        uniforms = rng.random((steps, chains))
        countdown, recorded = kernel.advance(
            a_scaled, b, x, ax, normals, uniforms, dir_tol, _CHORD_MARGIN,
            countdown, thin, out, written)
        written += recorded
        np.matmul(x, a_scaled.T, out=ax)  # reset accumulated drift per block
    samples = out.reshape(slabs * chains, dim) * upper[None, :]
    return samples[:count]
