"""Density and domain sequences for the stability experiments."""
from __future__ import annotations

import numpy as np

from .density import DensitySpec
from .errors import ConfigError
from .geometry import ConvexPolygon


def gen_density_sequence(base: DensitySpec, kind: str, k: int,
                         bump_center=(0.35, -0.25), bump_amplitude: float = 0.4,
                         bump_width: float = 0.3, stripe_amplitude: float = 0.3,
                         lam: float = None, big: float = None) -> DensitySpec:
    """k-th element of a density sequence converging (or not) to the base.

    decaying            base + 2^-k * bump  (strong L1, geometric rate)
    oscillatory_control base * (1 + a sign(sin(2^k pi x1)))  (weak-* only)
    mollified           base averaged over radius-2^-k discs

    When explicit caps (lam, big) are given the result is clamped to
    them; a cap below the base's own lower bound is a config error.
    """
    if k < 0:
        raise ConfigError("sequence index must be nonnegative")
    if kind == "decaying":
        bump = DensitySpec.bump(bump_center, bump_amplitude * 2.0 ** (-k), bump_width)
        out = DensitySpec.mixture([base, bump])
    elif kind == "oscillatory_control":
        out = DensitySpec.striped(base, stripe_amplitude, 2.0 ** k)
    elif kind == "mollified":
        out = DensitySpec.mollified(base, 2.0 ** (-k))
    else:
        raise ConfigError(f"unknown density sequence kind {kind!r}")
    if lam is not None or big is not None:
        lam = out.lam if lam is None else lam
        big = out.big if big is None else big
        if lam > base.lam or big < base.lam:
            raise ConfigError("clamp caps would cut into the base density")
        if out.lam < lam or out.big > big:
            out = DensitySpec.clamped(out, lam, big)
    return out


def decaying_perturbation(k: int, bump_center=(0.35, -0.25),
                          bump_amplitude: float = 0.4,
                          bump_width: float = 0.3) -> DensitySpec:
    """The additive term of the decaying sequence, for analytic laws."""
    return DensitySpec.bump(bump_center, bump_amplitude * 2.0 ** (-k), bump_width)


def gen_domain_sequence(limit: ConvexPolygon, k: int) -> ConvexPolygon:
    """Dilation of the limit domain about its centroid by 1 + 2^-k.

    The Hausdorff distance to the limit is exactly ``2^-k`` times the
    largest vertex distance from the centroid.
    """
    if k < 0:
        raise ConfigError("sequence index must be nonnegative")
    return limit.dilate(1.0 + 2.0 ** (-k))


def dilation_hausdorff(limit: ConvexPolygon, k: int) -> float:
    """Closed-form Hausdorff distance of the k-th dilation to the limit."""
    c = limit.centroid()
    r = float(np.max(np.linalg.norm(limit.vertices - c, axis=1)))
    return 2.0 ** (-k) * r
