"""Symbolic density specifications with declared bounds.

Densities are closed under sums, clamping, sign-stripe modulation and
disc-averaging, which covers every right-hand side the experiments use.
Each spec carries declared bounds ``(lam, big)``; whether the bounds
actually hold on a given domain can be asserted by dense sampling.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import ConvexPolygon, polygon_integrate


class DensitySpec:
    """Evaluatable density with declared lower/upper bounds."""

    def __init__(self, kind: str, params: dict, lam: float, big: float):
        self.kind = kind
        self.params = params
        self.lam = float(lam)
        self.big = float(big)

    # -- constructors --------------------------------------------------------

    @staticmethod
    def constant(c: float) -> "DensitySpec":
        return DensitySpec("constant", {"c": float(c)}, c, c)

    @staticmethod
    def bump(center, amplitude: float, width: float) -> "DensitySpec":
        """Gaussian bump ``amp * exp(-|x-c|^2 / (2 w^2))``; infimum 0."""
        c = np.asarray(center, dtype=float)
        return DensitySpec(
            "bump",
            {"center": c, "amplitude": float(amplitude), "width": float(width)},
            min(0.0, amplitude), max(0.0, amplitude),
        )

    @staticmethod
    def mixture(components) -> "DensitySpec":
        comps = list(components)
        if not comps:
            raise ConfigError("mixture needs at least one component")
        return DensitySpec(
            "mixture", {"components": comps},
            sum(c.lam for c in comps), sum(c.big for c in comps),
        )

    @staticmethod
    def clamped(base: "DensitySpec", lam: float, big: float) -> "DensitySpec":
        if not (0 <= lam <= big):
            raise ConfigError("clamp bounds must satisfy 0 <= lam <= big")
        return DensitySpec("clamped", {"base": base}, lam, big)

    @staticmethod
    def striped(base: "DensitySpec", amplitude: float, frequency: float) -> "DensitySpec":
        """Multiply by ``1 + a * sign(sin(freq * pi * x1))``."""
        a = float(amplitude)
        if not 0 <= a < 1:
            raise ConfigError("stripe amplitude must be in [0, 1)")
        return DensitySpec(
            "striped",
            {"base": base, "amplitude": a, "frequency": float(frequency)},
            base.lam * (1.0 - a), base.big * (1.0 + a),
        )

    @staticmethod
    def mollified(base: "DensitySpec", radius: float) -> "DensitySpec":
        """Average of the base over discs of the given radius (fixed
        8-angle x 4-radius polar rule; deterministic)."""
        if radius <= 0:
            raise ConfigError("mollification radius must be positive")
        return DensitySpec("mollified", {"base": base, "radius": float(radius)},
                           base.lam, base.big)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k, p = self.kind, self.params
        if k == "constant":
            return np.full(len(pts), p["c"])
        if k == "bump":
            d2 = np.sum((pts - p["center"]) ** 2, axis=1)
            return p["amplitude"] * np.exp(-d2 / (2.0 * p["width"] ** 2))
        if k == "mixture":
            return np.sum([c(pts) for c in p["components"]], axis=0)
        if k == "clamped":
            return np.clip(p["base"](pts), self.lam, self.big)
        if k == "striped":
            mod = 1.0 + p["amplitude"] * np.sign(np.sin(p["frequency"] * np.pi * pts[:, 0]))
            return p["base"](pts) * mod
        if k == "mollified":
            return self._disc_average(pts)
        raise ConfigError(f"unknown density form {k!r}")

    def _disc_average(self, pts: np.ndarray) -> np.ndarray:
        base, r = self.params["base"], self.params["radius"]
        # Midpoint rings in r^2 are exact for radially linear integrands
        # and deterministic; good enough for a proxy of the disc average.
        n_ang, n_rad = 8, 4
        ang = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        rad = r * np.sqrt((np.arange(n_rad) + 0.5) / n_rad)
        offs = np.array([[rr * np.cos(a), rr * np.sin(a)] for rr in rad for a in ang])
        acc = np.zeros(len(pts))
        for o in offs:
            acc += base(pts + o)
        return acc / len(offs)

    # -- checks and integrals --------------------------------------------------

    def validate_on(self, domain: ConvexPolygon, n_samples: int = 10_000,
                    seed: int = 0, slack: float = 1e-9):
        """Assert the declared bounds hold on a dense sample of the domain."""
        if self.lam <= 0:
            raise ConfigError("density lower bound must be positive for solves")
        rng = np.random.default_rng(seed)
        lo, hi = domain.bounding_box()
        pts = rng.uniform(lo, hi, size=(4 * n_samples, 2))
        pts = pts[domain.contains(pts)][:n_samples]
        vals = self(pts)
        pad = slack * max(1.0, abs(self.big))
        if np.min(vals) < self.lam - pad or np.max(vals) > self.big + pad:
            raise ConfigError(
                f"density leaves its declared bounds [{self.lam}, {self.big}]"
                f" (observed [{np.min(vals):.6g}, {np.max(vals):.6g}])"
            )

    def integrate(self, region: ConvexPolygon, rel_tol: float = 1e-10) -> float:
        return polygon_integrate(self, region, order=6, rel_tol=rel_tol)


# -- spec-string grammar ------------------------------------------------------
#
#   const:c
#   bump:cx,cy,amp,w
#   mix:spec;spec;...
#   clamp:spec,lam,big

def parse_density(spec: str) -> DensitySpec:
    s = spec.strip()
    head, _, rest = s.partition(":")
    head = head.strip().lower()
    try:
        if head == "const":
            return DensitySpec.constant(float(rest))
        if head == "bump":
            cx, cy, amp, w = (float(t) for t in rest.split(","))
            return DensitySpec.bump((cx, cy), amp, w)
        if head == "mix":
            return DensitySpec.mixture(parse_density(t) for t in rest.split(";") if t.strip())
        if head == "clamp":
            body, lam, big = rest.rsplit(",", 2)
            return DensitySpec.clamped(parse_density(body), float(lam), float(big))
        if head == "stripe":
            body, amp, freq = rest.rsplit(",", 2)
            return DensitySpec.striped(parse_density(body), float(amp), float(freq))
        if head == "mollify":
            body, radius = rest.rsplit(",", 1)
            return DensitySpec.mollified(parse_density(body), float(radius))
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad density spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown density form in spec {spec!r}")
