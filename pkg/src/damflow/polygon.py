"""Octagonal dam cross-sections: side lengths, admissibility, vertex geometry."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Polygon data violating the sign rule, the closure identity or an isthmus inequality."""

    def __init__(self, message: str, rule: str):
        super().__init__(message)
        self.rule = rule


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str


@dataclass(frozen=True)
class PolygonSpec:
    """Signed sides H1..H5 (i^s H_s = w_{s+1} - w_s) and channel widths H+, H-."""

    H: tuple[float, float, float, float, float]
    H_plus: float
    H_minus: float

    def __post_init__(self):
        object.__setattr__(self, "H", tuple(float(h) for h in self.H))
        object.__setattr__(self, "H_plus", float(self.H_plus))
        object.__setattr__(self, "H_minus", float(self.H_minus))
        if len(self.H) != 5:
            raise ValueError("need five side lengths H1..H5")

    @classmethod
    def from_closure(cls, H, H_plus: float) -> "PolygonSpec":
        """Fill in H- from the closure identity H+ + H1 - H3 + H5 = H-."""
        H = tuple(float(h) for h in H)
        return cls(H, H_plus, H_plus + H[0] - H[2] + H[4])

    def violations(self, tol: float = 1e-9) -> list[Violation]:
        H1, H2, H3, H4, H5 = self.H
        hp, hm = self.H_plus, self.H_minus
        out = []
        if not (H1 < 0 and H4 < 0):
            out.append(Violation("sign", "H1 and H4 must be negative"))
        if not (H2 > 0 and H3 > 0 and H5 > 0):
            out.append(Violation("sign", "H2, H3 and H5 must be positive"))
        if not (hp > 0 and hm > 0):
            out.append(Violation("sign", "channel widths H+ and H- must be positive"))
        scale = max(1.0, max(abs(v) for v in (*self.H, hp, hm)))
        if abs(hp + H1 - H3 + H5 - hm) > tol * scale:
            out.append(Violation("closure", "H+ + H1 - H3 + H5 = H- does not hold"))
        if not hp + H1 > 0:
            out.append(Violation("isthmus-1", "H+ + H1 > 0 violated"))
        if not hp + H1 - H3 > 0:
            out.append(Violation("isthmus-2", "H+ + H1 - H3 > 0 violated"))
        return out

    def validate(self) -> "PolygonSpec":
        v = self.violations()
        if v:
            raise GeometryError("; ".join(x.message for x in v), v[0].rule)
        return self

    @property
    def is_admissible(self) -> bool:
        return not self.violations()

    def vector(self) -> np.ndarray:
        return np.array([*self.H, self.H_plus, self.H_minus])

    @classmethod
    def from_vector(cls, v) -> "PolygonSpec":
        v = [float(t) for t in v]
        return cls(tuple(v[:5]), v[5], v[6])

    def scaled(self, s: float) -> "PolygonSpec":
        return PolygonSpec.from_vector(s * self.vector())

    def vertices(self) -> np.ndarray:
        """w1..w6 with w1 = 0."""
        w = [0j]
        for s, h in enumerate(self.H, start=1):
            w.append(w[-1] + (1j ** s) * h)
        return np.array(w)

    def bed_level(self) -> float:
        return -self.H_plus

    def outline(self, reach: float | None = None) -> np.ndarray:
        """Closed polygon with the channels truncated `reach` beyond the dam footprint."""
        w = self.vertices()
        xmin, xmax = w.real.min(), w.real.max()
        if reach is None:
            reach = 1.5 * (xmax - xmin)
        bed = self.bed_level()
        east, west = xmax + reach, xmin - reach
        pts = [complex(west, bed), complex(east, bed), complex(east, 0.0), *w,
               complex(west, w[-1].imag)]
        return np.array(pts)

    def contains(self, z, reach: float | None = None, strict: bool = True) -> np.ndarray:
        """Point-in-polygon for the (truncated) domain."""
        from matplotlib.path import Path

        poly = self.outline(reach if reach is not None else 1e6)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        path = Path(np.c_[poly.real, poly.imag])
        rad = -1e-12 if strict else 1e-12
        # matplotlib's radius sign depends on orientation; the outline is counterclockwise
        return path.contains_points(np.c_[z.real, z.imag], radius=rad)

    def fingerprint(self, digits: int = 10) -> str:
        key = ",".join(f"{v:.{digits}g}" for v in self.vector())
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def random_spec(rng: np.random.Generator, margin: float = 0.2, slenderness: float = 2.5) -> PolygonSpec:
    """A random admissible octagon with H+ = 1 and bounded crowding.

    The gap under the dam (H+ + H1 - H3) is at least ``margin`` and the dam
    bottom |H4| at most ``slenderness`` gaps long; preimages separate roughly
    like exp(pi |H4| / gap), so longer, thinner gaps push the branch points
    beyond what double precision resolves.
    """
    hp = 1.0
    H1 = -rng.uniform(0.1, 0.6)
    H3 = rng.uniform(0.1, hp + H1 - margin)
    gap = hp + H1 - H3
    H = (H1, rng.uniform(0.2, 1.0), H3, -rng.uniform(0.1, min(0.8, slenderness * gap)), rng.uniform(0.2, 1.0))
    return PolygonSpec.from_closure(H, hp)


P_TEST = PolygonSpec((-1.0, 1.0, 1.0, -1.0, 2.0), 3.0, 3.0)
