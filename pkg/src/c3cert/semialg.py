"""Semi-algebraic sets ``{x : h_i(x) >= 0}``, boxes, and deterministic sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .polyalg import Polynomial, PolynomialError, const, parse, var

__all__ = [
    "SemiAlgebraicSet",
    "ProductSet",
    "SamplingError",
    "splitmix_uniform",
    "set_difference_as_regions",
]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class SamplingError(RuntimeError):
    pass


def splitmix_uniform(seed: int, start: int, count: int) -> np.ndarray:
    """Counter-based splitmix64 stream: draws ``start .. start+count-1`` in [0, 1).

    Draw ``k`` depends only on ``(seed, k)``, so any slice of the stream can be
    regenerated independently.
    """
    with np.errstate(over="ignore"):
        k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + k * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class SemiAlgebraicSet:
    variables: tuple[str, ...]
    inequalities: tuple[Polynomial, ...]
    bbox: tuple[tuple[float, float], ...] | None = None
    is_box: bool = False
    name: str = ""

    @classmethod
    def box(cls, variables: Sequence[str], bounds: Sequence[Sequence[float]], name: str = "") -> "SemiAlgebraicSet":
        variables = tuple(variables)
        if len(variables) != len(bounds):
            raise ValueError("one [lo, hi] pair per variable required")
        ineqs = []
        bb = []
        for v, (lo, hi) in zip(variables, bounds):
            lo, hi = float(lo), float(hi)
            if lo > hi:
                raise ValueError(f"empty interval for {v}: [{lo}, {hi}]")
            ineqs.append(var(v) - lo)
            ineqs.append(const(hi) - var(v))
            bb.append((lo, hi))
        return cls(variables, tuple(ineqs), tuple(bb), True, name)

    @classmethod
    def from_strings(cls, variables: Sequence[str], ineqs: Sequence[str], bbox=None, name: str = "") -> "SemiAlgebraicSet":
        polys = tuple(parse(s) for s in ineqs)
        extra = {v for p in polys for v in p.variables} - set(variables)
        if extra:
            raise PolynomialError(f"inequalities mention undeclared variables {sorted(extra)}")
        bb = tuple((float(lo), float(hi)) for lo, hi in bbox) if bbox is not None else None
        return cls(tuple(variables), polys, bb, False, name)

    @property
    def dim(self) -> int:
        return len(self.variables)

    def _bind(self, pt) -> dict[str, float]:
        if isinstance(pt, Mapping):
            return dict(pt)
        if len(pt) != self.dim:
            raise PolynomialError(f"point has {len(pt)} coordinates, set has {self.dim}")
        return dict(zip(self.variables, pt))

    def contains(self, pt, tol: float = 0.0) -> bool:
        env = self._bind(pt)
        for v in self.variables:
            if v not in env:
                raise PolynomialError(f"unbound variable {v!r}")
        return all(h.eval(env) >= -tol for h in self.inequalities)

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Membership mask for an ``(N, dim)`` array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_box:
            lo = np.array([b[0] for b in self.bbox])
            hi = np.array([b[1] for b in self.bbox])
            return np.all((points >= lo - tol) & (points <= hi + tol), axis=1)
        env = {v: points[:, i] for i, v in enumerate(self.variables)}
        mask = np.ones(points.shape[0], dtype=bool)
        for h in self.inequalities:
            mask &= h.eval_many(env) >= -tol
        return mask

    def rename(self, mapping: Mapping[str, str], name: str | None = None) -> "SemiAlgebraicSet":
        return SemiAlgebraicSet(
            tuple(mapping.get(v, v) for v in self.variables),
            tuple(h.rename(mapping) for h in self.inequalities),
            self.bbox,
            self.is_box,
            self.name if name is None else name,
        )

    def with_prefix(self, prefix: str) -> "SemiAlgebraicSet":
        """Copy of the set over variables ``prefix1, prefix2, ...``."""
        return self.rename({v: f"{prefix}{i + 1}" for i, v in enumerate(self.variables)})

    def sample(self, n: int, seed: int, strategy: str = "uniform") -> np.ndarray:
        """Deterministic points inside the set as an ``(N, dim)`` array."""
        if self.bbox is None:
            raise SamplingError("set has no bounding box")
        lo = np.array([b[0] for b in self.bbox])
        hi = np.array([b[1] for b in self.bbox])
        if strategy == "grid":
            k = max(1, int(np.floor(n ** (1.0 / self.dim) + 1e-9)))
            axes = [np.linspace(a, b, k) if k > 1 else np.array([(a + b) / 2]) for a, b in zip(lo, hi)]
            mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
            return mesh[self.contains_many(mesh)]
        if strategy != "uniform":
            raise ValueError(f"unknown sampling strategy {strategy!r}")
        if n <= 0:
            return np.zeros((0, self.dim))
        accepted: list[np.ndarray] = []
        got, drawn, cursor = 0, 0, 0
        batch = max(1024, 4 * n)
        while got < n:
            u = splitmix_uniform(seed, cursor, batch * self.dim).reshape(batch, self.dim)
            cursor += batch * self.dim
            pts = lo + u * (hi - lo)
            ok = pts[self.contains_many(pts)]
            accepted.append(ok)
            got += ok.shape[0]
            drawn += batch
            if drawn >= 1_000_000 and got / drawn < 1e-4:
                raise SamplingError("set too thin for sampling")
            batch = min(batch * 2, 1 << 18)
        return np.concatenate(accepted)[:n]


@dataclass(frozen=True)
class ProductSet:
    """Cartesian product of sets over disjoint variable blocks."""

    factors: tuple[SemiAlgebraicSet, ...]
    name: str = ""

    def __post_init__(self):
        seen: set[str] = set()
        for f in self.factors:
            if seen & set(f.variables):
                raise ValueError("product factors must use disjoint variables")
            seen |= set(f.variables)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for f in self.factors for v in f.variables)

    @property
    def inequalities(self) -> tuple[Polynomial, ...]:
        return tuple(h for f in self.factors for h in f.inequalities)

    @property
    def bbox(self):
        if any(f.bbox is None for f in self.factors):
            return None
        return tuple(b for f in self.factors for b in f.bbox)

    def contains(self, pt, tol: float = 0.0) -> bool:
        env = dict(pt) if isinstance(pt, Mapping) else dict(zip(self.variables, pt))
        return all(f.contains(env, tol) for f in self.factors)

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        mask = np.ones(points.shape[0], dtype=bool)
        col = 0
        for f in self.factors:
            mask &= f.contains_many(points[:, col:col + f.dim], tol)
            col += f.dim
        return mask

    def sample(self, n: int, seed: int) -> np.ndarray:
        cols = [f.sample(n, seed + 7919 * i) for i, f in enumerate(self.factors)]
        return np.concatenate(cols, axis=1)


def set_difference_as_regions(a: SemiAlgebraicSet, b: SemiAlgebraicSet) -> list[SemiAlgebraicSet]:
    """Cover ``a \\ b`` by disjoint axis slabs (``b`` must be a box).

    Slab ``(i, side)`` keeps coordinates before ``i`` inside ``b``, puts
    coordinate ``i`` below or above ``b``, and leaves later coordinates free.
    Slabs are closed, so neighbours share faces.
    """
    if not b.is_box or a.bbox is None:
        raise NotImplementedError("set difference is only supported when subtracting a box")
    if tuple(a.variables) != tuple(b.variables):
        raise ValueError("sets must share variables")
    abox = list(a.bbox)
    bbox = [(max(lo, alo), min(hi, ahi)) for (lo, hi), (alo, ahi) in zip(b.bbox, abox)]
    if any(lo > hi for lo, hi in bbox):
        return [a]
    regions = []
    for i in range(a.dim):
        for side in ("lo", "hi"):
            alo, ahi = abox[i]
            blo, bhi = bbox[i]
            if side == "lo" and blo > alo:
                piece = (alo, blo)
            elif side == "hi" and bhi < ahi:
                piece = (bhi, ahi)
            else:
                continue
            bounds = bbox[:i] + [piece] + abox[i + 1:]
            region = SemiAlgebraicSet.box(a.variables, bounds, name=f"{a.name}-minus-{b.name}[{len(regions)}]")
            if not a.is_box:
                region = SemiAlgebraicSet(
                    a.variables, region.inequalities + a.inequalities, tuple(bounds), False, region.name
                )
            regions.append(region)
    return regions
