"""Lattice geometry, jump rates and reference-frame configurations.

Sites are integer tuples.  On a torus of even side ``L`` every site is
reduced to the centered box ``(-L/2, L/2]^d``; the occupancy array is
indexed by ``x mod L`` so the tagged particle sits at array index 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

Site = tuple[int, ...]


def unit_vector(d: int, axis: int, sign: int = 1) -> Site:
    return tuple(sign if k == axis else 0 for k in range(d))


def neg(x: Site) -> Site:
    return tuple(-c for c in x)


def add(x: Site, y: Site) -> Site:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Site, y: Site) -> Site:
    return tuple(a - b for a, b in zip(x, y))


def norm(x: Site) -> float:
    return math.sqrt(sum(c * c for c in x))


def _det2(u: Site, v: Site) -> int:
    return u[0] * v[1] - u[1] * v[0]


def generates_lattice(vectors: Sequence[Site], d: int) -> bool:
    """True when the integer span of ``vectors`` is all of Z^d.

    The span is Z^d iff the gcd of the d x d minors equals 1.
    """
    vecs = [tuple(v) for v in vectors]
    if not vecs:
        return False
    if d == 1:
        return reduce(math.gcd, (abs(v[0]) for v in vecs)) == 1
    if d == 2:
        minors = [abs(_det2(u, v)) for u, v in combinations(vecs, 2)]
        return bool(minors) and reduce(math.gcd, minors) == 1
    raise ValueError(f"unsupported dimension {d}")


@dataclass(frozen=True)
class JumpRates:
    """Translation-invariant finite-range jump rates ``p``.

    ``table`` maps jump vectors to rates.  Signed rates are allowed only
    when ``signed=True``; such tables describe linear combinations like
    the antisymmetric part and are used to build generators, not dynamics.
    """

    d: int
    table: Mapping[Site, float]
    signed: bool = False
    _items: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        clean = {}
        for z, r in self.table.items():
            z = tuple(int(c) for c in (z if isinstance(z, (tuple, list)) else (z,)))
            if len(z) != self.d:
                raise ValueError(f"jump vector {z} has wrong dimension for d={self.d}")
            r = float(r)
            if not math.isfinite(r):
                raise ValueError(f"rate for {z} is not finite")
            if r == 0.0:
                continue
            if not self.signed and r < 0:
                raise ValueError(f"negative rate {r} for jump {z}")
            if all(c == 0 for c in z):
                raise ValueError("p(0) must vanish")
            clean[z] = clean.get(z, 0.0) + r
        items = tuple(sorted(clean.items()))
        object.__setattr__(self, "table", dict(items))
        object.__setattr__(self, "_items", items)

    @classmethod
    def from_pairs(cls, d: int, pairs: Iterable, signed: bool = False) -> "JumpRates":
        table: dict[Site, float] = {}
        for vec, rate in pairs:
            vec = tuple(int(c) for c in (vec if isinstance(vec, (tuple, list)) else (vec,)))
            table[vec] = table.get(vec, 0.0) + float(rate)
        return cls(d, table, signed)

    def __hash__(self):
        return hash((self.d, self._items, self.signed))

    def __call__(self, z: Site) -> float:
        return self.table.get(tuple(z), 0.0)

    def items(self):
        return self._items

    @property
    def vectors(self) -> list[Site]:
        return [z for z, _ in self._items]

    @property
    def radius(self) -> int:
        return max((math.ceil(norm(z) - 1e-12) for z in self.table), default=0)

    @property
    def total_rate(self) -> float:
        return sum(r for _, r in self._items)

    @property
    def drift(self) -> np.ndarray:
        m = np.zeros(self.d)
        for z, r in self._items:
            m += r * np.asarray(z, dtype=float)
        return m

    def reversed(self) -> "JumpRates":
        """Rates of the time-reversed dynamics, ``z -> p(-z)``."""
        return JumpRates(self.d, {neg(z): r for z, r in self._items}, self.signed)

    def symmetric(self) -> "JumpRates":
        out: dict[Site, float] = {}
        for z, r in self._items:
            out[z] = out.get(z, 0.0) + r / 2
            out[neg(z)] = out.get(neg(z), 0.0) + r / 2
        return JumpRates(self.d, out, self.signed)

    def antisymmetric(self) -> "JumpRates":
        out: dict[Site, float] = {}
        for z, r in self._items:
            out[z] = out.get(z, 0.0) + r / 2
            out[neg(z)] = out.get(neg(z), 0.0) - r / 2
        return JumpRates(self.d, out, signed=True)

    def scaled(self, c: float) -> "JumpRates":
        return JumpRates(self.d, {z: c * r for z, r in self._items}, signed=self.signed or c < 0)

    def is_irreducible(self) -> bool:
        sym = self.symmetric()
        return generates_lattice([z for z, r in sym.items() if r > 0], self.d)

    def validate(self) -> "JumpRates":
        """Check the conditions needed for dynamics; returns ``self``."""
        if self.signed:
            raise ValueError("signed rate tables cannot drive a dynamics")
        if not self.table:
            raise ValueError("rate table is empty")
        if not self.is_irreducible():
            raise ValueError("symmetric part of the rates is not irreducible on Z^d")
        return self

    def spectral_coefficients(self) -> np.ndarray:
        """Antisymmetric coefficients along the axes used by the Fourier bounds.

        In d=2 these come from the nearest-neighbor surrogate; in d=1 they
        are ``a(1)`` of the rates themselves.
        """
        if self.d == 1:
            return np.array([self.antisymmetric()((1,))])
        nn = build_nn_rates(self).antisymmetric()
        return np.array([nn(unit_vector(2, l)) for l in range(2)])


@dataclass(frozen=True)
class DensityParams:
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.rho}")

    @property
    def beta(self) -> float:
        return math.sqrt(self.rho * (1.0 - self.rho))


def build_nn_rates(rates: JumpRates) -> JumpRates:
    """Nearest-neighbor surrogate carrying the drift of ``rates``."""
    m = rates.drift
    table: dict[Site, float] = {}
    for l in range(rates.d):
        if m[l] == 0.0:
            table[unit_vector(rates.d, l, 1)] = 1.0
            table[unit_vector(rates.d, l, -1)] = 1.0
        else:
            table[unit_vector(rates.d, l, 1)] = max(m[l], 0.0)
            table[unit_vector(rates.d, l, -1)] = max(-m[l], 0.0)
    return JumpRates(rates.d, table)


# torus geometry -----------------------------------------------------------

def wrap(x: Site, L: int) -> Site:
    """Reduce a site to the centered box ``(-L/2, L/2]^d``."""
    h = L // 2
    return tuple(((c + h - 1) % L) - h + 1 for c in x)


def on_torus(x: Site, L: int) -> bool:
    h = L // 2
    return all(-h < c <= h for c in x)


def torus_sites(L: int, d: int) -> list[Site]:
    """All sites of the torus in lexicographic order of centered coordinates."""
    h = L // 2
    axis = range(-h + 1, h + 1)
    if d == 1:
        return [(c,) for c in axis]
    return [(a, b) for a in axis for b in axis]


@dataclass(frozen=True, eq=False)
class ReferenceConfig:
    """Occupancy on the torus seen from the tagged particle."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.uint8)
        if occ.ndim not in (1, 2) or len(set(occ.shape)) != 1:
            raise ValueError("occupancy must be a square array in d=1 or d=2")
        L = occ.shape[0]
        if L % 2:
            raise ValueError(f"torus side must be even, got {L}")
        if np.any(occ > 1):
            raise ValueError("occupancy must be 0/1")
        if occ[(0,) * occ.ndim] != 1:
            raise ValueError("the origin must be occupied")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def from_sites(cls, L: int, d: int, sites: Iterable[Site]) -> "ReferenceConfig":
        occ = np.zeros((L,) * d, dtype=np.uint8)
        occ[(0,) * d] = 1
        for x in sites:
            x = tuple(x)
            if not on_torus(x, L):
                raise IndexError(f"site {x} is off the torus of side {L}")
            occ[tuple(c % L for c in x)] = 1
        return cls(occ)

    @property
    def L(self) -> int:
        return self.occupancy.shape[0]

    @property
    def d(self) -> int:
        return self.occupancy.ndim

    @property
    def n(self) -> int:
        return int(self.occupancy.sum())

    def __getitem__(self, x: Site) -> int:
        x = tuple(x)
        if not on_torus(x, self.L):
            raise IndexError(f"site {x} is off the torus of side {self.L}")
        return int(self.occupancy[tuple(c % self.L for c in x)])

    def occupied(self) -> list[Site]:
        idx = np.argwhere(self.occupancy == 1)
        return sorted(wrap(tuple(int(c) for c in row), self.L) for row in idx)

    def __eq__(self, other):
        return isinstance(other, ReferenceConfig) and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())

    def __repr__(self):
        return f"ReferenceConfig(L={self.L}, d={self.d}, sites={self.occupied()})"


def _index(cfg: ReferenceConfig, x: Site) -> tuple[int, ...]:
    x = tuple(x)
    if len(x) != cfg.d or not on_torus(x, cfg.L):
        raise IndexError(f"site {x} is off the torus of side {cfg.L}")
    return tuple(c % cfg.L for c in x)


def exchange(cfg: ReferenceConfig, i: Site, j: Site) -> ReferenceConfig:
    """Swap the occupancies at ``i`` and ``j``."""
    a, b = _index(cfg, i), _index(cfg, j)
    if a == b:
        raise ValueError("exchange needs two distinct sites")
    if a == (0,) * cfg.d or b == (0,) * cfg.d:
        raise ValueError("the tagged particle cannot be exchanged")
    occ = cfg.occupancy.copy()
    occ[a], occ[b] = occ[b], occ[a]
    return ReferenceConfig(occ)


def tagged_shift(cfg: ReferenceConfig, j: Site) -> ReferenceConfig:
    """Move the tagged particle by ``j`` and re-center on it."""
    b = _index(cfg, j)
    if b == (0,) * cfg.d:
        raise ValueError("shift vector must be nonzero on the torus")
    if cfg.occupancy[b]:
        raise ValueError(f"target {tuple(j)} is occupied; exclusion forbids the jump")
    occ = cfg.occupancy.copy()
    occ[(0,) * cfg.d] = 0
    occ[b] = 1
    occ = np.roll(occ, shift=tuple(-c for c in j), axis=tuple(range(cfg.d)))
    return ReferenceConfig(occ)


def drift_value(cfg: ReferenceConfig, rates: JumpRates, rho: float,
                flavor: str = "forward") -> np.ndarray:
    """``sum_j j q(j) (rho - zeta_j)`` with ``q`` chosen by ``flavor``."""
    q = {"forward": rates, "symmetric": rates.symmetric(),
         "reversed": rates.reversed()}.get(flavor)
    if q is None:
        raise ValueError(f"unknown drift flavor {flavor!r}")
    out = np.zeros(cfg.d)
    for z, r in q.items():
        out += np.asarray(z, dtype=float) * r * (rho - cfg[wrap(z, cfg.L)])
    return out


def check_torus(rates: JumpRates, L: int) -> None:
    if L % 2 or L <= 4 * rates.radius:
        raise ValueError(f"torus side must be even and exceed 4R = {4 * rates.radius}, got {L}")
