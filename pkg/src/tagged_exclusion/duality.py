"""Coefficient calculus in the orthonormal product basis.

A function of the environment is expanded as ``f = sum_B c(B) Psi_B``
where ``Psi_B = prod_{x in B} (zeta_x - rho) / beta`` and
``beta = sqrt(rho (1 - rho))``.  Sets ``B`` are stored as sorted tuples
of site tuples.  Operators on coefficients are evaluated in gather form
at the finitely many output sets a local input can reach, so no
truncation is involved.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from typing import Callable, Iterable, Mapping

import numpy as np

from .lattice import JumpRates, add, neg, sub, unit_vector, wrap

Key = tuple


def canonical(sites: Iterable) -> Key:
    items = [tuple(int(c) for c in s) for s in sites]
    key = tuple(sorted(items))
    if len(set(key)) != len(key):
        raise ValueError(f"repeated site in {items}")
    return key


def _is_origin(x) -> bool:
    return not any(x)


def shift_set(B: Key, x) -> Key:
    """Reference-frame shift of a set by ``x`` on the punctured lattice."""
    x = tuple(x)
    moved = [add(b, x) for b in B]
    if neg(x) in B:
        moved = [m for m in moved if not _is_origin(m)] + [x]
    return canonical(moved)


def torus_shift_set(B, x, L: int) -> Key:
    """The same shift on an ``L``-torus, all sites reduced to the centered box."""
    x = wrap(tuple(x), L)
    moved = [wrap(add(b, x), L) for b in B]
    if wrap(neg(x), L) in set(B):
        moved = [m for m in moved if any(m)] + [x]
    return canonical(moved)


def swap_set(B: Key, x, y) -> Key:
    """``B`` with the membership of ``x`` and ``y`` exchanged."""
    s = set(B)
    if (x in s) == (y in s):
        return B
    if x in s:
        s.discard(x)
        s.add(y)
    else:
        s.discard(y)
        s.add(x)
    return canonical(s)


# coefficient functions -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientFunction:
    """Finitely supported function on sets (or tuples, for the free flavor).

    ``flavor`` is ``"punctured"`` (sets avoiding the origin), ``"full"``
    (any set) or ``"free"`` (ordered tuples).
    """

    d: int
    data: Mapping = field(default_factory=dict)
    flavor: str = "punctured"

    def __post_init__(self):
        if self.flavor not in ("punctured", "full", "free"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        clean = {}
        for k, v in dict(self.data).items():
            v = float(v)
            if v == 0.0:
                continue
            if self.flavor == "free":
                k = tuple(tuple(int(c) for c in s) for s in k)
            else:
                k = canonical(k)
                if self.flavor == "punctured" and any(_is_origin(s) for s in k):
                    raise ValueError(f"punctured function given a set containing the origin: {k}")
            if any(len(s) != self.d for s in k):
                raise ValueError(f"key {k} has wrong dimension")
            clean[k] = clean.get(k, 0.0) + v
        object.__setattr__(self, "data", clean)

    @classmethod
    def _trusted(cls, d: int, data: dict, flavor: str = "punctured") -> "CoefficientFunction":
        # keys already canonical, values nonzero
        obj = object.__new__(cls)
        object.__setattr__(obj, "d", d)
        object.__setattr__(obj, "data", data)
        object.__setattr__(obj, "flavor", flavor)
        return obj

    @classmethod
    def indicator(cls, d: int, sites, flavor: str = "punctured", value: float = 1.0):
        return cls(d, {tuple(sites): value}, flavor)

    @classmethod
    def degree_one(cls, d: int, values: Mapping, flavor: str = "punctured"):
        """From a map ``site -> value``."""
        return cls(d, {(tuple(x),): v for x, v in values.items()}, flavor)

    def __call__(self, key) -> float:
        if self.flavor == "free":
            return self.data.get(tuple(tuple(s) for s in key), 0.0)
        try:
            return self.data.get(canonical(key), 0.0)
        except ValueError:
            return 0.0

    def site(self, x) -> float:
        """Value on the singleton ``{x}``."""
        return self.data.get((tuple(x),), 0.0)

    def keys(self):
        return self.data.keys()

    def items(self):
        return sorted(self.data.items())

    def degrees(self) -> set:
        return {len(k) for k in self.data}

    def part(self, n: int) -> "CoefficientFunction":
        return CoefficientFunction(self.d, {k: v for k, v in self.data.items() if len(k) == n},
                                   self.flavor)

    def sites(self) -> set:
        return {s for k in self.data for s in k}

    def radius(self) -> int:
        return max((max(abs(c) for c in s) for s in self.sites()), default=0)

    def _combine(self, other, sign):
        if other.flavor != self.flavor or other.d != self.d:
            raise ValueError("cannot combine coefficient functions of different flavor")
        out = dict(self.data)
        for k, v in other.data.items():
            out[k] = out.get(k, 0.0) + sign * v
        return CoefficientFunction._trusted(self.d, {k: v for k, v in out.items() if v != 0.0},
                                            self.flavor)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def scale(self, c: float) -> "CoefficientFunction":
        return CoefficientFunction(self.d, {k: c * v for k, v in self.data.items()}, self.flavor)

    def inner(self, other: "CoefficientFunction") -> float:
        small, big = sorted((self, other), key=lambda f: len(f.data))
        return float(sum(v * big.data.get(k, 0.0) for k, v in small.data.items()))

    def max_abs(self) -> float:
        return max((abs(v) for v in self.data.values()), default=0.0)

    def distance(self, other: "CoefficientFunction") -> float:
        return (self - other).max_abs()

    def to_json(self) -> str:
        rows = [{"sites": [list(s) for s in k], "value": v} for k, v in self.items()]
        degree = sorted(self.degrees())
        return json.dumps({"flavor": self.flavor, "d": self.d,
                           "degree": degree[0] if len(degree) == 1 else degree, "terms": rows})

    @classmethod
    def from_json(cls, text: str) -> "CoefficientFunction":
        obj = json.loads(text)
        data = {tuple(tuple(s) for s in row["sites"]): row["value"] for row in obj["terms"]}
        return cls(obj["d"], data, obj["flavor"])


# local observables -------------------------------------------------------------------

def _check_density(rho: float) -> float:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"the product basis degenerates at rho={rho}; need 0 < rho < 1")
    return math.sqrt(rho * (1.0 - rho))


@dataclass(frozen=True, eq=False)
class LocalObservable:
    """Function of the occupancies on a finite support.

    ``values[b_1, ..., b_k]`` is the value when site ``support[i]`` has
    occupancy ``b_i``.
    """

    support: tuple
    values: np.ndarray

    def __post_init__(self):
        support = tuple(tuple(int(c) for c in s) for s in self.support)
        if len(set(support)) != len(support):
            raise ValueError("support sites must be distinct")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (2,) * len(support):
            raise ValueError(f"value table must have shape {(2,) * len(support)}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, support, fn: Callable[[dict], float]) -> "LocalObservable":
        support = tuple(tuple(s) for s in support)
        vals = np.zeros((2,) * len(support))
        for bits in product((0, 1), repeat=len(support)):
            vals[bits] = fn(dict(zip(support, bits)))
        return cls(support, vals)

    @classmethod
    def constant(cls, c: float) -> "LocalObservable":
        return cls((), np.array(float(c)))

    def __call__(self, occupancy: Mapping) -> float:
        return float(self.values[tuple(int(occupancy.get(s, 0)) for s in self.support)])

    def expectation(self, rho: float) -> float:
        v = self.values
        for _ in self.support:
            v = (1 - rho) * v[0] + rho * v[1]
        return float(v)

    def on(self, support) -> "LocalObservable":
        """Same function tabulated on a larger support."""
        support = tuple(tuple(s) for s in support)
        missing = [s for s in self.support if s not in support]
        if missing:
            raise ValueError(f"new support lacks {missing}")
        idx = [support.index(s) for s in self.support]
        grid = np.indices((2,) * len(support)).reshape(len(support), -1)
        vals = self.values[tuple(grid[i] for i in idx)] if idx else np.full(grid.shape[1], self.values)
        return LocalObservable(support, vals.reshape((2,) * len(support)))

    def product(self, other: "LocalObservable") -> "LocalObservable":
        support = self.support + tuple(s for s in other.support if s not in self.support)
        return LocalObservable(support, self.on(support).values * other.on(support).values)


def psi_basis(B, rho: float) -> LocalObservable:
    beta = _check_density(rho)
    B = canonical(B)
    factor = np.array([-rho / beta, (1 - rho) / beta])
    vals = np.array(1.0)
    for _ in B:
        vals = np.multiply.outer(vals, factor)
    return LocalObservable(B, vals)


def psi_expand(obs: LocalObservable, rho: float, d: int | None = None,
               tol: float = 1e-14) -> CoefficientFunction:
    """Coefficients ``E[f Psi_B]`` of a local observable.

    Coefficients below ``tol`` times the largest one are roundoff and dropped.
    """
    beta = _check_density(rho)
    if any(_is_origin(s) for s in obs.support):
        raise ValueError("the origin is always occupied; remove it from the support")
    order = sorted(range(len(obs.support)), key=lambda i: obs.support[i])
    support = [obs.support[i] for i in order]
    c = np.transpose(obs.values, order) if order else obs.values
    k = len(support)
    for axis in range(k):
        f0 = np.take(c, 0, axis=axis)
        f1 = np.take(c, 1, axis=axis)
        c = np.stack([(1 - rho) * f0 + rho * f1, beta * (f1 - f0)], axis=axis)
    d = d if d is not None else (len(support[0]) if support else 1)
    if not k:
        return CoefficientFunction(d, {(): float(c)} if c != 0 else {})
    cut = tol * float(np.abs(c).max()) if c.size else 0.0
    data = {}
    for bits in zip(*np.nonzero(np.abs(c) > cut)):
        key = tuple(support[i] for i, b in enumerate(bits) if b)
        data[key] = float(c[bits])
    return CoefficientFunction._trusted(d, data)


def reconstruct(coef: CoefficientFunction, rho: float, support=None) -> LocalObservable:
    """Observable ``sum_B c(B) Psi_B`` tabulated on ``support`` (default: all sites used)."""
    _check_density(rho)
    if coef.flavor != "punctured":
        raise ValueError("only punctured coefficient functions describe observables")
    support = tuple(sorted(coef.sites())) if support is None else tuple(tuple(s) for s in support)
    total = LocalObservable(support, np.zeros((2,) * len(support)))
    vals = total.values.copy()
    for key, v in coef.items():
        vals += v * psi_basis(key, rho).on(support).values
    return LocalObservable(support, vals)


# generators acting on observables ---------------------------------------------------------

def _configs(k: int) -> np.ndarray:
    return ((np.arange(2 ** k)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.int64)


def _table_index(bits: np.ndarray, cols: list[int]) -> np.ndarray:
    idx = np.zeros(bits.shape[0], dtype=np.int64)
    for c in cols:
        idx = idx * 2 + bits[:, c]
    return idx


def _output_support(obs: LocalObservable, q: JumpRates, extra=()) -> tuple:
    sup = list(obs.support)
    seen = set(sup)
    vecs = q.vectors + [neg(z) for z in q.vectors]
    cand = [add(u, z) for u in obs.support for z in vecs] + vecs + list(extra)
    for s in cand:
        if s not in seen and not _is_origin(s):
            seen.add(s)
            sup.append(s)
    return tuple(sup)


def apply_generator(obs: LocalObservable, q: JumpRates, part: str = "both") -> LocalObservable:
    """Reference-frame generator with (possibly signed) rates ``q`` applied to ``obs``."""
    if part not in ("both", "e", "t"):
        raise ValueError(f"unknown generator part {part!r}")
    if any(_is_origin(s) for s in obs.support):
        raise ValueError("observable support must avoid the origin")
    W = _output_support(obs, q)
    pos = {s: i for i, s in enumerate(W)}
    bits = _configs(len(W))
    flat = obs.values.ravel()
    ucols = [pos[s] for s in obs.support]
    base = flat[_table_index(bits, ucols)]
    out = np.zeros(bits.shape[0])
    U = set(obs.support)
    if part in ("both", "e"):
        for z, r in q.items():
            for i in W:
                j = add(i, z)
                if _is_origin(j) or j not in pos or (i not in U and j not in U):
                    continue
                ci, cj = pos[i], pos[j]
                mask = (bits[:, ci] == 1) & (bits[:, cj] == 0)
                cols = [cj if c == ci else ci if c == cj else c for c in ucols]
                out += r * mask * (flat[_table_index(bits, cols)] - base)
    if part in ("both", "t"):
        for z, r in q.items():
            cz = pos[z]
            mask = bits[:, cz] == 0
            # shifted configuration read at each support site
            idx = np.zeros(bits.shape[0], dtype=np.int64)
            for u in obs.support:
                src = add(u, z)
                col = bits[:, cz] if _is_origin(src) else bits[:, pos[src]]
                idx = idx * 2 + col
            out += r * mask * (flat[idx] - base)
    return LocalObservable(W, out.reshape((2,) * len(W)))


def apply_exchange(obs: LocalObservable) -> LocalObservable:
    """Bond exchange across ``(-1, 1)`` in d=1."""
    a, b = (-1,), (1,)
    W = tuple(obs.support) + tuple(s for s in (a, b) if s not in obs.support)
    pos = {s: i for i, s in enumerate(W)}
    bits = _configs(len(W))
    flat = obs.values.ravel()
    ucols = [pos[s] for s in obs.support]
    cols = [pos[b] if c == pos[a] else pos[a] if c == pos[b] else c for c in ucols]
    out = flat[_table_index(bits, cols)] - flat[_table_index(bits, ucols)]
    return LocalObservable(W, out.reshape((2,) * len(W)))


# coefficient operators ------------------------------------------------------------------------

OPERATORS = ("Se", "St", "Ae0", "Ae+", "Ae-", "At0", "At+", "At-", "N")


def _rates_for(op: str, rates: JumpRates) -> JumpRates:
    return rates.symmetric() if op in ("Se", "St") else rates.antisymmetric()


def _candidates(op: str, f: CoefficientFunction, q: JumpRates) -> set:
    vecs = sorted(set(q.vectors) | {neg(z) for z in q.vectors})
    out = set()
    for K in f.keys():
        Ks = set(K)
        out.add(K)
        if op in ("Se", "Ae0"):
            for y in K:
                for w in vecs:
                    x = add(y, w)
                    if x not in Ks and not _is_origin(x):
                        out.add(canonical((Ks - {y}) | {x}))
        elif op == "Ae+":
            for x in K:
                for w in vecs:
                    y = add(x, w)
                    if y not in Ks and not _is_origin(y):
                        out.add(canonical(Ks | {y}))
        elif op == "Ae-":
            for x in K:
                out.add(canonical(Ks - {x}))
        elif op == "N":
            out.add(swap_set(K, (-1,), (1,)))
        else:
            for z in vecs:
                T = shift_set(K, z)
                Ts = set(T)
                out.add(T)
                if z in Ks:
                    out.add(canonical(Ks - {z}))
                else:
                    out.add(canonical(Ks | {z}))
                if z in Ts:
                    out.add(canonical(Ts - {z}))
                else:
                    out.add(canonical(Ts | {z}))
    return out


def _gather(op: str, f: CoefficientFunction, q: JumpRates, rho: float, beta: float,
            B: Key, extensions: Mapping) -> float:
    Bs = set(B)
    val = 0.0
    if op in ("Se", "Ae0"):
        fB = f(B)
        for x in B:
            for z, r in q.items():
                y = add(x, z)
                if y in Bs or _is_origin(y):
                    continue
                val += r * (f(canonical((Bs - {x}) | {y})) - fB)
        return val * (1 - 2 * rho if op == "Ae0" else 1.0)
    if op == "Ae+":
        for x in B:
            for y in B:
                r = q(sub(y, x))
                if r:
                    val += r * f(canonical(Bs - {y}))
        return 2 * beta * val
    if op == "Ae-":
        for x in extensions.get(B, ()):
            fx = f(canonical(Bs | {x}))
            for z, r in q.items():
                y = add(x, z)
                if y in Bs or _is_origin(y):
                    continue
                val += r * fx
        return -2 * beta * val
    if op == "N":
        return f(swap_set(B, (-1,), (1,))) - f(B)
    fB = f(B)
    for z, r in q.items():
        mz = neg(z)
        if op in ("St", "At0"):
            w = rho if z in Bs else 1 - rho
            val += w * r * (f(shift_set(B, mz)) - fB)
        if op in ("St", "At+") and z in Bs:
            C = canonical(Bs - {z})
            val += beta * r * (f(C) - f(shift_set(C, mz)))
        if op in ("St", "At-") and z not in Bs:
            C = canonical(Bs | {z})
            val += beta * r * (f(C) - f(shift_set(C, mz)))
    return val


def apply_coefficient_operator(op: str, f: CoefficientFunction, rates: JumpRates,
                               rho: float) -> CoefficientFunction:
    """Coefficient form of a generator piece.

    ``op`` is one of ``Se``, ``St`` (symmetric environment / tagged parts),
    ``Ae0``, ``Ae+``, ``Ae-``, ``At0``, ``At+``, ``At-`` (antisymmetric
    parts preserving, raising and lowering the degree) or ``N`` (bond
    exchange in d=1).
    """
    if op not in OPERATORS:
        raise ValueError(f"unknown coefficient operator {op!r}")
    if f.flavor != "punctured":
        raise ValueError("coefficient operators act on punctured functions")
    if op == "N" and f.d != 1:
        raise ValueError("the bond exchange is defined in d=1")
    beta = _check_density(rho) if op not in ("Se", "N") else 0.0
    q = _rates_for(op, rates)
    extensions = defaultdict(list)
    if op == "Ae-":
        for K in f.keys():
            for x in K:
                extensions[canonical(set(K) - {x})].append(x)
    out = {}
    for B in _candidates(op, f, q):
        if any(_is_origin(s) for s in B):
            continue
        v = _gather(op, f, q, rho, beta, B, extensions)
        if v != 0.0:
            out[B] = v
    return CoefficientFunction(f.d, out)


def coefficient_generator(f: CoefficientFunction, rates: JumpRates, rho: float,
                          parts=("Se", "St", "Ae0", "Ae+", "Ae-", "At0", "At+", "At-")):
    total = CoefficientFunction(f.d, {})
    for op in parts:
        total = total + apply_coefficient_operator(op, f, rates, rho)
    return total


# duality oracle ---------------------------------------------------------------------------------

FUNCTION_SPACE = {
    "Se": ("s", "e"), "St": ("s", "t"),
    "Ae0": ("a", "e"), "Ae+": ("a", "e"), "Ae-": ("a", "e"),
    "At0": ("a", "t"), "At+": ("a", "t"), "At-": ("a", "t"),
}


def function_space_image(op: str, B, rates: JumpRates, rho: float) -> CoefficientFunction:
    """Expansion of the function-space operator applied to ``Psi_B``, restricted to the
    degree that ``op`` produces."""
    B = canonical(B)
    if op == "N":
        return psi_expand(apply_exchange(psi_basis(B, rho)), rho, rates.d)
    kind, part = FUNCTION_SPACE[op]
    full = _image(B, rates, rho, kind, part)
    shift = {"+": 1, "-": -1, "0": 0}.get(op[-1])
    if shift is None:
        return full
    return full.part(len(B) + shift)


@lru_cache(maxsize=256)
def _image(B, rates, rho, kind, part):
    q = rates.symmetric() if kind == "s" else rates.antisymmetric()
    return psi_expand(apply_generator(psi_basis(B, rho), q, part), rho, rates.d)


@dataclass(frozen=True)
class OracleResult:
    op: str
    basis: Key
    error: float


def duality_oracle(rates: JumpRates, rho: float, sets: Iterable, ops=OPERATORS) -> list[OracleResult]:
    """Compare every coefficient operator with its function-space counterpart on basis elements."""
    results = []
    for B in sets:
        B = canonical(B)
        delta = CoefficientFunction(rates.d, {B: 1.0})
        for op in ops:
            if op == "N" and rates.d != 1:
                continue
            lhs = function_space_image(op, B, rates, rho)
            rhs = apply_coefficient_operator(op, delta, rates, rho)
            results.append(OracleResult(op, B, lhs.distance(rhs)))
    return results


def box_sets(d: int, half_width: int = 2, max_degree: int | None = None) -> list[Key]:
    """All nonempty subsets of the punctured box ``[-w, w]^d`` up to ``max_degree``."""
    axis = range(-half_width, half_width + 1)
    sites = [s for s in (product(axis, repeat=d)) if any(s)]
    top = len(sites) if max_degree is None else max_degree
    out = []
    for n in range(1, top + 1):
        out.extend(canonical(c) for c in combinations(sites, n))
    return out


# nearest-neighbour degree actions -----------------------------------------------------------------

def _nn_coefficients(rates: JumpRates) -> dict:
    """``a(z)`` on the unit vectors for a nearest-neighbour rate table."""
    if any(sum(abs(c) for c in z) != 1 for z in rates.vectors):
        raise ValueError("closed-form degree actions need nearest-neighbour rates")
    a = rates.antisymmetric()
    return {unit_vector(rates.d, l, s): a(unit_vector(rates.d, l, s))
            for l in range(rates.d) for s in (1, -1)}


def apply_A_nn_degree(g: CoefficientFunction, kind: str, rates: JumpRates, rho: float,
                      part: str = "both") -> CoefficientFunction:
    """Closed-form antisymmetric action on a degree-one function.

    ``kind`` is ``"1->1"`` or ``"1->2"``; for ``"1->2"`` ``part`` selects
    the environment (``"e"``), tagged (``"t"``) or combined action.
    """
    if g.flavor != "punctured" or g.degrees() - {1}:
        raise ValueError("expects a punctured degree-one function")
    a = _nn_coefficients(rates)
    d = rates.d
    beta = _check_density(rho)
    G = lambda x: 0.0 if _is_origin(x) else g.site(x)
    support = {k[0] for k in g.keys()}
    out = {}
    if kind == "1->1":
        cand = {add(x, z) for x in support for z in a} | support | {neg(x) for x in support}
        for x in cand:
            if _is_origin(x):
                continue
            v = 0.0
            for z, az in a.items():
                y = add(x, z)
                if not _is_origin(y):
                    v += (G(y) - G(x)) * az
            v = -rho * v - rho * (G(x) - G(neg(x))) * a.get(x, 0.0)
            if v:
                out[(x,)] = v
        return CoefficientFunction(d, out)
    if kind != "1->2":
        raise ValueError(f"unknown degree action {kind!r}")
    # pairs {s, s+z} feed the environment part; pairs {x, z} with z a unit
    # vector and x in the support or its shift by z feed the tagged part
    cand = set()
    for s in support:
        for z in a:
            cand.add((s, add(s, z)))
            cand.add((s, z))
            cand.add((add(s, z), z))
    cand = {canonical(p) for p in cand if p[0] != p[1]}
    for B in cand:
        if any(_is_origin(s) for s in B) or len(B) != 2:
            continue
        x, y = B
        v = 0.0
        if part in ("both", "e"):
            v += 2 * beta * (G(x) - G(y)) * a.get(sub(y, x), 0.0)
        if part in ("both", "t"):
            v += beta * (G(x) - G(sub(x, y))) * a.get(y, 0.0)
            v += beta * (G(y) - G(sub(y, x))) * a.get(x, 0.0)
        if v:
            out[B] = v
    return CoefficientFunction(d, out)


# extensions --------------------------------------------------------------------------------------

def _units(d: int) -> list:
    return [unit_vector(d, l, s) for l in range(d) for s in (1, -1)]


def extend(f: CoefficientFunction, mode: str) -> CoefficientFunction:
    """Extend a punctured function to sets that may contain the origin.

    ``"odot"`` fills those sets with zero; ``"ext"`` (degree one or two)
    fills them with local averages over nearest-neighbour sets.
    """
    if f.flavor != "punctured":
        raise ValueError("extensions start from punctured functions")
    if mode == "odot":
        return CoefficientFunction(f.d, f.data, "full")
    if mode != "ext":
        raise ValueError(f"unknown extension {mode!r}")
    if f.degrees() - {1, 2}:
        raise NotImplementedError("the averaging extension is defined for degrees one and two")
    d = f.d
    units = _units(d)
    origin = (0,) * d
    out = dict(f.data)
    if 1 in f.degrees():
        out[(origin,)] = sum(f.site(z) for z in units) / (2 * d)
    if 2 in f.degrees():
        ys = {s for k in f.part(2).keys() for s in k}
        ys |= {add(s, z) for s in set(ys) for z in units}
        for y in ys:
            if _is_origin(y):
                continue
            if sum(abs(c) for c in y) == 1:
                v = sum(f((z, y)) for z in units if z != y) / (2 * d - 1)
            else:
                v = sum(f((z, y)) for z in units) / (2 * d)
            if v:
                out[canonical((origin, y))] = v
    return CoefficientFunction(d, out, "full")


def restrict(g: CoefficientFunction) -> CoefficientFunction:
    if g.flavor != "full":
        raise ValueError("restriction applies to full-lattice functions")
    return CoefficientFunction(g.d, {k: v for k, v in g.data.items()
                                     if not any(_is_origin(s) for s in k)})


def apply_extended(op: str, g: CoefficientFunction, rates: JumpRates | None = None,
                   rho: float | None = None, part: str = "both") -> CoefficientFunction:
    """Operators on full-lattice functions.

    ``"S_ext"`` is the nearest-neighbour exchange operator with moves into
    the origin allowed (ordered pairs, so each bond counts twice).
    ``"A11"`` and ``"A12"`` are the nearest-neighbour antisymmetric
    degree actions applied to the restriction and set to zero on sets
    containing the origin.
    """
    if g.flavor != "full":
        raise ValueError("extended operators act on full-lattice functions")
    if op == "S_ext":
        units = _units(g.d)
        cand = set()
        for K in g.keys():
            cand.add(K)
            Ks = set(K)
            for x in K:
                for z in units:
                    y = add(x, z)
                    if y not in Ks:
                        cand.add(canonical((Ks - {x}) | {y}))
        out = {}
        for B in cand:
            Bs = set(B)
            v = 0.0
            for x in B:
                for z in units:
                    y = add(x, z)
                    if y not in Bs:
                        v += 2 * (g(canonical((Bs - {x}) | {y})) - g(B))
            if v:
                out[B] = v
        return CoefficientFunction(g.d, out, "full")
    if op not in ("A11", "A12"):
        raise ValueError(f"unknown extended operator {op!r}")
    if rates is None or rho is None:
        raise ValueError("antisymmetric actions need rates and density")
    res = restrict(g).part(1)
    kind = "1->1" if op == "A11" else "1->2"
    inner = apply_A_nn_degree(res, kind, rates, rho, part)
    return CoefficientFunction(g.d, inner.data, "full")


def extended_A_table(op: str, g: CoefficientFunction, a1: float, a2: float, rho: float,
                     part: str = "both") -> CoefficientFunction:
    """Case-by-case tables of the extended antisymmetric actions in d=2.

    Written out per site class (generic sites, sites next to the origin,
    antipodal pairs) for comparison with :func:`apply_extended`.
    """
    if g.d != 2 or g.flavor != "full":
        raise ValueError("the case tables are written for full functions in d=2")
    beta = _check_density(rho)
    e1, e2 = (1, 0), (0, 1)
    m1, m2 = (-1, 0), (0, -1)
    near = {e1, e2, m1, m2}
    G = g.site
    sites = {k[0] for k in g.keys() if len(k) == 1}
    halo = {add(s, z) for s in sites for z in _units(2)} | sites
    halo |= {add(s, z) for s in set(halo) for z in _units(2)}
    out = {}
    if op == "A11":
        for x in halo:
            if _is_origin(x):
                continue
            if x not in near:
                v = (-rho * (G(add(x, e1)) - G(sub(x, e1))) * a1
                     - rho * (G(add(x, e2)) - G(sub(x, e2))) * a2)
            elif x in (e1, m1):
                s = 1 if x == e1 else -1
                v = (-s * rho * (G((2 * s, 0)) - G((-s, 0))) * a1
                     - rho * (G((s, 1)) - G((s, -1))) * a2)
            else:
                s = 1 if x == e2 else -1
                v = (-s * rho * (G((0, 2 * s)) - G((0, -s))) * a2
                     - rho * (G((1, s)) - G((-1, s))) * a1)
            if v:
                out[(x,)] = v
        return CoefficientFunction(2, out, "full")
    if op != "A12":
        raise ValueError(f"unknown table {op!r}")
    pairs = set()
    for x in halo:
        for y in halo | near:
            if x != y and not _is_origin(x) and not _is_origin(y):
                pairs.add(canonical((x, y)))
    for B in pairs:
        x, y = B
        v = 0.0
        if part in ("both", "e"):
            for (p, q) in ((x, y), (y, x)):
                if q == add(p, e1):
                    v += 2 * beta * (G(p) - G(add(p, e1))) * a1
                if q == add(p, e2):
                    v += 2 * beta * (G(p) - G(add(p, e2))) * a2
        if part in ("both", "t"):
            v += _tagged_pair_table(x, y, G, a1, a2, beta, near)
        if v:
            out[B] = v
    return CoefficientFunction(2, out, "full")


def _tagged_pair_table(x, y, G, a1, a2, beta, near) -> float:
    e1, e2 = (1, 0), (0, 1)
    if x in near and y in near:
        pair = {x, y}
        if pair == {e1, (-1, 0)}:
            return beta * (-(G(e1) - G((2, 0))) * a1 + (G((-1, 0)) - G((-2, 0))) * a1)
        if pair == {e2, (0, -1)}:
            return beta * (-(G(e2) - G((0, 2))) * a2 + (G((0, -1)) - G((0, -2))) * a2)
        h = x if x[1] == 0 else y
        v = y if h is x else x
        s = v[1]
        if h == e1:
            return beta * (s * (G(e1) - G((1, -s))) * a2 + (G(v) - G((-1, s))) * a1)
        return beta * (s * (G((-1, 0)) - G((-1, -s))) * a2 - (G(v) - G((1, s))) * a1)
    if y in near or x in near:
        if x in near:
            x, y = y, x
        if y[1] == 0:
            s = y[0]
            return s * beta * (G(x) - G((x[0] - s, x[1]))) * a1
        s = y[1]
        return s * beta * (G(x) - G((x[0], x[1] - s))) * a2
    return 0.0


def origin_correction_defect(g: CoefficientFunction, g_prime: CoefficientFunction) -> float:
    """Max deviation in ``g_ext = g' + [(1/2d) sum_{|z|=1} g'(z) - g'(0)] 1_{0}``."""
    d = g.d
    origin = (0,) * d
    corr = sum(g_prime.site(z) for z in _units(d)) / (2 * d) - g_prime.site(origin)
    rhs = g_prime + CoefficientFunction(d, {(origin,): corr}, "full")
    return extend(g, "ext").distance(rhs)


# free lifts ------------------------------------------------------------------------------------

def lift_free(f: CoefficientFunction, n: int) -> CoefficientFunction:
    """Ordered-tuple version of a degree-``n`` set function, zero on coincident tuples."""
    if f.flavor == "free":
        raise ValueError("already a free function")
    part = f.part(n)
    out = {}
    for key, v in part.data.items():
        for perm in set(_permutations(key)):
            out[perm] = v
    return CoefficientFunction(f.d, out, "free")


def _permutations(key):
    from itertools import permutations
    return permutations(key)


def _has_coincidence(x) -> bool:
    return len(set(x)) != len(x)


@dataclass(frozen=True)
class TildeResult:
    values: CoefficientFunction
    stderr: Mapping


def tilde_extend(f: CoefficientFunction, n: int, method: str = "exact", points=None,
                 paths: int = 10_000, seed: int = 0, max_steps: int = 10_000_000) -> TildeResult:
    """Value of the free lift at the first time independent walkers occupy distinct sites.

    Off the coincidence set the value is the free lift itself.  For two
    walkers every jump from a coincident tuple separates them, so the
    exact method averages over the ``2 * 2d`` first moves.  The Monte
    Carlo method follows the embedded jump chain.
    """
    if f.flavor not in ("full", "punctured"):
        raise ValueError("tilde extension starts from a set function")
    d = f.d
    free = lift_free(CoefficientFunction(d, f.data, "full"), n)
    units = _units(d)
    if points is None:
        if n == 1:
            points = []
        else:
            sites = {s for k in free.keys() for s in k}
            near = sites | {add(s, z) for s in sites for z in units}
            points = [tuple([s] * n) for s in sorted(near)] if n == 2 else []
    points = [tuple(tuple(c) for c in p) for p in points]
    out = dict(free.data)
    err = {}
    if method == "exact":
        if n > 2:
            raise NotImplementedError("exact tilde extension is implemented for n <= 2")
        for p in points:
            if not _has_coincidence(p):
                continue
            z = p[0]
            v = sum(free((add(z, e), z)) + free((z, add(z, e))) for e in units) / (2 * n * d)
            if v:
                out[p] = v
            err[p] = 0.0
        return TildeResult(CoefficientFunction(d, out, "free"), err)
    if method != "monte-carlo":
        raise ValueError(f"unknown tilde method {method!r}")
    rng = np.random.default_rng(seed)
    moves = np.array(units)
    for p in points:
        if not _has_coincidence(p):
            continue
        vals = np.empty(paths)
        for k in range(paths):
            x = [list(c) for c in p]
            for _ in range(max_steps):
                j = rng.integers(n)
                e = moves[rng.integers(len(units))]
                x[j] = [a + b for a, b in zip(x[j], e)]
                if not _has_coincidence([tuple(c) for c in x]):
                    break
            else:
                raise RuntimeError("walkers did not separate within the step cap")
            vals[k] = free(tuple(tuple(c) for c in x))
        m = float(vals.mean())
        if m:
            out[p] = m
        err[p] = float(vals.std(ddof=1) / math.sqrt(paths))
    return TildeResult(CoefficientFunction(d, out, "free"), err)


# norms ----------------------------------------------------------------------------------------

def h1_coefficient(f: CoefficientFunction, lam: float, ops: Callable) -> float:
    """``lam <f, f> + <f, -O f>`` for a symmetric coefficient operator ``O``."""
    return lam * f.inner(f) - f.inner(ops(f))


def env_nn_operator(rates: JumpRates, with_exchange: bool | None = None) -> Callable:
    """Symmetric nearest-neighbour environment operator, plus the bond exchange in d=1."""
    from .lattice import build_nn_rates
    nn = build_nn_rates(rates)
    use_x = (rates.d == 1) if with_exchange is None else with_exchange

    def op(f):
        out = apply_coefficient_operator("Se", f, nn, 0.5)
        if use_x:
            out = out + apply_coefficient_operator("N", f, nn, 0.5)
        return out
    return op


def ext_operator(f: CoefficientFunction) -> CoefficientFunction:
    return apply_extended("S_ext", f)


def hm1_on_box(f: CoefficientFunction, lam: float, op: Callable, radius: int) -> float:
    """``<f, (lam - O)^{-1} f>`` with ``O`` truncated to sets inside a box."""
    d = f.d
    degrees = f.degrees()
    if len(degrees) != 1:
        raise ValueError("expects a function of a single degree")
    n = degrees.pop()
    axis = range(-radius, radius + 1)
    sites = [s for s in product(axis, repeat=d) if f.flavor == "full" or any(s)]
    sets = [canonical(c) for c in combinations(sites, n)]
    index = {B: i for i, B in enumerate(sets)}
    N = len(sets)
    M = np.zeros((N, N))
    for i, B in enumerate(sets):
        img = op(CoefficientFunction(d, {B: 1.0}, f.flavor))
        for K, v in img.data.items():
            j = index.get(K)
            if j is not None:
                M[j, i] += v
    rhs = np.array([f(B) for B in sets])
    sol = np.linalg.solve(lam * np.eye(N) - M, rhs)
    return float(rhs @ sol)
