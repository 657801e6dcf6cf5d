"""Exact linear algebra for the reference-frame process on small tori.

The state space holds every configuration with exactly ``n`` particles
(tagged one included) on an ``L``-torus.  The dynamics conserve ``n``, so
the uniform measure on this space is stationary and plays the role of
the Bernoulli measure with density ``(n-1)/(L^d-1)`` off the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import (JumpRates, ReferenceConfig, build_nn_rates, check_torus,
                      torus_sites, wrap)

DEFAULT_STATE_CAP = 200_000
DIRECT_SOLVE_LIMIT = 50_000
DENSE_EXPM_LIMIT = 4_000


class StateSpaceTooLarge(MemoryError):
    """Raised when an enumeration would exceed the configured cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"state space needs {required} states, cap is {cap}")
        self.required = required
        self.cap = cap


class SolveError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Lexicographic enumeration of fixed-``n`` reference-frame configurations."""

    L: int
    d: int
    n: int
    sites: tuple = field(repr=False)
    states: tuple = field(repr=False)      # tuples of non-origin site positions
    index: dict = field(repr=False)        # bitmask -> state index
    masks: np.ndarray = field(repr=False)
    occ: np.ndarray = field(repr=False)    # (S, L^d) 0/1, columns follow ``sites``

    @classmethod
    def build(cls, L: int, d: int, n: int, cap: int = DEFAULT_STATE_CAP) -> "StateSpace":
        if L % 2:
            raise ValueError(f"torus side must be even, got {L}")
        sites = tuple(torus_sites(L, d))
        n_sites = len(sites)
        if not 1 <= n <= n_sites:
            raise ValueError(f"particle count must be in [1, {n_sites}], got {n}")
        size = math.comb(n_sites - 1, n - 1)
        if size > cap:
            raise StateSpaceTooLarge(size, cap)
        origin = sites.index((0,) * d)
        others = [k for k in range(n_sites) if k != origin]
        states = tuple(combinations(others, n - 1))
        masks = np.array([sum(1 << k for k in s) | (1 << origin) for s in states], dtype=object)
        index = {int(m): i for i, m in enumerate(masks)}
        occ = np.zeros((size, n_sites), dtype=np.uint8)
        occ[:, origin] = 1
        for i, s in enumerate(states):
            occ[i, list(s)] = 1
        return cls(L, d, n, sites, states, index, masks, occ)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def density(self) -> float:
        return (self.n - 1) / (len(self.sites) - 1)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def position(self, x) -> int:
        return self._positions[wrap(tuple(x), self.L)]

    @property
    def _positions(self) -> dict:
        cached = self.__dict__.get("_pos_cache")
        if cached is None:
            cached = {s: k for k, s in enumerate(self.sites)}
            object.__setattr__(self, "_pos_cache", cached)
        return cached

    def occupancy_at(self, x) -> np.ndarray:
        """Column ``zeta_x`` over all states."""
        return self.occ[:, self.position(x)].astype(float)

    def config(self, i: int) -> ReferenceConfig:
        return ReferenceConfig.from_sites(self.L, self.d,
                                          [self.sites[k] for k in self.states[i]])

    def index_of(self, cfg: ReferenceConfig) -> int:
        mask = 0
        for x in cfg.occupied():
            mask |= 1 << self.position(x)
        return self.index[mask]

    def translation(self, z) -> np.ndarray:
        """Site permutation ``x -> x + z`` in the ``sites`` ordering."""
        return np.array([self.position(tuple(a + b for a, b in zip(s, z))) for s in self.sites])

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Inner product under the uniform measure, summed over vector components."""
        f, g = np.asarray(f), np.asarray(g)
        return float(np.sum(f * g) / self.size)


# generators -------------------------------------------------------------------

def _moves(space: StateSpace, q: JumpRates, part: str):
    """Yield ``(row, col, rate, jump)``; ``jump`` is the tag's jump or ``None``."""
    origin = space.position((0,) * space.d)
    shift = {z: [int(k) for k in space.translation(tuple(-c for c in z))] for z in q.vectors}
    target = {z: [int(k) for k in space.translation(z)] for z in q.vectors}
    for i, s in enumerate(space.states):
        mask = int(space.masks[i])
        if part in ("both", "e"):
            for x in s:
                for z, r in q.items():
                    y = target[z][x]
                    if y == origin or (mask >> y) & 1:
                        continue
                    yield i, space.index[mask ^ (1 << x) ^ (1 << y)], r, None
        if part in ("both", "t"):
            for z, r in q.items():
                y = target[z][origin]
                if (mask >> y) & 1:
                    continue
                new = 1 << origin
                for x in s:
                    new |= 1 << shift[z][x]
                yield i, space.index[new], r, z


def _assemble(space: StateSpace, rows, cols, vals) -> sp.csr_matrix:
    S = space.size
    off = sp.coo_matrix((vals, (rows, cols)), shape=(S, S)).tocsr()
    off.sum_duplicates()
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(diag)).tocsr()


def generator_from_rates(space: StateSpace, q: JumpRates, part: str = "both") -> sp.csr_matrix:
    """Generator built from (possibly signed) rates ``q``; ``part`` is both, e or t."""
    if part not in ("both", "e", "t"):
        raise ValueError(f"unknown generator part {part!r}")
    check_torus(q, space.L)
    rows, cols, vals = [], [], []
    for i, j, r, _ in _moves(space, q, part):
        rows.append(i)
        cols.append(j)
        vals.append(r)
    return _assemble(space, rows, cols, vals)


def exchange_generator(space: StateSpace) -> sp.csr_matrix:
    """Symmetric exchange across the bond ``(-1, 1)`` in d=1."""
    if space.d != 1:
        raise ValueError("the bond exchange operator is defined in d=1")
    a, b = space.position((-1,)), space.position((1,))
    rows, cols, vals = [], [], []
    for i in range(space.size):
        mask = int(space.masks[i])
        if ((mask >> a) & 1) != ((mask >> b) & 1):
            rows.append(i)
            cols.append(space.index[mask ^ (1 << a) ^ (1 << b)])
            vals.append(1.0)
    return _assemble(space, rows, cols, vals)


FLAVORS = ("L", "L*", "S", "A", "Lnn", "Snn", "Ann", "Se_nn", "St_nn", "N", "Le", "Lt")


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    matrix: sp.csr_matrix
    flavor: str
    space: StateSpace

    @property
    def weights(self) -> np.ndarray:
        return self.space.weights

    def __matmul__(self, f):
        return self.matrix @ f


def build_generator(space: StateSpace, rates: JumpRates, flavor: str) -> GeneratorMatrix:
    nn = build_nn_rates(rates) if flavor.endswith("nn") or "_nn" in flavor else None
    table = {
        "L": lambda: generator_from_rates(space, rates),
        "L*": lambda: generator_from_rates(space, rates).T.tocsr(),
        "S": lambda: generator_from_rates(space, rates.symmetric()),
        "A": lambda: generator_from_rates(space, rates.antisymmetric()),
        "Le": lambda: generator_from_rates(space, rates, "e"),
        "Lt": lambda: generator_from_rates(space, rates, "t"),
        "Lnn": lambda: generator_from_rates(space, nn),
        "Snn": lambda: generator_from_rates(space, nn.symmetric()),
        "Ann": lambda: generator_from_rates(space, nn.antisymmetric()),
        "Se_nn": lambda: generator_from_rates(space, nn.symmetric(), "e"),
        "St_nn": lambda: generator_from_rates(space, nn.symmetric(), "t"),
        "N": lambda: exchange_generator(space),
    }
    if flavor not in table:
        raise ValueError(f"unknown generator flavor {flavor!r}")
    return GeneratorMatrix(table[flavor](), flavor, space)


def drift_vectors(space: StateSpace, rates: JumpRates, flavor: str = "forward") -> np.ndarray:
    """Drift observable on every state, shape (S, d), centered at the ensemble density."""
    q = {"forward": rates, "symmetric": rates.symmetric(), "reversed": rates.reversed()}.get(flavor)
    if q is None:
        raise ValueError(f"unknown drift flavor {flavor!r}")
    rho = space.density
    out = np.zeros((space.size, space.d))
    for z, r in q.items():
        out += np.outer(r * (rho - space.occupancy_at(z)), np.asarray(z, dtype=float))
    return out


# solves -------------------------------------------------------------------------

def resolvent_solve(G, lam: float, f: np.ndarray) -> np.ndarray:
    """Solve ``(lam - G) u = f`` for one or several right-hand sides."""
    M = G.matrix if isinstance(G, GeneratorMatrix) else sp.csr_matrix(G)
    if not lam > 0:
        raise SolveError(f"resolvent needs lam > 0, got {lam}")
    f = np.asarray(f, dtype=float)
    S = M.shape[0]
    A = (lam * sp.identity(S, format="csc") - M).tocsc()
    if S <= DIRECT_SOLVE_LIMIT:
        u = spla.splu(A).solve(f if f.ndim == 1 else np.ascontiguousarray(f))
    else:
        cols = f.reshape(S, -1)
        u = np.column_stack([_gmres(A, cols[:, k]) for k in range(cols.shape[1])]).reshape(f.shape)
    res = np.linalg.norm(A @ u - f)
    if res > 1e-10 * max(np.linalg.norm(f), 1e-300) and res > 1e-12:
        raise SolveError(f"resolvent residual {res:.3e} above tolerance")
    return u


def _gmres(A, b):
    u, info = spla.gmres(A, b, rtol=1e-13, atol=1e-14, restart=200, maxiter=2000)
    if info != 0:
        raise SolveError(f"iterative resolvent solve did not converge (info={info})")
    return u


def _expm_apply(M: np.ndarray | sp.spmatrix, t: float, v: np.ndarray) -> np.ndarray:
    if M.shape[0] <= DENSE_EXPM_LIMIT:
        dense = M.toarray() if sp.issparse(M) else M
        return sla.expm(t * dense) @ v
    return spla.expm_multiply(t * sp.csr_matrix(M), v)


def semigroup_laplace(G, lam: float, f: np.ndarray, t_max: float | None = None,
                      per_panel: int = 20) -> np.ndarray:
    """``int_0^inf e^{-lam t} T_t f dt`` by quadrature of the matrix exponential."""
    M = G.matrix if isinstance(G, GeneratorMatrix) else G
    nodes, weights = laplace_nodes(lam, t_max, per_panel)
    out = np.zeros_like(np.asarray(f, dtype=float))
    for t, w in zip(nodes, weights):
        out += w * np.exp(-lam * t) * _expm_apply(M, t, f)
    return out


def laplace_nodes(lam: float, t_max: float | None = None, per_panel: int = 20,
                  first: float = 0.125):
    """Composite Gauss-Legendre nodes on ``[0, t_max]`` adapted to ``e^{-lam t}``."""
    t_max = t_max if t_max is not None else 60.0 / lam
    edges = [0.0]
    h = first
    while edges[-1] + h < min(1.0 / lam, t_max):
        edges.append(edges[-1] + h)
        h *= 2
    step = 1.0 / lam
    while edges[-1] < t_max:
        edges.append(min(edges[-1] + min(h, step), t_max))
    x, w = np.polynomial.legendre.leggauss(per_panel)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


# norms and variational forms ---------------------------------------------------------

@dataclass(frozen=True)
class Operators:
    """Generator, symmetric part and antisymmetric part on one state space."""

    space: StateSpace
    L: sp.csr_matrix
    S: sp.csr_matrix
    A: sp.csr_matrix

    @classmethod
    def build(cls, space: StateSpace, rates: JumpRates) -> "Operators":
        L = generator_from_rates(space, rates)
        Lstar = L.T.tocsr()
        return cls(space, L, ((L + Lstar) / 2).tocsr(), ((L - Lstar) / 2).tocsr())


def h_norms(ops: Operators, f: np.ndarray, lam: float) -> dict:
    """Squared H_1 and H_{-1} norms of ``f`` relative to the full generator."""
    sp_ = ops.space
    Af = ops.A @ f
    h1 = sp_.inner(f, lam * f - ops.S @ f) + sp_.inner(Af, resolvent_solve(ops.S, lam, Af))
    hm1 = sp_.inner(f, resolvent_solve(ops.L, lam, f))
    return {"h1": h1, "h-1": hm1}


def _variational_matrix(ops: Operators, lam: float) -> np.ndarray:
    S = ops.space.size
    D = lam * np.eye(S) - ops.S.toarray()
    A = ops.A.toarray()
    return D, A, D - A @ np.linalg.solve(D, A)


@dataclass(frozen=True)
class VariationalReport:
    lam: float
    resolvent: float
    sup: float
    inf: float
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        vals = (self.resolvent, self.sup, self.inf)
        scale = max(abs(v) for v in vals) or 1.0
        return max(abs(a - b) for a in vals for b in vals) / scale

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def as_dict(self) -> dict:
        return {"lam": self.lam, "resolvent": self.resolvent, "sup": self.sup, "inf": self.inf,
                "max_rel_error": self.max_rel_error, "tolerance": self.tolerance,
                "passed": self.passed}


def verify_variational(ops: Operators, f: np.ndarray, lam: float,
                       tolerance: float = 1e-8) -> VariationalReport:
    """Resolvent, sup and inf expressions of the H_{-1} norm, each at its optimizer.

    With ``D = lam - S`` and ``H = D - A D^{-1} A``, the sup form is
    maximised by ``H g = f`` and the inf form minimised by
    ``H g = -A D^{-1} f``; ``A`` is antisymmetric in the uniform inner product.
    """
    if ops.space.size > DENSE_EXPM_LIMIT:
        raise StateSpaceTooLarge(ops.space.size, DENSE_EXPM_LIMIT)
    f = np.asarray(f, dtype=float)
    inner = ops.space.inner
    D, A, H = _variational_matrix(ops, lam)
    resolvent = inner(f, resolvent_solve(ops.L, lam, f))

    g = np.linalg.solve(H, f)
    Ag = A @ g
    sup = 2 * inner(f, g) - inner(g, D @ g) - inner(Ag, np.linalg.solve(D, Ag))

    h = np.linalg.solve(H, -A @ np.linalg.solve(D, f))
    r = f - A @ h
    inf = inner(r, np.linalg.solve(D, r)) + inner(h, D @ h)
    return VariationalReport(lam, resolvent, sup, inf, tolerance)


# variance identities -------------------------------------------------------------------

def _second_moment_rate(rates: JumpRates) -> float:
    return sum(r * sum(c * c for c in z) for z, r in rates.items())


def laplace_variance(space: StateSpace, rates: JumpRates, lam: float) -> float:
    """Laplace transform of ``V(t)`` from one resolvent solve of the drift."""
    rho = space.density
    L = generator_from_rates(space, rates)
    F = drift_vectors(space, rates, "forward")
    Fr = drift_vectors(space, rates, "reversed")
    corr = space.inner(Fr, resolvent_solve(L, lam, F))
    return ((1 - rho) * _second_moment_rate(rates) - 2 * corr) / lam ** 2


def variance_curve(space: StateSpace, rates: JumpRates, t_values) -> np.ndarray:
    """``V(t)`` on a grid from the double time integral of the drift correlation."""
    rho = space.density
    L = generator_from_rates(space, rates).toarray()
    F = drift_vectors(space, rates, "forward")
    Fr = drift_vectors(space, rates, "reversed")
    S, d = F.shape
    # state (h2, h1, h0): h2' = h1, h1' = L h1 + h0, h0' = 0
    Z = np.zeros((S, S))
    I = np.eye(S)
    M = np.block([[Z, I, Z], [Z, L, I], [Z, Z, Z]])
    v0 = np.vstack([np.zeros((S, d)), np.zeros((S, d)), F])
    out = []
    for t in np.atleast_1d(t_values):
        h2 = _expm_apply(M, float(t), v0)[:S]
        out.append((1 - rho) * _second_moment_rate(rates) * t - 2 * space.inner(Fr, h2))
    return np.array(out)


def laplace_of_curve(space: StateSpace, rates: JumpRates, lam: float,
                     per_panel: int = 20) -> float:
    """``int e^{-lam t} V(t) dt`` by quadrature of :func:`variance_curve`."""
    nodes, weights = laplace_nodes(lam, per_panel=per_panel)
    V = variance_curve(space, rates, nodes)
    return float(np.sum(weights * np.exp(-lam * nodes) * V))


@dataclass(frozen=True, eq=False)
class MomentSystem:
    """Linear ODE for the first two moments of the tagged displacement.

    State layout: ``[m2 (S), m1 (S*d, component-major), I1 (S*d), 1]`` where
    ``m1``, ``m2`` are conditional moments given the starting state and
    ``I1`` is the time integral of ``m1``.
    """

    space: StateSpace
    matrix: sp.csr_matrix
    generator: sp.csr_matrix
    kernels: tuple        # per component, rate-weighted tagged jumps
    mean_rate: np.ndarray  # (S, d) expected displacement rate per state
    square_rate: np.ndarray

    @classmethod
    def build(cls, space: StateSpace, rates: JumpRates) -> "MomentSystem":
        S, d = space.size, space.d
        L = generator_from_rates(space, rates)
        kern = [sp.lil_matrix((S, S)) for _ in range(d)]
        b1 = np.zeros((S, d))
        c2 = np.zeros(S)
        for i, j, r, z in _moves(space, rates, "t"):
            for c in range(d):
                if z[c]:
                    kern[c][i, j] += r * z[c]
                    b1[i, c] += r * z[c]
            c2[i] += r * sum(c * c for c in z)
        n = 1 + 2 * d
        blocks = [[None] * (n + 1) for _ in range(n + 1)]
        for k in range(n + 1):
            blocks[k][k] = sp.csr_matrix((S if k < n else 1, S if k < n else 1))
        blocks[0][0] = L
        for c in range(d):
            blocks[0][1 + c] = 2 * kern[c].tocsr()
            blocks[1 + c][1 + c] = L
            blocks[1 + d + c][1 + c] = sp.identity(S)
            blocks[1 + c][n] = sp.csr_matrix(b1[:, c:c + 1])
        blocks[0][n] = sp.csr_matrix(c2[:, None])
        return cls(space, sp.bmat(blocks, format="csr"), L,
                   tuple(k.tocsr() for k in kern), b1, c2)

    @property
    def initial(self) -> np.ndarray:
        v = np.zeros(self.matrix.shape[0])
        v[-1] = 1.0
        return v

    def _split(self, u):
        S, d = self.space.size, self.space.d
        m2 = u[:S]
        m1 = u[S:S + S * d].reshape(d, S).T
        i1 = u[S + S * d:S + 2 * S * d].reshape(d, S).T
        return m2, m1, i1

    def state(self, t: float):
        return self._split(_expm_apply(self.matrix, t, self.initial))

    def laplace(self, lam: float):
        M = self.matrix.shape[0]
        A = (lam * sp.identity(M, format="csc") - self.matrix).tocsc()
        return self._split(spla.spsolve(A, self.initial))


def moment_variance(space: StateSpace, rates: JumpRates, t: float) -> float:
    """``V(t)`` from the moment equations, centred at the exact mean."""
    m2, m1, _ = MomentSystem.build(space, rates).state(t)
    return float(m2.mean() - np.sum(m1.mean(axis=0) ** 2))


def moment_laplace_variance(space: StateSpace, rates: JumpRates, lam: float,
                            system: MomentSystem | None = None) -> float:
    """Laplace transform of ``V`` from the moment equations.

    The block system is solved by back-substitution with the ballistic part
    of the first moment split off: writing the displacement rate as its
    stationary mean ``v`` plus a fluctuation ``b``, the ``v`` part
    contributes exactly ``2|v|^2/lam^3`` to the second moment and cancels
    the squared mean, so small ``lam`` loses no digits to cancellation.
    """
    system = system or MomentSystem.build(space, rates)
    S = space.size
    lu = spla.splu((lam * sp.identity(S, format="csc") - system.generator).tocsc())
    total = system.square_rate.mean()
    for c, K in enumerate(system.kernels):
        b = system.mean_rate[:, c] - system.mean_rate[:, c].mean()
        total += 2 * (K @ lu.solve(b)).mean()
    return float(total / lam ** 2)


@dataclass(frozen=True)
class ExactIdentity:
    t: float
    variance: float
    linear_term: float
    correlation_term: float

    @property
    def decomposition(self) -> float:
        return self.linear_term + self.correlation_term


def exact_variance_identity(space: StateSpace, rates: JumpRates, t: float) -> ExactIdentity:
    """Both sides of the drift-correlation decomposition of ``V(t)``, exactly."""
    rho = space.density
    m2, m1, i1 = MomentSystem.build(space, rates).state(t)
    variance = float(m2.mean() - np.sum(m1.mean(axis=0) ** 2))
    linear = (1 - rho) * _second_moment_rate(rates) * t
    corr = 0.0
    base = i1.mean(axis=0)
    for z, r in rates.items():
        cond = space.occupancy_at(tuple(-c for c in z)) == 1
        corr += 2 * rho * r * float(np.dot(z, base - i1[cond].mean(axis=0)))
    return ExactIdentity(t, variance, linear, corr)


@dataclass(frozen=True)
class LowerBoundReport:
    lam: float
    laplace_gap: float       # int e^{-lam t}(V - V_s) dt from the moment system
    resolvent_gap: float     # (2/lam^2)(<F_s,(lam-S)^{-1}F_s> - <F_rev,(lam-L)^{-1}F>)
    quadratic_form: float    # (2/lam^2)(lam|u-v|^2 + <u-v,(-S)(u-v)>)

    @property
    def errors(self) -> tuple[float, float]:
        scale = max(abs(self.laplace_gap), abs(self.resolvent_gap), 1e-300)
        return (abs(self.laplace_gap - self.resolvent_gap) / scale,
                abs(self.resolvent_gap - self.quadratic_form) / scale)

    def as_dict(self) -> dict:
        e1, e2 = self.errors
        return {"lam": self.lam, "laplace_gap": self.laplace_gap,
                "resolvent_gap": self.resolvent_gap, "quadratic_form": self.quadratic_form,
                "rel_error_laplace": e1, "rel_error_quadratic": e2}


def verify_lower_bound(space: StateSpace, rates: JumpRates, lam: float) -> LowerBoundReport:
    """Compare the asymmetric and symmetrised variances in Laplace space.

    The gap is computed three ways: from the moment equations of both
    dynamics, from the drift resolvents, and as the nonnegative quadratic
    form in ``u - v`` with ``u = (lam-L)^{-1} F`` and ``v = (lam-S)^{-1} F_s``.
    """
    sym = rates.symmetric()
    L = generator_from_rates(space, rates)
    S = generator_from_rates(space, sym)
    F = drift_vectors(space, rates, "forward")
    Fs = drift_vectors(space, rates, "symmetric")
    Fr = drift_vectors(space, rates, "reversed")
    u = resolvent_solve(L, lam, F)
    v = resolvent_solve(S, lam, Fs)
    inner = space.inner
    resolvent_gap = 2 / lam ** 2 * (inner(Fs, v) - inner(Fr, u))
    w = u - v
    quad = 2 / lam ** 2 * (lam * inner(w, w) + inner(w, -(S @ w)))
    laplace_gap = (moment_laplace_variance(space, rates, lam)
                   - moment_laplace_variance(space, sym, lam))
    return LowerBoundReport(lam, laplace_gap, resolvent_gap, quad)


# comparisons of symmetric forms ------------------------------------------------------------

def dirichlet_form(G: sp.spmatrix, space: StateSpace, f: np.ndarray) -> float:
    return space.inner(f, -(G @ f))


@dataclass(frozen=True)
class ComparisonReport:
    lam: float
    h1_env: float
    h1_nn: float
    h1_env_exchange: float | None
    hm1_full: float
    hm1_nn: float

    @property
    def env_below_nn(self) -> bool:
        return self.h1_env <= self.h1_nn * (1 + 1e-12) + 1e-15

    @property
    def nn_over_env(self) -> float:
        base = self.h1_env_exchange if self.h1_env_exchange is not None else self.h1_env
        return self.h1_nn / base if base > 0 else math.inf

    @property
    def resolvent_ratio(self) -> float:
        return self.hm1_full / self.hm1_nn if self.hm1_nn > 0 else math.inf


def verify_comparisons(space: StateSpace, rates: JumpRates, f: np.ndarray,
                       lam: float) -> ComparisonReport:
    """H_1 forms of the nearest-neighbour parts and H_{-1} forms of both dynamics."""
    nn = build_nn_rates(rates).symmetric()
    s_env = generator_from_rates(space, nn, "e")
    s_tag = generator_from_rates(space, nn, "t")
    inner = space.inner
    h1_env = lam * inner(f, f) + dirichlet_form(s_env, space, f)
    h1_nn = h1_env + dirichlet_form(s_tag, space, f)
    h1_x = None
    if space.d == 1:
        h1_x = h1_env + dirichlet_form(exchange_generator(space), space, f)
    hm1_full = inner(f, resolvent_solve(generator_from_rates(space, rates), lam, f))
    # in d=1 the nearest-neighbour comparison also exchanges across the tagged particle
    L_nn = generator_from_rates(space, build_nn_rates(rates))
    if space.d == 1:
        L_nn = (L_nn + exchange_generator(space)).tocsr()
    hm1_nn = inner(f, resolvent_solve(L_nn, lam, f))
    return ComparisonReport(lam, h1_env, h1_nn, h1_x, hm1_full, hm1_nn)


def shift_bound_constant(L: int, d: int, n: int, z) -> float:
    """Best constant ``C`` with ``sum_B (f(tau_{-z} B) - f(B))^2 <= C n sum_B sum_{i~j} (f(B_ij) - f(B))^2``.

    ``B`` ranges over ``n``-subsets of the punctured torus; ``i~j`` are
    nearest-neighbour pairs and ``B_ij`` exchanges membership of ``i`` and
    ``j``.  The bound is the top generalised eigenvalue on the complement
    of constants.
    """
    from .duality import torus_shift_set

    sites = [s for s in torus_sites(L, d) if any(s)]
    sets = [tuple(sorted(c)) for c in combinations(sites, n)]
    index = {b: k for k, b in enumerate(sets)}
    N = len(sets)
    mz = tuple(-c for c in z)
    P = np.zeros((N, N))
    for k, b in enumerate(sets):
        P[k, index[tuple(sorted(torus_shift_set(b, mz, L)))]] = 1.0
    D = P - np.eye(N)
    lhs = D.T @ D
    lap = np.zeros((N, N))
    units = [tuple(s if a == l else 0 for a in range(d)) for l in range(d) for s in (1, -1)]
    for k, b in enumerate(sets):
        bs = set(b)
        for i in sites:
            for e in units:
                j = wrap(tuple(a + c for a, c in zip(i, e)), L)
                if not any(j):
                    continue
                if (i in bs) == (j in bs):
                    continue
                other = tuple(sorted((bs - {i, j}) | ({j} if i in bs else {i})))
                m = index[other]
                lap[k, k] += 1.0
                lap[k, m] -= 1.0
    # restrict to mean-zero functions
    Q, _ = np.linalg.qr(np.column_stack([np.ones(N), np.eye(N)[:, : N - 1]]))
    B = Q[:, 1:]
    vals = sla.eigh(B.T @ lhs @ B, B.T @ lap @ B, eigvals_only=True)
    return float(vals[-1] / n)
