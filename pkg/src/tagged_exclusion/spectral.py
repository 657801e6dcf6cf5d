"""Fourier-side quantities for the degree-one variational bound.

Transforms use ``hat f(s_1..s_n) = (n!)^{-1/2} sum_x exp(2 pi i sum_j x_j . s_j) f(x)``
on the unit cube.  Integrals over ``[0,1]^{dn}`` use a midpoint rule in a
graded variable ``u -> u^q / (u^q + (1-u)^q)`` per axis, which packs
nodes toward the cube corners where every integrand here is singular
while keeping the mesh symmetric under ``v -> 1 - v``.  ``q = 1`` is the
plain midpoint rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .duality import CoefficientFunction, apply_A_nn_degree, restrict
from .lattice import JumpRates, unit_vector

TWO_PI = 2.0 * math.pi
LAMBDA_SCAN = tuple(10.0 ** -k for k in range(1, 7))


# special functions ------------------------------------------------------------

def theta(v) -> np.ndarray:
    """``(2/d) sum_l sin^2(pi v_l)``, the symbol of the nearest-neighbour walk."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    return (2.0 / d) * np.sum(np.sin(np.pi * v) ** 2, axis=-1)


def gamma(r) -> np.ndarray:
    return 2j * np.sin(TWO_PI * np.asarray(r, dtype=float))


def drift_symbol(v, a) -> np.ndarray:
    """``sum_l a_l gamma(v_l)``."""
    return np.sum(np.asarray(a) * gamma(v), axis=-1)


def alpha(v, w, a) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.sum(np.asarray(a) * (gamma(v) + gamma(w) - gamma(v + w)), axis=-1)


def special_functions(v, w, a) -> dict:
    return {"theta": theta(v), "gamma": gamma(v), "alpha": alpha(v, w, a)}


def _phase(x) -> np.ndarray:
    return np.exp(TWO_PI * 1j * np.asarray(x, dtype=float))


# grids ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralGrid:
    """Tensor midpoint mesh on ``[0,1]^{d n}`` with ``N`` nodes per axis."""

    d: int
    n: int = 1
    N: int = 256
    grading: int = 4

    def __post_init__(self):
        if self.d not in (1, 2) or self.n not in (1, 2):
            raise ValueError("grids exist for d, n in {1, 2}")
        if self.N < 2 or self.grading < 1:
            raise ValueError("need N >= 2 and grading >= 1")

    @cached_property
    def axis(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights along one axis; weights sum to 1."""
        q = self.grading
        u = (np.arange(self.N) + 0.5) / self.N
        den = u ** q + (1 - u) ** q
        nodes = u ** q / den
        weights = q * (u * (1 - u)) ** (q - 1) / den ** 2
        return nodes, weights / weights.sum()

    @property
    def dim(self) -> int:
        return self.d * self.n

    def refine(self, factor: int = 2) -> "SpectralGrid":
        return SpectralGrid(self.d, self.n, self.N * factor, self.grading)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """All nodes as ``(N^dim, dim)`` plus their weights."""
        nodes, weights = self.axis
        mesh = np.meshgrid(*([nodes] * self.dim), indexing="ij")
        wmesh = np.meshgrid(*([weights] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return pts, np.prod(np.stack([m.ravel() for m in wmesh]), axis=0)

    def integrate(self, fn) -> complex:
        """Quadrature of ``fn(points)`` for a vectorized ``fn``."""
        pts, w = self.points()
        total = np.sum(fn(pts) * w)
        return complex(total) if np.iscomplexobj(total) else float(total)


def default_grid(d: int, n: int = 1) -> SpectralGrid:
    if n == 1:
        return SpectralGrid(d, 1, 1024 if d == 1 else 256)
    return SpectralGrid(d, 2, 256 if d == 1 else 64)


# transforms -------------------------------------------------------------------------------

def _free_items(f: CoefficientFunction, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates ``(K, n, d)`` and values of the free lift of the degree-``n`` part."""
    if f.flavor == "free":
        items = [(k, v) for k, v in f.items() if len(k) == n]
        keys = [k for k, _ in items]
        vals = [v for _, v in items]
    else:
        from itertools import permutations
        keys, vals = [], []
        for k, v in f.part(n).items():
            for perm in set(permutations(k)):
                keys.append(perm)
                vals.append(v)
    if not keys:
        return np.zeros((0, n, f.d)), np.zeros(0)
    return np.array(keys, dtype=float), np.array(vals, dtype=float)


def transform_at(f: CoefficientFunction, n: int, points) -> np.ndarray:
    """Exact finite Fourier sum of the free lift at the rows of ``points`` (shape ``(M, n d)``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = f.d
    coords, vals = _free_items(f, n)
    if coords.shape[0] == 0:
        return np.zeros(pts.shape[0], dtype=complex)
    flat = coords.reshape(coords.shape[0], n * d)
    phase = pts @ flat.T
    return (np.exp(TWO_PI * 1j * phase) @ vals) / math.sqrt(math.factorial(n))


def transform(f: CoefficientFunction, grid: SpectralGrid) -> np.ndarray:
    """Transform on every grid node, shaped ``(N,) * dim``."""
    pts, _ = grid.points()
    return transform_at(f, grid.n, pts).reshape((grid.N,) * grid.dim)


def parseval_mass(f: CoefficientFunction, grid: SpectralGrid) -> float:
    pts, w = grid.points()
    return float(np.sum(np.abs(transform_at(f, grid.n, pts)) ** 2 * w))


# Fourier form of the degree actions ----------------------------------------------------------

def nn_axis_coefficients(rates: JumpRates) -> np.ndarray:
    """``a_l`` along the axes for a nearest-neighbour table."""
    a = rates.antisymmetric()
    return np.array([a(unit_vector(rates.d, l)) for l in range(rates.d)])


def delta0_closed(g: CoefficientFunction, v, a, rho: float) -> np.ndarray:
    """Boundary correction in the transform of the extended 1 -> 1 action."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    d = g.d
    origin = (0,) * d
    out = -rho * drift_symbol(v, a) * g.site(origin)
    for l in range(d):
        e, m = unit_vector(d, l, 1), unit_vector(d, l, -1)
        out = out - rho * a[l] * (_phase(-v[:, l]) - 1) * g.site(e)
        out = out + rho * a[l] * (_phase(v[:, l]) - 1) * g.site(m)
    return out


def delta1_closed(g: CoefficientFunction, v, w, a, beta: float) -> np.ndarray:
    """Boundary correction in ``sqrt(2)`` times the transform of the extended 1 -> 2 action."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    d = g.d
    g0 = g.site((0,) * d)
    out = np.zeros(v.shape[0], dtype=complex)
    for l in range(d):
        gp, gm = g.site(unit_vector(d, l, 1)), g.site(unit_vector(d, l, -1))
        vl, wl, ul = v[:, l], w[:, l], v[:, l] + w[:, l]
        # environment part
        out += -2 * beta * a[l] * (gamma(wl) + gamma(vl)) * g0
        out += 2 * beta * a[l] * ((_phase(wl) + _phase(vl)) * gp - (_phase(-wl) + _phase(-vl)) * gm)
        # tagged part
        out += beta * g0 * a[l] * (-gamma(vl) - gamma(wl) + 2 * gamma(ul))
        out += -beta * a[l] * gp * (_phase(-wl) + _phase(-vl) + 2 * _phase(ul))
        out += beta * a[l] * gm * (_phase(wl) + _phase(vl) + 2 * _phase(-ul))
    return out


def _main_11(g, v, a, rho):
    return rho * drift_symbol(v, a) * transform_at(g, 1, v)


def _main_12(g, v, w, a, beta):
    gv, gw, gu = transform_at(g, 1, v), transform_at(g, 1, w), transform_at(g, 1, v + w)
    ga = lambda x: np.asarray(a) * gamma(x)
    first = 2 * beta * np.sum(ga(v) + ga(w), axis=-1) * gu
    second = beta * gv * np.sum(ga(w) - ga(v + w), axis=-1)
    third = beta * gw * np.sum(ga(v) - ga(v + w), axis=-1)
    return first + second + third


def _corner_distance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    corner = np.rint(x)
    return corner, np.linalg.norm(x - corner, axis=-1)


@dataclass
class FTReport:
    residual_error_11: float
    residual_error_12: float
    decay_constant_11: float
    decay_constant_12: float
    decay_near_11: float
    decay_near_12: float
    local_mass: float
    nodes: int
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_prop_FT(g: CoefficientFunction, rates: JumpRates, rho: float, nodes: int = 1000,
                   seed: int = 0, tol: float = 1e-12, radius: float = 0.1) -> FTReport:
    """Check the transforms of the extended degree actions against main terms plus closed-form
    boundary corrections, and fit the corner decay of those corrections.

    ``g`` is a full degree-one function; ``rates`` must be nearest-neighbour.
    """
    if g.flavor != "full":
        raise ValueError("expects a full degree-one function")
    d = g.d
    beta = math.sqrt(rho * (1 - rho))
    a = nn_axis_coefficients(rates)
    res = restrict(g)
    lhs11_f = CoefficientFunction(d, apply_A_nn_degree(res, "1->1", rates, rho).data, "full")
    lhs12_f = CoefficientFunction(d, apply_A_nn_degree(res, "1->2", rates, rho).data, "full")
    rng = np.random.default_rng(seed)

    v = rng.random((nodes, d))
    vw = rng.random((nodes, 2 * d))
    lhs11 = transform_at(lhs11_f, 1, v)
    lhs12 = math.sqrt(2) * transform_at(lhs12_f, 2, vw)
    vv, ww = vw[:, :d], vw[:, d:]
    r11 = lhs11 - _main_11(g, v, a, rho)
    r12 = lhs12 - _main_12(g, vv, ww, a, beta)
    c11 = delta0_closed(g, v, a, rho)
    c12 = delta1_closed(g, vv, ww, a, beta)
    scale = max(1.0, float(np.abs(lhs11).max(initial=0.0)), float(np.abs(lhs12).max(initial=0.0)))
    err11 = float(np.abs(r11 - c11).max()) / scale
    err12 = float(np.abs(r12 - c12).max()) / scale

    mass = sum(abs(g.site(z)) for z in _closed_unit_ball(d))
    # corner decay: points within ``radius`` of a random corner, log-spread distances
    corners = rng.integers(0, 2, size=(nodes, d)).astype(float)
    dirs = rng.normal(size=(nodes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dist = radius * 10.0 ** (-4 * rng.random(nodes))
    pv = np.clip(corners + dist[:, None] * np.abs(dirs) * np.where(corners > 0, -1, 1), 0, 1)
    _, dv = _corner_distance(pv)
    ratio11 = np.abs(delta0_closed(g, pv, a, rho)) ** 2 / (dv ** 2 * max(mass, 1e-300) ** 2)
    corners2 = rng.integers(0, 2, size=(nodes, 2 * d)).astype(float)
    dirs2 = rng.normal(size=(nodes, 2 * d))
    dirs2 /= np.linalg.norm(dirs2, axis=1, keepdims=True)
    dist2 = radius * 10.0 ** (-4 * rng.random(nodes))
    pw = np.clip(corners2 + dist2[:, None] * np.abs(dirs2) * np.where(corners2 > 0, -1, 1), 0, 1)
    _, dw = _corner_distance(pw)
    ratio12 = np.abs(delta1_closed(g, pw[:, :d], pw[:, d:], a, beta)) ** 2 / (
        dw ** 2 * max(mass, 1e-300) ** 2)
    near11 = float(ratio11[dv < radius * 1e-3].max(initial=0.0))
    near12 = float(ratio12[dw < radius * 1e-3].max(initial=0.0))
    c_11, c_12 = float(ratio11.max()), float(ratio12.max())
    passed = err11 < tol and err12 < tol and np.isfinite(c_11) and np.isfinite(c_12)
    return FTReport(err11, err12, c_11, c_12, near11, near12, float(mass), nodes, bool(passed))


def _closed_unit_ball(d: int) -> list:
    return [(0,) * d] + [unit_vector(d, l, s) for l in range(d) for s in (1, -1)]


# minimizer ------------------------------------------------------------------------------------

def _axis_coefficients(rates: JumpRates) -> np.ndarray:
    return rates.spectral_coefficients()


def minimizer_hat(v, lam: float, a, rho: float) -> np.ndarray:
    """Closed-form minimizer of the single-integral quadratic form at nodes ``v``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    beta = math.sqrt(rho * (1 - rho))
    A = drift_symbol(v, a)
    D = lam + theta(v)
    return beta * rho * A / (rho ** 2 * np.abs(A) ** 2 + D ** 2)


@dataclass
class Minimizer:
    lam: float
    a: np.ndarray
    rho: float
    grid: SpectralGrid
    values: dict = field(default_factory=dict)
    imag: dict = field(default_factory=dict)

    def __call__(self, x) -> float:
        return self.values[tuple(x)]

    def as_function(self) -> CoefficientFunction:
        return CoefficientFunction(self.grid.d, {(x,): v for x, v in self.values.items()}, "full")

    @property
    def max_imag(self) -> float:
        return max(self.imag.values(), default=0.0)

    def odd_defect(self) -> float:
        return max(abs(v + self.values.get(tuple(-c for c in x), math.nan))
                   for x, v in self.values.items())

    def unit_sum(self) -> float:
        d = self.grid.d
        return sum(self.values[unit_vector(d, l, s)] for l in range(d) for s in (1, -1))


def minimizer_g_lambda(lam: float, rates: JumpRates, rho: float, grid: SpectralGrid | None = None,
                       radius: int = 3) -> Minimizer:
    """Minimizer field and its inverse transform on the box ``|x|_inf <= radius``."""
    a = _axis_coefficients(rates)
    if not np.any(a):
        raise ValueError("the minimizer degenerates without drift")
    grid = grid or default_grid(rates.d)
    if grid.n != 1:
        raise ValueError("minimizer lives on a single-variable grid")
    pts, w = grid.points()
    ghat = minimizer_hat(pts, lam, a, rho)
    from itertools import product
    out = Minimizer(lam, a, rho, grid)
    for x in product(range(-radius, radius + 1), repeat=rates.d):
        val = np.sum(np.exp(-TWO_PI * 1j * (pts @ np.array(x, dtype=float))) * ghat * w)
        out.values[x] = float(val.real)
        out.imag[x] = float(abs(val.imag))
    return out


# integrals -----------------------------------------------------------------------------------

@njit(cache=True)
def _single_sums(nodes, weights, d, lam, a, rho, beta, j0, g0, gp, gm):
    """Single integrals: step-1 integrand, plug-in-zero integrand, the two delta pieces
    and the last reduced integral."""
    N = nodes.shape[0]
    out = np.zeros(6)
    idx = np.zeros(d, dtype=np.int64)
    total = N ** d
    for flat in range(total):
        r = flat
        for l in range(d - 1, -1, -1):
            idx[l] = r % N
            r //= N
        w = 1.0
        th = 0.0
        Ai = 0.0
        phase = 0.0
        for l in range(d):
            v = nodes[idx[l]]
            w *= weights[idx[l]]
            th += math.sin(math.pi * v) ** 2
            Ai += 2.0 * a[l] * math.sin(2.0 * math.pi * v)
            phase += j0[l] * v
        th *= 2.0 / d
        D = lam + th
        den = rho * rho * Ai * Ai + D * D
        step1 = beta * beta * D / den
        # delta_2 - delta_0 with g(0) and g(+-e_l)
        re = -beta * (math.cos(2 * math.pi * phase) - 1.0)
        im = -beta * math.sin(2 * math.pi * phase)
        # delta_0 = -rho*A*g0 - rho sum a_l[(e(-v)-1) g+ - (e(v)-1) g-]
        d0r = 0.0
        d0i = -rho * Ai * g0
        for l in range(d):
            v = nodes[idx[l]]
            c = math.cos(2 * math.pi * v)
            s = math.sin(2 * math.pi * v)
            d0r += -rho * a[l] * ((c - 1.0) * gp[l]) + rho * a[l] * ((c - 1.0) * gm[l])
            d0i += -rho * a[l] * (-s * gp[l]) + rho * a[l] * (s * gm[l])
        dr = re - d0r
        di = im - d0i
        delta = (dr * dr + di * di) / D
        d2only = (re * re + im * im) / D
        # sum_j |1 - e(v_j)|^2 over |A|^2 + theta^2
        num = 0.0
        for l in range(d):
            num += 2.0 - 2.0 * math.cos(2 * math.pi * nodes[idx[l]])
        last = num / (Ai * Ai + th * th)
        out[0] += w * step1
        out[1] += w * beta * beta / D
        out[2] += w * delta
        out[3] += w * d2only
        out[4] += w * last
        out[5] += w * (D * (beta * rho * Ai / den) ** 2 + (beta * D * D / den) ** 2 / D)
    return out


@njit(cache=True)
def _node_table(nodes, d, lam, a, rho, beta):
    """Half-angle data, symbol, drift symbol and minimizer at every mesh node."""
    N = nodes.shape[0]
    per = N ** d
    SH = np.sin(math.pi * nodes)
    CH = np.cos(math.pi * nodes)
    sh = np.zeros((per, d))
    ch = np.zeros((per, d))
    th = np.zeros(per)
    A = np.zeros(per)
    for f in range(per):
        r = f
        for l in range(d - 1, -1, -1):
            k = r % N
            r //= N
            sh[f, l] = SH[k]
            ch[f, l] = CH[k]
            th[f] += SH[k] * SH[k]
            A[f] += 4.0 * a[l] * SH[k] * CH[k]
        th[f] *= 2.0 / d
    D = lam + th
    G = beta * rho * A / (rho * rho * A * A + D * D)
    return sh, ch, th, A, G


@njit(cache=True)
def _flat_weights(weights, d):
    N = weights.shape[0]
    per = N ** d
    w = np.ones(per)
    for f in range(per):
        r = f
        for l in range(d - 1, -1, -1):
            w[f] *= weights[r % N]
            r //= N
    return w


@njit(cache=True)
def _derived(sh, ch, p, q, sign, d, lam, a, rho, beta, shx, chx):
    """Half-angle data of ``x_p + sign * x_q`` and its symbol, drift symbol, minimizer."""
    th = 0.0
    A = 0.0
    for l in range(d):
        s = sh[p, l] * ch[q, l] + sign * ch[p, l] * sh[q, l]
        c = ch[p, l] * ch[q, l] - sign * sh[p, l] * sh[q, l]
        shx[l] = s
        chx[l] = c
        th += s * s
        A += 4.0 * a[l] * s * c
    th *= 2.0 / d
    D = lam + th
    return th, A, beta * rho * A / (rho * rho * A * A + D * D)


@njit(cache=True)
def _accumulate(out, wt, lam, rho, beta, d, a, g0, gp, gm,
                thv, Av, Gv, shv, chv, thw, Aw, Gw, shw, chw, Au, Gu, shu, chu):
    b = -beta / rho
    al = Av + Aw - Au
    AGv = Av * Gv
    AGw = Aw * Gw
    AGu = Au * Gu
    w = wt / (lam + thv + thw)
    out[0] += w * (b + AGu) ** 2
    out[1] += w * ((b + AGv) ** 2 + (b + AGw) ** 2)
    out[2] += w * (al * Gu) ** 2
    out[3] += w * al * al * (Gv * Gv + Gw * Gw)
    out[4] += w * beta * beta * (-2.0 * AGu + AGv + AGw) ** 2
    out[5] += w * beta * beta * (al * (2.0 * Gu + Gv + Gw)) ** 2
    out[7] += w
    if g0 == 0.0 and not np.any(gp) and not np.any(gm):
        return
    dr = 0.0
    di = 0.0
    for l in range(d):
        sv = 2.0 * shv[l] * chv[l]
        cv = 1.0 - 2.0 * shv[l] * shv[l]
        sw = 2.0 * shw[l] * chw[l]
        cw = 1.0 - 2.0 * shw[l] * shw[l]
        su = 2.0 * shu[l] * chu[l]
        cu = 1.0 - 2.0 * shu[l] * shu[l]
        # environment part; gamma(x) = 2 i sin(2 pi x)
        di += -2.0 * beta * a[l] * (2.0 * sw + 2.0 * sv) * g0
        dr += 2.0 * beta * a[l] * (cw + cv) * (gp[l] - gm[l])
        di += 2.0 * beta * a[l] * (sw + sv) * (gp[l] + gm[l])
        # tagged part
        di += beta * g0 * a[l] * (-2.0 * sv - 2.0 * sw + 4.0 * su)
        dr += -beta * a[l] * gp[l] * (cw + cv + 2.0 * cu)
        di += -beta * a[l] * gp[l] * (-sw - sv + 2.0 * su)
        dr += beta * a[l] * gm[l] * (cw + cv + 2.0 * cu)
        di += beta * a[l] * gm[l] * (sw + sv - 2.0 * su)
    out[6] += w * (dr * dr + di * di)


@njit(cache=True)
def _double_sums(nodes, weights, d, lam, a, rho, beta, g0, gp, gm):
    """All double integrals over ``(v, w)`` in one sweep.

    The integrands are singular near ``v = 0``, ``w = 0`` and ``u = v + w = 0``
    (mod 1).  A partition of unity with weights ``theta(u)``, ``theta(v)``,
    ``theta(w)`` over their sum splits each integrand into three pieces;
    each piece is integrated on a tensor mesh in the two variables it does
    not suppress, so every singular set is aligned with mesh axes.  Torus
    translations preserve measure, so the pieces add up to the full
    integral.  The integrands are symmetric in ``v, w`` and even under
    ``(v, w) -> (-v, -w)``, so the ``theta(w)`` piece equals the
    ``theta(v)`` piece and half the outer range suffices.
    """
    N = nodes.shape[0]
    per = N ** d
    sh, ch, th, A, G = _node_table(nodes, d, lam, a, rho, beta)
    W = _flat_weights(weights, d)
    out = np.zeros(8)
    shx = np.zeros(d)
    chx = np.zeros(d)
    half = per // 2
    for p in range(half):
        for q in range(per):
            wt = 2.0 * W[p] * W[q]
            # piece 1: (v, w) = (p, q), u = v + w
            thu, Au, Gu = _derived(sh, ch, p, q, 1.0, d, lam, a, rho, beta, shx, chx)
            S = thu + th[p] + th[q]
            _accumulate(out, wt * thu / S, lam, rho, beta, d, a, g0, gp, gm,
                        th[p], A[p], G[p], sh[p], ch[p], th[q], A[q], G[q], sh[q], ch[q],
                        Au, Gu, shx, chx)
            # pieces 2 and 3: (u, w) = (p, q), v = u - w
            thv, Av, Gv = _derived(sh, ch, p, q, -1.0, d, lam, a, rho, beta, shx, chx)
            S = th[p] + thv + th[q]
            _accumulate(out, 2.0 * wt * thv / S, lam, rho, beta, d, a, g0, gp, gm,
                        thv, Av, Gv, shx, chx, th[q], A[q], G[q], sh[q], ch[q],
                        A[p], G[p], sh[p], ch[p])
    return out


SINGLE_KEYS = ("I_step1", "I_free", "I_delta0_2", "I_delta2", "I_last", "I_step1_form")
DOUBLE_KEYS = ("I_first", "I_second", "I_third", "I_fourth", "I_lines34", "I_line5",
               "I_delta1", "I_inverse")


def _boundary_values(g: CoefficientFunction | None, d: int):
    if g is None:
        return 0.0, np.zeros(d), np.zeros(d)
    gp = np.array([g.site(unit_vector(d, l, 1)) for l in range(d)])
    gm = np.array([g.site(unit_vector(d, l, -1)) for l in range(d)])
    return g.site((0,) * d), gp, gm


def single_integrals(lam: float, a, rho: float, grid: SpectralGrid, j0=None,
                     g: CoefficientFunction | None = None) -> dict:
    d = grid.d
    a = np.asarray(a, dtype=float)
    j0 = np.asarray(j0 if j0 is not None else unit_vector(d, 0), dtype=float)
    g0, gp, gm = _boundary_values(g, d)
    nodes, weights = grid.axis
    vals = _single_sums(nodes, weights, d, float(lam), a, rho, math.sqrt(rho * (1 - rho)),
                        j0, g0, gp, gm)
    return dict(zip(SINGLE_KEYS, (float(x) for x in vals)))


def double_integrals(lam: float, a, rho: float, grid: SpectralGrid,
                     g: CoefficientFunction | None = None) -> dict:
    d = grid.d
    a = np.asarray(a, dtype=float)
    g0, gp, gm = _boundary_values(g, d)
    nodes, weights = grid.axis
    vals = _double_sums(nodes, weights, d, float(lam), a, rho, math.sqrt(rho * (1 - rho)),
                        g0, gp, gm)
    return dict(zip(DOUBLE_KEYS, (float(x) for x in vals)))


@dataclass
class BoundIntegrals:
    lam: float
    values: dict
    refined: dict
    boundary: dict

    def discrepancy(self, key: str) -> float:
        a, b = self.values[key], self.refined[key]
        return abs(a - b) / max(abs(b), 1e-300)

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy(k) for k in self.values)

    @property
    def lines(self) -> dict:
        v = self.refined
        return {
            "line1": 2.0 * v["I_step1_form"],
            "line2": 2.0 * v["I_delta0_2"] + self.boundary["origin_defect"] ** 2,
            "lines34": 1.5 * v["I_lines34"],
            "line5": 1.5 * v["I_line5"],
            "line6": 1.5 * v["I_delta1"],
        }

    @property
    def total(self) -> float:
        return float(sum(self.lines.values()))


def eval_bound_integrals(lam: float, rates: JumpRates, rho: float,
                         single: SpectralGrid | None = None, double: SpectralGrid | None = None,
                         j0=None, minimizer_radius: int = 1) -> BoundIntegrals:
    """Every single and double integral of the bound at ``g = g_lambda``, at two resolutions."""
    d = rates.d
    a = _axis_coefficients(rates)
    single = single or default_grid(d, 1)
    double = double or default_grid(d, 2)
    if np.any(a):
        gmin = minimizer_g_lambda(lam, rates, rho, single.refine(), radius=minimizer_radius)
        g = gmin.as_function()
        defect = gmin.values[(0,) * d] - gmin.unit_sum()
    else:
        g, defect = None, 0.0
    coarse = {**single_integrals(lam, a, rho, single, j0, g), **double_integrals(lam, a, rho, double, g)}
    fine = {**single_integrals(lam, a, rho, single.refine(), j0, g),
            **double_integrals(lam, a, rho, double.refine(), g)}
    bvals = {"origin_defect": float(defect)}
    if g is not None:
        bvals.update({f"g{list(k[0])}": v for k, v in g.items()})
    return BoundIntegrals(float(lam), coarse, fine, bvals)


def mainprop_bound(t: float, rates: JumpRates, rho: float, single: SpectralGrid | None = None,
                   double: SpectralGrid | None = None, j0=None, plug_zero: bool = False) -> float:
    """Six-line bound at ``lambda = 1/t`` with the minimizer, or with ``g = 0`` when ``plug_zero``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    lam = 1.0 / t
    if plug_zero:
        d = rates.d
        single = single or default_grid(d, 1)
        s = single_integrals(lam, _axis_coefficients(rates), rho, single, j0, None)
        return 2.0 * s["I_free"] + 2.0 * s["I_delta2"]
    return eval_bound_integrals(lam, rates, rho, single, double, j0).total


@dataclass
class ScanVerdict:
    key: str
    values: list
    bounded: bool
    last_ratio: float
    monotone_after_max: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def boundedness_verdict(key: str, values, tol: float = 0.05) -> ScanVerdict:
    """Last two values within ``tol`` and no increase after the profile's maximum."""
    vals = [float(x) for x in values]
    last = abs(vals[-1] - vals[-2]) / max(abs(vals[-2]), 1e-300)
    k = int(np.argmax(vals))
    tail = vals[k:]
    mono = all(tail[i + 1] <= tail[i] * (1 + 1e-9) for i in range(len(tail) - 1))
    return ScanVerdict(key, vals, bool(last < tol), float(last), bool(mono))


def log_slope(lams, values) -> float:
    """Least-squares slope of ``values`` against ``log(1/lambda)``."""
    x = np.log(1.0 / np.asarray(lams, dtype=float))
    return float(np.polyfit(x, np.asarray(values, dtype=float), 1)[0])


def bound_scan(rates: JumpRates, rho: float, lams=LAMBDA_SCAN, single: SpectralGrid | None = None,
               double: SpectralGrid | None = None, j0=None) -> tuple[list[BoundIntegrals], list[ScanVerdict]]:
    rows = [eval_bound_integrals(lam, rates, rho, single, double, j0) for lam in lams]
    keys = ("I_step1", "I_first", "I_second", "I_third", "I_fourth", "I_delta0_2", "I_delta1")
    verdicts = [boundedness_verdict(k, [r.refined[k] for r in rows]) for k in keys]
    verdicts.append(boundedness_verdict("total", [r.total for r in rows]))
    return rows, verdicts


def control_scan(d: int, rho: float, lams=LAMBDA_SCAN, grid: SpectralGrid | None = None) -> tuple[list, float]:
    """Step-1 integral without drift, which should grow like ``log(1/lambda)`` in d=2."""
    grid = grid or default_grid(d, 1)
    vals = [single_integrals(lam, np.zeros(d), rho, grid)["I_step1"] for lam in lams]
    return vals, log_slope(lams, vals)
