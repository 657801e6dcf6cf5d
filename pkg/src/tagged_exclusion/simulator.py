"""Monte Carlo simulation of the tagged particle in its own reference frame.

Trials are reproducible: trial ``r`` of a run with root seed ``seed``
draws its initial configuration and its event stream from
``SeedSequence(seed, spawn_key=(stream, r, ·))``.  Runs that share
``stream`` and ``r`` therefore share random numbers, which is how the
coupled estimates below get their variance reduction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import JumpRates, ReferenceConfig, check_torus, wrap

STREAM_MAIN = 0
STREAM_TILTED = 1
STREAM_INDEPENDENT = 2


@dataclass(frozen=True)
class InitialMeasure:
    """Initial law of the environment.

    ``kind`` is ``"stationary"`` (i.i.d. Bernoulli off the origin),
    ``"tilted"`` (same, with site ``site`` also occupied) or
    ``"canonical"`` (exactly ``n`` particles, uniformly placed).
    """

    kind: str
    rho: float = 0.5
    site: tuple | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind not in ("stationary", "tilted", "canonical"):
            raise ValueError(f"unknown initial measure {self.kind!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.rho}")
        if self.kind == "tilted":
            if self.site is None or all(c == 0 for c in self.site):
                raise ValueError("the tilted measure needs a nonzero site")
        if self.kind == "canonical" and (self.n is None or self.n < 1):
            raise ValueError("the canonical measure needs a particle count n >= 1")

    @classmethod
    def stationary(cls, rho: float) -> "InitialMeasure":
        return cls("stationary", rho)

    @classmethod
    def tilted(cls, rho: float, site) -> "InitialMeasure":
        return cls("tilted", rho, tuple(int(c) for c in site))

    @classmethod
    def canonical(cls, n: int) -> "InitialMeasure":
        return cls("canonical", 0.0, None, int(n))

    def effective_density(self, L: int, d: int) -> float:
        """Probability that a given non-origin site is occupied."""
        if self.kind == "canonical":
            return (self.n - 1) / (L ** d - 1)
        return self.rho


def default_torus_size(rates: JumpRates, t_end: float) -> int:
    L = max(32, 8 * max(rates.radius, 1) * math.ceil(math.sqrt(t_end)))
    L += L % 2
    while L <= 4 * rates.radius:
        L += 2
    return L


# geometry tables ----------------------------------------------------------

def _flat(coords: np.ndarray, L: int) -> np.ndarray:
    coords = np.mod(coords, L)
    if coords.shape[-1] == 1:
        return coords[..., 0]
    return coords[..., 0] * L + coords[..., 1]


def _all_coords(L: int, d: int) -> np.ndarray:
    """Lab coordinates of flattened index ``i`` in row ``i``."""
    if d == 1:
        return np.arange(L)[:, None]
    a, b = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


@dataclass(frozen=True, eq=False)
class _Geometry:
    L: int
    d: int
    vec: np.ndarray
    rates: np.ndarray
    nbr: np.ndarray
    back: np.ndarray

    @classmethod
    def build(cls, rates: JumpRates, L: int) -> "_Geometry":
        rates.validate()
        check_torus(rates, L)
        d = rates.d
        vec = np.array(rates.vectors, dtype=np.int64).reshape(-1, d)
        r = np.array([rate for _, rate in rates.items()], dtype=float)
        coords = _all_coords(L, d)
        nbr = np.stack([_flat(coords + z, L) for z in vec], axis=1).astype(np.int64)
        back = np.stack([_flat(coords - z, L) for z in vec], axis=1).astype(np.int64)
        return cls(L, d, vec, r, nbr, back)

    @property
    def n_sites(self) -> int:
        return self.L ** self.d


def _seed_sequence(seed: int, stream: int, trial: int, part: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(trial), int(part)))


def _kernel_seed(seed: int, stream: int, trial: int) -> int:
    return int(_seed_sequence(seed, stream, trial, 1).generate_state(1, dtype=np.uint32)[0])


def _initial_array(measure: InitialMeasure, L: int, d: int, seed: int, stream: int,
                   trial: int) -> np.ndarray:
    rng = np.random.default_rng(_seed_sequence(seed, stream, trial, 0))
    n_sites = L ** d
    if measure.kind == "canonical":
        if measure.n > n_sites:
            raise ValueError(f"cannot place {measure.n} particles on {n_sites} sites")
        occ = np.zeros(n_sites, dtype=np.uint8)
        occ[1 + rng.permutation(n_sites - 1)[: measure.n - 1]] = 1
        occ[0] = 1
        return occ
    occ = (rng.random(n_sites) < measure.rho).astype(np.uint8)
    occ[0] = 1
    if measure.kind == "tilted":
        occ[_flat(np.array(wrap(measure.site, L)), L)] = 1
    return occ


def sample_initial(measure: InitialMeasure, L: int, d: int, seed: int,
                   trial: int = 0, stream: int = STREAM_MAIN) -> ReferenceConfig:
    """Draw one reference-frame configuration from ``measure``."""
    if L % 2:
        raise ValueError(f"torus side must be even, got {L}")
    occ = _initial_array(measure, L, d, seed, stream, trial)
    return ReferenceConfig(occ.reshape((L,) * d))


# single trajectories --------------------------------------------------------

@dataclass(frozen=True)
class Event:
    time: float
    kind: str          # "exchange" or "shift"
    source: tuple      # reference-frame site (exchange) or jump vector (shift)
    target: tuple


@dataclass(frozen=True, eq=False)
class TaggedTrajectory:
    """A path observed on ``t_grid`` together with its event log."""

    rates: JumpRates
    t_grid: np.ndarray
    x: np.ndarray            # (T, d) displacement
    counts: np.ndarray       # (T, K) shift counts per jump vector
    compensators: np.ndarray  # (T, K)
    events: tuple
    final: ReferenceConfig
    truncated: bool = False

    @property
    def martingales(self) -> np.ndarray:
        return self.counts - self.compensators


def _to_reference(geom: _Geometry, occ: np.ndarray, tag: int) -> ReferenceConfig:
    shape = (geom.L,) * geom.d
    tag_coords = np.unravel_index(tag, shape)
    lab = occ.reshape(shape)
    return ReferenceConfig(np.roll(lab, tuple(-int(c) for c in tag_coords),
                                   axis=tuple(range(geom.d))))


def evolve(cfg: ReferenceConfig, rates: JumpRates, t_end: float, seed: int,
           t_grid=None, max_events: int = 1_000_000) -> TaggedTrajectory:
    """Run the reference-frame dynamics from ``cfg`` up to ``t_end``."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    geom = _Geometry.build(rates, cfg.L)
    grid = np.asarray(t_grid if t_grid is not None else [0.0, t_end], dtype=float)
    if grid[-1] > t_end or np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise ValueError("time grid must be sorted inside [0, t_end]")
    T, K, d = len(grid), len(geom.rates), geom.d
    # the time grid drives the loop, so append t_end when absent
    run_grid = grid if grid[-1] == t_end else np.append(grid, t_end)
    Tr = len(run_grid)
    out_x, out_ix = np.zeros((Tr, d)), np.zeros((Tr, d))
    out_n, out_a = np.zeros((Tr, K)), np.zeros((Tr, K))
    ev_t = np.zeros(max_events)
    ev_kind, ev_a, ev_b, ev_tag = (np.zeros(max_events, dtype=np.int64) for _ in range(4))
    occ = np.ascontiguousarray(cfg.occupancy.ravel().astype(np.uint8))
    tag, n_ev = _kernels.run_trial(occ, 0, geom.nbr, geom.back, geom.vec, geom.rates,
                                   run_grid, np.uint32(seed % 2**32), out_x, out_n, out_a,
                                   out_ix, ev_t, ev_kind, ev_a, ev_b, ev_tag)
    coords = _all_coords(geom.L, d)
    events = []
    for e in range(min(n_ev, max_events)):
        t0 = coords[ev_tag[e]]
        if ev_kind[e] == 1:
            z = tuple(int(c) for c in geom.vec[ev_b[e]])
            events.append(Event(float(ev_t[e]), "shift", z, z))
        else:
            i = wrap(tuple(int(c) for c in coords[ev_a[e]] - t0), geom.L)
            j = wrap(tuple(int(c) for c in coords[ev_b[e]] - t0), geom.L)
            events.append(Event(float(ev_t[e]), "exchange", i, j))
    return TaggedTrajectory(rates, grid, out_x[:T], out_n[:T], out_a[:T], tuple(events),
                            _to_reference(geom, occ, tag), truncated=n_ev > max_events)


# batches ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Grid observations of many independent trials."""

    rates: JumpRates
    measure: InitialMeasure
    L: int
    seed: int
    stream: int
    t_grid: np.ndarray
    x: np.ndarray             # (trials, T, d)
    counts: np.ndarray        # (trials, T, K)
    compensators: np.ndarray  # (trials, T, K)
    x_integral: np.ndarray    # (trials, T, d), integral of x over [0, t]
    final: np.ndarray = field(repr=False)  # (trials, L^d) reference-frame occupancy

    @property
    def trials(self) -> int:
        return self.x.shape[0]

    @property
    def density(self) -> float:
        return self.measure.effective_density(self.L, self.rates.d)

    @property
    def martingales(self) -> np.ndarray:
        return self.counts - self.compensators

    def mean_position(self) -> np.ndarray:
        """Exact ``E[x(t)]`` under a stationary start, shape (T, d)."""
        return np.outer(self.t_grid, self.rates.drift * (1.0 - self.density))


def simulate_batch(measure: InitialMeasure, rates: JumpRates, t_grid, trials: int,
                   seed: int, L: int | None = None, stream: int = STREAM_MAIN,
                   first_trial: int = 0) -> TrajectoryBatch:
    """Run ``trials`` independent trajectories observed on ``t_grid``."""
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing and nonnegative")
    if trials < 1:
        raise ValueError("need at least one trial")
    L = L or default_torus_size(rates, grid[-1])
    geom = _Geometry.build(rates, L)
    d, K, T = rates.d, len(geom.rates), len(grid)
    occ0 = np.empty((trials, geom.n_sites), dtype=np.uint8)
    seeds = np.empty(trials, dtype=np.uint32)
    for r in range(trials):
        trial = first_trial + r
        occ0[r] = _initial_array(measure, L, d, seed, stream, trial)
        seeds[r] = _kernel_seed(seed, stream, trial)
    tags = np.zeros(trials, dtype=np.int64)
    out_x, out_ix = np.zeros((trials, T, d)), np.zeros((trials, T, d))
    out_n, out_a = np.zeros((trials, T, K)), np.zeros((trials, T, K))
    final_occ = np.empty_like(occ0)
    final_tag = np.zeros(trials, dtype=np.int64)
    _kernels.run_batch(occ0, tags, geom.nbr, geom.back, geom.vec, geom.rates, grid, seeds,
                       out_x, out_n, out_a, out_ix, final_occ, final_tag)
    shape = (L,) * d
    final = np.empty_like(final_occ)
    axes = tuple(range(d))
    for r in range(trials):
        tc = np.unravel_index(final_tag[r], shape)
        final[r] = np.roll(final_occ[r].reshape(shape), tuple(-int(c) for c in tc),
                           axis=axes).ravel()
    return TrajectoryBatch(rates, measure, L, int(seed), stream, grid,
                           out_x, out_n, out_a, out_ix, final)


# estimators ---------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceTable:
    t: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    trials: int
    L: int
    seed: int

    def rows(self):
        for k in range(len(self.t)):
            yield (float(self.t[k]), float(self.estimate[k]), float(self.stderr[k]),
                   self.trials, self.L, self.seed)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "estimate", "stderr", "trials", "L", "seed"])
        for t, v, se, n, L, s in self.rows():
            w.writerow([f"{t:.17g}", f"{v:.17g}", f"{se:.17g}", n, L, s])
        return buf.getvalue()


def _jackknife_variance(x: np.ndarray) -> tuple[float, float]:
    """Sample variance of rows of ``x`` (summed over columns) with jackknife stderr."""
    n = x.shape[0]
    mean = x.mean(axis=0)
    dev2 = ((x - mean) ** 2).sum(axis=1)
    est = dev2.sum() / (n - 1)
    # leave-one-out variances in closed form
    loo = (dev2.sum() - n / (n - 1) * dev2) / (n - 2) if n > 2 else np.full(n, est)
    se = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return float(est), se


def variance_from_batch(batch: TrajectoryBatch, centering: str = "exact") -> VarianceTable:
    if batch.trials < 2:
        raise ValueError("need at least two trials")
    est, se = np.zeros(len(batch.t_grid)), np.zeros(len(batch.t_grid))
    center = batch.mean_position()
    for k in range(len(batch.t_grid)):
        xk = batch.x[:, k, :]
        if centering == "exact":
            y = ((xk - center[k]) ** 2).sum(axis=1)
            est[k] = y.mean()
            se[k] = y.std(ddof=1) / math.sqrt(len(y))
        elif centering == "empirical":
            est[k], se[k] = _jackknife_variance(xk)
        else:
            raise ValueError(f"unknown centering {centering!r}")
    return VarianceTable(batch.t_grid.copy(), est, se, batch.trials, batch.L, batch.seed)


def estimate_variance(measure: InitialMeasure, rates: JumpRates, t_grid, trials: int,
                      seed: int, L: int | None = None,
                      centering: str = "exact") -> VarianceTable:
    """Estimate ``V(t) = E|x(t) - E x(t)|^2`` on a time grid."""
    if trials < 2:
        raise ValueError("need at least two trials")
    batch = simulate_batch(measure, rates, t_grid, trials, seed, L)
    return variance_from_batch(batch, centering)


@dataclass(frozen=True)
class IdentityReport:
    t: float
    L: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    linear_term: float
    correlation_term: float
    correlation_stderr: float

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.lhs_stderr, self.rhs_stderr)

    @property
    def z(self) -> float:
        se = self.combined_stderr
        diff = self.lhs - self.rhs
        return diff / se if se > 0 else (0.0 if diff == 0 else math.inf)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["combined_stderr"] = self.combined_stderr
        out["z"] = self.z
        return out


def check_variance_identity(rates: JumpRates, rho: float, t: float, trials: int, seed: int,
                            L: int | None = None, n_grid: int = 2) -> IdentityReport:
    """Compare a direct variance estimate with the drift-correlation decomposition.

    The decomposition is ``(1-rho) sum |j|^2 p(j) t`` plus
    ``2 rho sum_j j p(j) . int_0^t (E x(s) - E_{-j} x(s)) ds`` where
    ``E_{-j}`` starts from the stationary law with site ``-j`` also
    occupied.  Each tilted run is coupled to the stationary run through
    shared random numbers; the left side uses an independent stream.
    """
    L = L or default_torus_size(rates, t)
    grid = np.linspace(0.0, t, n_grid)[1:] if n_grid > 1 else np.array([t])
    base = InitialMeasure.stationary(rho)
    lhs_batch = simulate_batch(base, rates, grid, trials, seed, L, stream=STREAM_INDEPENDENT)
    lhs_table = variance_from_batch(lhs_batch, "exact")
    lhs, lhs_se = float(lhs_table.estimate[-1]), float(lhs_table.stderr[-1])

    linear = (1.0 - rho) * sum(r * sum(c * c for c in z) for z, r in rates.items()) * t
    main = simulate_batch(base, rates, grid, trials, seed, L, stream=STREAM_MAIN)
    integral_main = main.x_integral[:, -1, :]
    # per-trial contribution, so coupled differences keep their correlation
    contrib = np.zeros(trials)
    for z, r in rates.items():
        tilt = InitialMeasure.tilted(rho, tuple(-c for c in z))
        other = simulate_batch(tilt, rates, grid, trials, seed, L, stream=STREAM_MAIN)
        diff = integral_main - other.x_integral[:, -1, :]
        contrib += 2.0 * rho * r * diff @ np.asarray(z, dtype=float)
    corr = float(contrib.mean())
    corr_se = float(contrib.std(ddof=1) / math.sqrt(trials))
    return IdentityReport(float(t), L, lhs, lhs_se, linear + corr, corr_se, linear, corr, corr_se)


@dataclass(frozen=True)
class MartingaleRow:
    quantity: str
    estimate: float
    stderr: float
    target: float

    @property
    def z(self) -> float:
        diff = self.estimate - self.target
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if abs(diff) < 1e-12 else math.inf


def _mean_se(y: np.ndarray) -> tuple[float, float]:
    n = len(y)
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def martingale_diagnostics(batch: TrajectoryBatch, time_index: int = -1) -> list[MartingaleRow]:
    """Second moments and orthogonality of the per-jump martingales."""
    if batch.trials < 2:
        raise ValueError("need at least two trajectories")
    t = float(batch.t_grid[time_index])
    rho = batch.density
    M = batch.martingales[:, time_index, :]
    vecs = batch.rates.vectors
    rows = []
    for k, z in enumerate(vecs):
        est, se = _mean_se(M[:, k] ** 2)
        rows.append(MartingaleRow(f"E[M_{z}^2]", est, se, (1 - rho) * batch.rates(z) * t))
    for k in range(len(vecs)):
        for l in range(k + 1, len(vecs)):
            est, se = _mean_se(M[:, k] * M[:, l])
            rows.append(MartingaleRow(f"E[M_{vecs[k]} M_{vecs[l]}]", est, se, 0.0))
    mean = batch.mean_position()[time_index]
    for c in range(batch.rates.d):
        est, se = _mean_se(batch.x[:, time_index, c])
        rows.append(MartingaleRow(f"E[x_{c}]", est, se, float(mean[c])))
    return rows
