import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagged_exclusion.lattice import (DensityParams, JumpRates, ReferenceConfig,
                                      build_nn_rates, check_torus, drift_value, exchange,
                                      generates_lattice, tagged_shift, wrap)


def test_rates_reject_origin_and_negative():
    with pytest.raises(ValueError):
        JumpRates(1, {(0,): 1.0})
    with pytest.raises(ValueError):
        JumpRates(1, {(1,): -0.1})
    with pytest.raises(ValueError):
        JumpRates(3, {(1, 0, 0): 1.0})


def test_split_recombines(long_range_d1):
    s, a = long_range_d1.symmetric(), long_range_d1.antisymmetric()
    for z in [(1,), (-1,), (2,), (-2,), (3,)]:
        assert math.isclose(s(z) + a(z), long_range_d1(z), abs_tol=1e-15)
        assert math.isclose(s(z), s((-z[0],)))
        assert math.isclose(a(z), -a((-z[0],)), abs_tol=1e-15)


def test_irreducibility_by_minors():
    assert generates_lattice([(2,), (3,)], 1)
    assert not generates_lattice([(2,), (4,)], 1)
    assert generates_lattice([(1, 0), (0, 1)], 2)
    assert not generates_lattice([(1, 1), (1, -1)], 2)
    with pytest.raises(ValueError):
        JumpRates(1, {(2,): 1.0}).validate()
    with pytest.raises(ValueError):
        JumpRates(2, {(1, 0): 1.0}).validate()


def test_drift_and_nn_surrogate(drift_d2):
    assert np.allclose(drift_d2.drift, [0.4, 0.2])
    nn = build_nn_rates(drift_d2)
    assert np.allclose(nn.drift, drift_d2.drift)
    assert all(sum(abs(c) for c in z) == 1 for z in nn.vectors)
    sym = JumpRates(1, {(1,): 0.5, (-1,): 0.5, (2,): 0.25, (-2,): 0.25})
    assert build_nn_rates(sym).symmetric()((1,)) == 1.0


def test_spectral_coefficients(asym_d1, drift_d2):
    assert np.allclose(asym_d1.spectral_coefficients(), [0.2])
    assert np.allclose(drift_d2.spectral_coefficients(), [0.2, 0.1])


@given(st.floats(0, 1))
def test_beta_squared(rho):
    b = DensityParams(rho).beta
    assert b >= 0 and math.isclose(b * b, rho * (1 - rho), abs_tol=1e-15)


def test_density_range():
    with pytest.raises(ValueError):
        DensityParams(1.5)


def test_exchange_swaps():
    cfg = ReferenceConfig.from_sites(8, 1, [(1,)])
    out = exchange(cfg, (1,), (2,))
    assert out[(1,)] == 0 and out[(2,)] == 1 and out.n == cfg.n
    assert exchange(out, (1,), (2,)) == cfg
    both = ReferenceConfig.from_sites(8, 1, [(1,), (2,)])
    assert exchange(both, (1,), (2,)) == both
    with pytest.raises(ValueError):
        exchange(cfg, (1,), (1,))
    with pytest.raises(IndexError):
        exchange(cfg, (1,), (9,))


def test_tagged_shift_leaves_hole_behind():
    cfg = ReferenceConfig.from_sites(8, 1, [(3,)])
    out = tagged_shift(cfg, (1,))
    assert out[(0,)] == 1 and out[(-1,)] == 0 and out[(2,)] == 1 and out.n == 2
    with pytest.raises(ValueError):
        tagged_shift(ReferenceConfig.from_sites(8, 1, [(1,)]), (1,))


def test_tagged_shift_d2():
    cfg = ReferenceConfig.from_sites(6, 2, [(1, 1), (-1, 0)])
    out = tagged_shift(cfg, (0, 1))
    assert out.occupied() == sorted([(0, 0), (1, 0), (-1, -1)])


@settings(max_examples=50)
@given(st.lists(st.integers(-3, 4), unique=True, max_size=6), st.integers(-3, 4),
       st.integers(-3, 4))
def test_moves_conserve_particles(sites, i, j):
    sites = [(s,) for s in sites if s != 0]
    cfg = ReferenceConfig.from_sites(8, 1, sites)
    if i != j and i != 0 and j != 0:
        assert exchange(cfg, (i,), (j,)).n == cfg.n
    if i != 0 and cfg[(i,)] == 0:
        out = tagged_shift(cfg, (i,))
        assert out.n == cfg.n and out[(0,)] == 1


def test_drift_value_examples(asym_d1):
    empty = ReferenceConfig.from_sites(8, 1, [])
    full = ReferenceConfig.from_sites(8, 1, [(1,), (-1,)])
    assert np.allclose(drift_value(empty, asym_d1, 0.5), [0.2])
    assert np.allclose(drift_value(full, asym_d1, 0.5), [-0.2])
    rev = drift_value(empty, asym_d1, 0.5, "reversed")
    assert np.allclose(rev, [-0.2])
    assert np.allclose(drift_value(empty, asym_d1, 0.5, "symmetric"), [0.0])


def test_wrap_and_torus_checks():
    assert wrap((5,), 8) == (-3,) and wrap((4,), 8) == (4,) and wrap((-4,), 8) == (4,)
    with pytest.raises(ValueError):
        check_torus(JumpRates(1, {(2,): 1.0, (1,): 1.0}), 8)
    with pytest.raises(ValueError):
        ReferenceConfig(np.zeros(8, dtype=np.uint8))
