import json
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagged_exclusion.duality import (OPERATORS, CoefficientFunction, LocalObservable,
                                      apply_A_nn_degree, apply_coefficient_operator,
                                      apply_extended, box_sets, canonical, duality_oracle,
                                      env_nn_operator, ext_operator, extend,
                                      extended_A_table, function_space_image, h1_coefficient,
                                      hm1_on_box, origin_correction_defect, lift_free,
                                      psi_basis, psi_expand, reconstruct, restrict,
                                      shift_set, tilde_extend)
from tagged_exclusion.lattice import JumpRates, build_nn_rates

RHO = 0.4
BETA = math.sqrt(RHO * (1 - RHO))


def random_degree_one(d, seed, radius=2, flavor="punctured"):
    rng = np.random.default_rng(seed)
    sites = [s for s in product(range(-radius, radius + 1), repeat=d)
             if flavor == "full" or any(s)]
    return CoefficientFunction(d, {(x,): float(rng.normal()) for x in sites}, flavor)


def random_degree_two(d, seed, radius=2):
    rng = np.random.default_rng(seed)
    sets = [B for B in box_sets(d, radius, 2) if len(B) == 2]
    return CoefficientFunction(d, {B: float(rng.normal()) for B in sets})


# expansion -----------------------------------------------------------------------------

def test_centered_occupation_has_one_coefficient():
    j0 = (2,)
    obs = LocalObservable.from_callable([j0], lambda z: RHO - z[j0])
    coef = psi_expand(obs, RHO)
    assert coef.keys() == {(j0,)} and math.isclose(coef((j0,)), -BETA)


def test_constant_and_basis_elements():
    assert psi_expand(LocalObservable.constant(3.0), RHO, 1).data == {(): 3.0}
    B = ((-1,), (2,))
    coef = psi_expand(psi_basis(B, RHO), RHO)
    assert coef.keys() == {B} and math.isclose(coef(B), 1.0)


def test_expand_rejects_degenerate_density_and_origin():
    obs = LocalObservable.from_callable([(1,)], lambda z: z[(1,)])
    for rho in (0.0, 1.0):
        with pytest.raises(ValueError):
            psi_expand(obs, rho)
    with pytest.raises(ValueError):
        psi_expand(LocalObservable.from_callable([(0,)], lambda z: z[(0,)]), RHO)


@settings(max_examples=40)
@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.floats(0.05, 0.95))
def test_reconstruction_round_trip(vals, rho):
    support = [(-1,), (1,), (3,)]
    obs = LocalObservable(support, np.array(vals).reshape(2, 2, 2))
    back = reconstruct(psi_expand(obs, rho, tol=0.0), rho, support)
    assert np.allclose(back.values, obs.values, atol=1e-12)


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_inner_product_is_expectation(a, b):
    support = [(1, 0), (0, 2)]
    f = LocalObservable(support, np.array(a).reshape(2, 2))
    g = LocalObservable(support, np.array(b).reshape(2, 2))
    lhs = psi_expand(f, RHO, tol=0.0).inner(psi_expand(g, RHO, tol=0.0))
    assert math.isclose(lhs, f.product(g).expectation(RHO), rel_tol=1e-10, abs_tol=1e-10)


# coefficient operators ------------------------------------------------------------------

def test_duality_oracle_d1_full_box(long_range_d1):
    results = duality_oracle(long_range_d1, RHO, box_sets(1, 2))
    assert len({r.basis for r in results}) == 15
    assert max(r.error for r in results) < 1e-12


def test_duality_oracle_d2_small(drift_d2):
    sets = box_sets(2, 1, 2)
    results = duality_oracle(drift_d2, RHO, sets)
    assert max(r.error for r in results) < 1e-12


def test_degree_bookkeeping(asym_d1):
    f = random_degree_two(1, 3)
    for op, shift in (("Se", 0), ("Ae0", 0), ("At0", 0), ("Ae+", 1), ("At+", 1),
                      ("Ae-", -1), ("At-", -1)):
        out = apply_coefficient_operator(op, f, asym_d1, RHO)
        assert out.degrees() <= {2 + shift}, op


def test_symmetric_rates_kill_antisymmetric_parts():
    sym = JumpRates(1, {(1,): 0.5, (-1,): 0.5, (2,): 0.2, (-2,): 0.2})
    f = random_degree_two(1, 4) + random_degree_one(1, 5)
    for op in ("Ae0", "Ae+", "Ae-", "At0", "At+", "At-"):
        assert apply_coefficient_operator(op, f, sym, RHO).max_abs() == 0.0


def test_exchange_squares_to_minus_two(asym_d1):
    f = random_degree_two(1, 6) + random_degree_one(1, 7)
    N = lambda g: apply_coefficient_operator("N", g, asym_d1, RHO)
    assert N(N(f)).distance(N(f).scale(-2.0)) < 1e-12


def test_environment_laplacian_on_degree_one(asym_d1):
    x = (2,)
    out = apply_coefficient_operator("Se", CoefficientFunction.indicator(1, [x]), asym_d1, RHO)
    s = asym_d1.symmetric()
    assert math.isclose(out((x,)), -(s((1,)) + s((-1,))))
    assert math.isclose(out(((3,),)), s((1,))) and math.isclose(out(((1,),)), s((-1,)))


def test_tagged_shift_of_sets():
    assert shift_set(((1,), (3,)), (2,)) == ((3,), (5,))
    # a set containing -x: the old origin takes its place after the shift
    assert shift_set(((-2,), (1,)), (2,)) == ((2,), (3,))


# nearest-neighbour closed forms ---------------------------------------------------------

def test_closed_forms_match_generic(drift_d2):
    nn = build_nn_rates(drift_d2)
    g = random_degree_one(2, 8)
    generic11 = (apply_coefficient_operator("Ae0", g, nn, RHO)
                 + apply_coefficient_operator("At0", g, nn, RHO)).part(1)
    assert apply_A_nn_degree(g, "1->1", nn, RHO).distance(generic11) < 1e-12
    e12 = apply_coefficient_operator("Ae+", g, nn, RHO)
    t12 = apply_coefficient_operator("At+", g, nn, RHO).part(2)
    assert apply_A_nn_degree(g, "1->2", nn, RHO, "e").distance(e12) < 1e-12
    assert apply_A_nn_degree(g, "1->2", nn, RHO, "t").distance(t12) < 1e-12


def test_closed_form_far_from_origin_for_odd_g(drift_d2):
    nn = build_nn_rates(drift_d2)
    a1, a2 = drift_d2.spectral_coefficients()
    g = random_degree_one(2, 9, radius=4)
    g = CoefficientFunction.degree_one(2, {x: g.site(x) - g.site((-x[0], -x[1]))
                                           for (x,) in g.keys()})
    out = apply_A_nn_degree(g, "1->1", nn, RHO)
    for x in [(3, 1), (-2, 3), (2, -2)]:
        want = -RHO * (a1 * (g.site((x[0] + 1, x[1])) - g.site((x[0] - 1, x[1])))
                       + a2 * (g.site((x[0], x[1] + 1)) - g.site((x[0], x[1] - 1))))
        assert math.isclose(out((x,)), want, abs_tol=1e-14)


def test_closed_form_indicator_against_function_space():
    nn = JumpRates(1, {(1,): 0.7, (-1,): 0.3})
    g = CoefficientFunction.indicator(1, [(1,)])
    brute = (function_space_image("Ae0", ((1,),), nn, 0.5)
             + function_space_image("At0", ((1,),), nn, 0.5)).part(1)
    assert apply_A_nn_degree(g, "1->1", nn, 0.5).distance(brute) < 1e-12


def test_closed_forms_need_nn_rates(long_range_d1):
    with pytest.raises(ValueError):
        apply_A_nn_degree(random_degree_one(1, 1), "1->1", long_range_d1, RHO)
    sym = JumpRates(1, {(1,): 1.0, (-1,): 1.0})
    assert apply_A_nn_degree(random_degree_one(1, 1), "1->2", sym, RHO).max_abs() == 0


# extensions ------------------------------------------------------------------------------

def test_ext_degree_one_average():
    for d in (1, 2):
        g = random_degree_one(d, 10)
        ext = extend(g, "ext")
        units = [x for x in product((-1, 0, 1), repeat=d) if sum(map(abs, x)) == 1]
        assert math.isclose(ext(((0,) * d,)), sum(g.site(z) for z in units) / (2 * d))


def test_ext_degree_two_far_case():
    f = random_degree_two(2, 11)
    ext = extend(f, "ext")
    y = (2, 1)
    units = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert math.isclose(ext(((0, 0), y)), sum(f((z, y)) for z in units) / 4)
    with pytest.raises(NotImplementedError):
        extend(CoefficientFunction(1, {((1,), (2,), (3,)): 1.0}), "ext")


def test_odot_restrict_round_trip():
    f = random_degree_two(2, 12) + random_degree_one(2, 13)
    assert restrict(extend(f, "odot")).distance(f) == 0.0


def test_extended_exchange_is_twice_laplacian():
    out = apply_extended("S_ext", CoefficientFunction.indicator(2, [(0, 0)], "full"))
    assert out(((0, 0),)) == -8.0
    assert all(out((z,)) == 2.0 for z in [(1, 0), (-1, 0), (0, 1), (0, -1)])


def test_extended_antisymmetric_is_restricted(drift_d2):
    nn = build_nn_rates(drift_d2)
    g = random_degree_one(2, 14, flavor="full")
    for op, kind in (("A11", "1->1"), ("A12", "1->2")):
        out = apply_extended(op, g, nn, RHO)
        ref = apply_A_nn_degree(restrict(g), kind, nn, RHO)
        assert all(not any(s == (0, 0) for s in k) for k in out.keys())
        assert restrict(out).distance(ref) < 1e-14


@pytest.mark.parametrize("part", ["both", "e", "t"])
def test_case_tables_match(drift_d2, part):
    nn = build_nn_rates(drift_d2)
    a1, a2 = drift_d2.spectral_coefficients()
    g = random_degree_one(2, 15, radius=3, flavor="full")
    table = extended_A_table("A12", g, a1, a2, RHO, part)
    assert table.distance(apply_extended("A12", g, nn, RHO, part)) < 1e-13
    if part == "both":
        t11 = extended_A_table("A11", g, a1, a2, RHO)
        assert t11.distance(apply_extended("A11", g, nn, RHO)) < 1e-13


@pytest.mark.parametrize("d", [1, 2])
def test_extension_decomposition(d):
    for seed in range(5):
        g = random_degree_one(d, seed)
        rng = np.random.default_rng(100 + seed)
        g_prime = CoefficientFunction(d, {**g.data, ((0,) * d,): float(rng.normal())}, "full")
        assert origin_correction_defect(g, g_prime) < 1e-14


# free lifts --------------------------------------------------------------------------------

def test_lift_is_symmetric_and_off_diagonal():
    f = random_degree_two(1, 16)
    free = lift_free(f, 2)
    for (x, y), v in free.items():
        assert x != y and free((y, x)) == v


def test_tilde_first_step_d1():
    f = extend(random_degree_two(1, 17), "odot")
    free = lift_free(f, 2)
    res = tilde_extend(f, 2).values
    for z in [(-1,), (0,), (2,)]:
        want = 0.25 * (free(((z[0] + 1,), z)) + free(((z[0] - 1,), z))
                       + free((z, (z[0] + 1,))) + free((z, (z[0] - 1,))))
        assert math.isclose(res((z, z)), want, abs_tol=1e-15)
    for k, v in free.items():
        assert res(k) == v
    with pytest.raises(NotImplementedError):
        tilde_extend(f, 3)


def test_tilde_monte_carlo_agrees():
    f = extend(random_degree_two(1, 18), "odot")
    p = ((1,), (1,))
    mc = tilde_extend(f, 2, "monte-carlo", points=[p], paths=4000, seed=3)
    ex = tilde_extend(f, 2, points=[p])
    assert abs(mc.values(p) - ex.values(p)) < 4 * mc.stderr[p] + 1e-12


def test_tilde_identities_for_degree_actions(drift_d2):
    nn = build_nn_rates(drift_d2)
    for seed in range(3):
        g = random_degree_one(2, 20 + seed)
        g_prime = CoefficientFunction(2, {**g.data, ((0, 0),): 1.5}, "full")
        # degree one: no coincident tuples, so the tilde extension is the lift
        assert tilde_extend(g_prime, 1).values.distance(lift_free(g_prime, 1)) == 0.0
        lhs = tilde_extend(extend(apply_A_nn_degree(g, "1->2", nn, RHO), "odot"), 2).values
        lhs = CoefficientFunction(2, {k: v for k, v in lhs.data.items() if k[0] != k[1]}, "free")
        rhs = lift_free(apply_extended("A12", g_prime, nn, RHO), 2)
        assert lhs.distance(rhs) < 1e-14


# norm comparisons between punctured and extended operators ----------------------------------

@pytest.mark.parametrize("d", [1, 2])
def test_extension_norm_ratios_finite(d, asym_d1, drift_d2):
    rates = asym_d1 if d == 1 else drift_d2
    env = env_nn_operator(rates)
    h1_ratios, hm1_ratios = [], []
    for seed in range(4):
        for f in (random_degree_one(d, seed, 1), random_degree_two(d, seed, 1)):
            h1 = h1_coefficient(f, 0.1, env)
            h1_ext = h1_coefficient(extend(f, "ext"), 0.1, ext_operator)
            h1_ratios.append(h1 / h1_ext)
            if d == 1 or f.degrees() == {1}:
                hm1 = hm1_on_box(f, 0.1, env, 3)
                hm1_odot = hm1_on_box(extend(f, "odot"), 0.1, ext_operator, 3)
                hm1_ratios.append(hm1 / hm1_odot)
    assert all(np.isfinite(h1_ratios)) and all(r > 0 for r in h1_ratios)
    assert all(np.isfinite(hm1_ratios)) and all(r > 0 for r in hm1_ratios)


# serialization -----------------------------------------------------------------------------

@settings(max_examples=30)
@given(st.dictionaries(st.lists(st.integers(-4, 4).filter(bool), min_size=1, max_size=3,
                                unique=True).map(lambda xs: tuple((x,) for x in xs)),
                       st.floats(-10, 10).filter(bool), max_size=6))
def test_json_round_trip(data):
    f = CoefficientFunction(1, data)
    g = CoefficientFunction.from_json(f.to_json())
    assert g.data == f.data and g.flavor == f.flavor
    assert json.loads(f.to_json())["flavor"] == "punctured"


def test_punctured_rejects_origin():
    with pytest.raises(ValueError):
        CoefficientFunction(1, {((0,),): 1.0})
    assert canonical([(2,), (-1,)]) == ((-1,), (2,))


def test_operator_list_is_complete():
    assert set(OPERATORS) == {"Se", "St", "Ae0", "Ae+", "Ae-", "At0", "At+", "At-", "N"}
