import numpy as np
import pytest

from tagged_exclusion.lattice import JumpRates, ReferenceConfig
from tagged_exclusion.simulator import (InitialMeasure, estimate_variance, evolve,
                                        martingale_diagnostics, sample_initial,
                                        simulate_batch)


def test_sample_initial_density():
    occ = [sample_initial(InitialMeasure.stationary(0.3), 40, 1, seed=5, trial=k).n
           for k in range(200)]
    assert abs((np.mean(occ) - 1) / 39 - 0.3) < 0.02
    cfg = sample_initial(InitialMeasure.canonical(7), 10, 2, seed=1)
    assert cfg.n == 7 and cfg[(0, 0)] == 1
    tilt = sample_initial(InitialMeasure.tilted(0.0, (-1,)), 8, 1, seed=3)
    assert tilt.occupied() == [(-1,), (0,)]


def test_measure_validation():
    with pytest.raises(ValueError):
        InitialMeasure.tilted(0.5, (0,))
    with pytest.raises(ValueError):
        InitialMeasure.stationary(-0.1)


def test_lone_particle_moves_freely():
    rates = JumpRates(1, {(1,): 1.0})
    cfg = ReferenceConfig.from_sites(16, 1, [])
    tr = evolve(cfg, rates, 50.0, seed=2)
    # no environment: every event is a tagged shift, and the frame stays empty
    assert all(e.kind == "shift" for e in tr.events)
    assert tr.x[-1, 0] == len(tr.events) == tr.counts[-1, 0]
    assert tr.final.n == 1


def test_blocked_particle_never_moves():
    rates = JumpRates(1, {(1,): 1.0})
    occ = np.ones(8, dtype=np.uint8)
    tr = evolve(ReferenceConfig(occ), rates, 10.0, seed=0)
    assert tr.events == () and tr.x[-1, 0] == 0


def test_event_log_replays_to_final_state(asym_d1):
    from tagged_exclusion.lattice import exchange, tagged_shift
    cfg = sample_initial(InitialMeasure.stationary(0.5), 12, 1, seed=9)
    tr = evolve(cfg, asym_d1, 5.0, seed=4)
    state = cfg
    for e in tr.events:
        state = tagged_shift(state, e.source) if e.kind == "shift" else exchange(
            state, e.source, e.target)
    assert state == tr.final


def test_batch_is_reproducible(asym_d1):
    a = simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [1.0, 2.0], 50, seed=8)
    b = simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [1.0, 2.0], 50, seed=8)
    c = simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [1.0, 2.0], 50, seed=9)
    assert np.array_equal(a.x, b.x) and not np.array_equal(a.x, c.x)
    # trials do not depend on how the batch is split
    tail = simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [1.0, 2.0], 10, seed=8,
                          first_trial=40)
    assert np.array_equal(a.x[40:], tail.x)


def test_bad_time_grid(asym_d1):
    with pytest.raises(ValueError):
        simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [2.0, 1.0], 5, seed=0)


def test_martingale_second_moment(asym_d1):
    batch = simulate_batch(InitialMeasure.stationary(0.5), asym_d1, [4.0], 3000, seed=21)
    rows = martingale_diagnostics(batch)
    assert all(abs(r.z) < 4 for r in rows), [(r.quantity, r.z) for r in rows]


def test_variance_table_csv(asym_d1):
    table = estimate_variance(InitialMeasure.stationary(0.5), asym_d1, [1.0, 2.0], 20, seed=1)
    lines = table.to_csv().splitlines()
    assert lines[0] == "t,estimate,stderr,trials,L,seed"
    assert len(lines) == 3 and lines[1].startswith("1,")
