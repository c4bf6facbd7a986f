import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psofl import pso
from psofl.harness import surrogate_fitness
from psofl.pso import (
    MAXIMIZE,
    MINIMIZE,
    ConfigurationError,
    FitnessEvaluationError,
    ModelConfig,
    ParticleState,
    PsoCoefficients,
    SearchBounds,
    VelocityBounds,
)

BOUNDS = SearchBounds()
VB = VelocityBounds.from_bounds(BOUNDS)


def particle(x, v, pbest=None, fit=0.0):
    x = np.asarray(x, float)
    return ParticleState(x, np.asarray(v, float), x.copy() if pbest is None else np.asarray(pbest, float), fit)


# --- bounds and coefficients -------------------------------------------------

def test_velocity_bounds_are_tenth_of_range():
    np.testing.assert_allclose(VB.max_v, [0.4, 19.9, 4.9])


@pytest.mark.parametrize("kwargs", [
    {"min_layers": 0},
    {"min_neurons": 10, "max_neurons": 5},
    {"max_epochs": 2.5},
])
def test_invalid_bounds(kwargs):
    with pytest.raises(ConfigurationError):
        SearchBounds(**kwargs)


@pytest.mark.parametrize("kwargs", [{"w": 0.0}, {"w": 1.2}, {"c1": -0.1}, {"c2": 4.5}])
def test_invalid_coefficients(kwargs):
    with pytest.raises(ConfigurationError):
        PsoCoefficients(**kwargs)


def test_sampled_coefficients_in_range():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c = PsoCoefficients.sample(rng)
        assert 0 <= c.c1 <= 4 and 0 <= c.c2 <= 4 and c.w == pso.DEFAULT_INERTIA


# --- init_swarm ---------------------------------------------------------------

def test_init_swarm_in_bounds():
    s = pso.init_swarm(BOUNDS, 5, seed=1)
    assert len(s.particles) == 5
    for p in s.particles:
        assert 1 <= p.position[0] <= 5
        assert np.all(p.position >= BOUNDS.lower) and np.all(p.position <= BOUNDS.upper)
        assert np.all(np.abs(p.velocity) <= VB.max_v)
        np.testing.assert_array_equal(p.pbest_position, p.position)


def test_init_swarm_deterministic():
    a = pso.init_swarm(BOUNDS, 5, seed=9, fitness_fn=surrogate_fitness)
    b = pso.init_swarm(BOUNDS, 5, seed=9, fitness_fn=surrogate_fitness)
    for p, q in zip(a.particles, b.particles):
        assert p.position.tobytes() == q.position.tobytes()
        assert p.velocity.tobytes() == q.velocity.tobytes()
    assert a.coefficients == b.coefficients


def test_init_single_particle_is_gbest():
    s = pso.init_swarm(BOUNDS, 1, seed=4, fitness_fn=surrogate_fitness)
    np.testing.assert_array_equal(s.gbest_position, s.particles[0].position)


def test_init_gbest_is_best_initial_particle():
    s = pso.init_swarm(BOUNDS, 8, seed=2, fitness_fn=surrogate_fitness)
    assert s.gbest_fitness == max(p.pbest_fitness for p in s.particles)
    s = pso.init_swarm(BOUNDS, 8, seed=2, fitness_fn=surrogate_fitness, direction=MINIMIZE)
    assert s.gbest_fitness == min(p.pbest_fitness for p in s.particles)


def test_init_rejects_empty_swarm():
    with pytest.raises(ConfigurationError):
        pso.init_swarm(BOUNDS, 0, seed=0)


# --- update_velocity / update_position ---------------------------------------

def test_velocity_zero_at_rest():
    p = particle([2, 50, 10], [0, 0, 0])
    v = pso.update_velocity(p, p.position.copy(), PsoCoefficients(), VB, np.random.default_rng(0))
    np.testing.assert_array_equal(v, 0.0)


def test_velocity_pure_inertia():
    p = particle([2, 50, 10], [0.2, 3.0, 1.0], pbest=[5, 200, 50])
    coef = PsoCoefficients(w=1.0, c1=0.0, c2=0.0)
    v = pso.update_velocity(p, np.array([1.0, 1.0, 1.0]), coef, VB, np.random.default_rng(0))
    np.testing.assert_array_equal(v, [0.2, 3.0, 1.0])


def test_velocity_clamped_to_layer_range():
    p = particle([2, 50, 10], [1.0, 0.0, 0.0])
    coef = PsoCoefficients(w=1.0, c1=0.0, c2=0.0)
    v = pso.update_velocity(p, p.position.copy(), coef, VB, np.random.default_rng(0))
    assert v[0] == pytest.approx(0.4)


def test_velocity_matches_hand_computation():
    p = particle([2.0, 40.0, 10.0], [0.1, -2.0, 0.5], pbest=[3.0, 60.0, 12.0])
    gbest = np.array([4.0, 80.0, 20.0])
    coef = PsoCoefficients(w=0.5, c1=1.5, c2=2.5)
    r = np.random.default_rng(11).random(6)
    r1, r2 = r[:3], r[3:]
    expected = []
    for d in range(3):
        raw = 0.5 * p.velocity[d] + 1.5 * r1[d] * (p.pbest_position[d] - p.position[d]) \
            + 2.5 * r2[d] * (gbest[d] - p.position[d])
        expected.append(min(max(raw, -VB.max_v[d]), VB.max_v[d]))
    v = pso.update_velocity(p, gbest, coef, VB, np.random.default_rng(11))
    np.testing.assert_allclose(v, expected, rtol=0, atol=1e-12)


def test_literal_velocity_form():
    p = particle([2.0, 40.0, 10.0], [0.1, -2.0, 0.5], pbest=[3.0, 60.0, 12.0])
    gbest = np.array([4.0, 80.0, 20.0])
    coef = PsoCoefficients(w=0.5, c1=1.0, c2=1.0)
    r = np.random.default_rng(5).random(6)
    raw = 0.5 * p.velocity + r[:3] * (p.pbest_position - p.velocity) + r[3:] * (gbest - p.velocity)
    v = pso.update_velocity(p, gbest, coef, VB, np.random.default_rng(5), literal=True)
    np.testing.assert_allclose(v, VB.clip(raw), atol=1e-12)


def test_position_direct_sum():
    x, v = pso.update_position(particle([2.0, 10.0, 5.0], [0.4, 19.9, 0.0]), BOUNDS)
    assert x[0] == pytest.approx(2.4)
    assert x[1] == pytest.approx(29.9)
    np.testing.assert_array_equal(v, [0.4, 19.9, 0.0])


def test_position_boundary_clamp_zeroes_velocity():
    x, v = pso.update_position(particle([4.9, 10.0, 5.0], [0.4, -1.0, 0.0]), BOUNDS)
    assert x[0] == 5.0 and v[0] == 0.0
    assert v[1] == -1.0


@pytest.mark.parametrize("pos,cfg", [
    ((2.4, 29.9, 12.2), (2, 30, 12)),
    ((1.0, 1.0, 1.0), (1, 1, 1)),
    ((5.0, 200.0, 50.0), (5, 200, 50)),
])
def test_round_to_config(pos, cfg):
    assert pso.round_to_config(pos, BOUNDS) == ModelConfig(*cfg)


# --- step ---------------------------------------------------------------------

def test_step_leaves_input_untouched():
    s = pso.init_swarm(BOUNDS, 5, seed=0, fitness_fn=surrogate_fitness)
    before = [p.position.copy() for p in s.particles]
    a = pso.step(s, surrogate_fitness)
    b = pso.step(s, surrogate_fitness)
    for p, x in zip(s.particles, before):
        np.testing.assert_array_equal(p.position, x)
    for p, q in zip(a.particles, b.particles):
        np.testing.assert_array_equal(p.position, q.position)


def test_step_constant_fitness_keeps_gbest():
    s = pso.init_swarm(BOUNDS, 5, seed=0, fitness_fn=lambda c: 1.0)
    t = pso.step(s, lambda c: 1.0)
    np.testing.assert_array_equal(t.gbest_position, s.gbest_position)
    for p, q in zip(s.particles, t.particles):
        np.testing.assert_array_equal(p.pbest_position, q.pbest_position)


def test_step_improvement_replaces_pbest_and_gbest():
    s = pso.init_swarm(BOUNDS, 3, seed=0, fitness_fn=lambda c: 0.0)
    t = pso.step(s, lambda c: float(c.layers + c.neurons + c.epochs))
    for p in t.particles:
        np.testing.assert_array_equal(p.pbest_position, p.position)
    assert t.gbest_fitness == max(p.pbest_fitness for p in t.particles) > 0


def test_step_fitness_error_names_particle():
    s = pso.init_swarm(BOUNDS, 4, seed=0, fitness_fn=surrogate_fitness)
    target = pso.round_to_config(pso.step(s, surrogate_fitness).particles[2].position, BOUNDS)

    def flaky(cfg):
        if cfg == target:
            raise RuntimeError("boom")
        return 0.0

    with pytest.raises(FitnessEvaluationError) as err:
        pso.step(s, flaky)
    assert err.value.config == target
    assert err.value.particle <= 2


# --- run ------------------------------------------------------------------------

def test_run_strictly_improving_uses_all_iterations():
    calls = []

    def improving(cfg):
        calls.append(cfg)
        return float(len(calls))

    r = pso.run(BOUNDS, None, 5, 10, improving, seed=0, memoize=False)
    assert r.iterations == 10
    assert len(r.evaluations) == 5 * 11


def test_run_constant_fitness_stops_after_two():
    r = pso.run(BOUNDS, None, 5, 10, lambda c: 1.0, seed=0)
    assert r.iterations == 2 and r.converged
    assert len(r.evaluations) == 15


def test_run_is_deterministic():
    a = pso.run(BOUNDS, None, 5, 10, surrogate_fitness, seed=42)
    b = pso.run(BOUNDS, None, 5, 10, surrogate_fitness, seed=42)
    assert a.evaluations == b.evaluations
    assert a.best_config == b.best_config and a.best_fitness == b.best_fitness


def test_run_threads_match_sequential():
    a = pso.run(BOUNDS, None, 5, 10, surrogate_fitness, seed=3)
    b = pso.run(BOUNDS, None, 5, 10, surrogate_fitness, seed=3, threads=4)
    assert a.evaluations == b.evaluations


def test_run_memoizes_repeats():
    calls = []

    def f(cfg):
        calls.append(cfg)
        return surrogate_fitness(cfg)

    r = pso.run(BOUNDS, None, 5, 10, f, seed=1)
    assert len(calls) == len(set(calls))
    assert len(calls) == sum(not e.cached for e in r.evaluations)


def test_run_error_carries_partial_trace():
    n = []

    def f(cfg):
        n.append(cfg)
        if len(n) > 7:
            raise ValueError("nope")
        return float(len(n))

    with pytest.raises(FitnessEvaluationError) as err:
        pso.run(BOUNDS, None, 5, 10, f, seed=0, memoize=False)
    assert len(err.value.trace) == 5


def test_run_minimize_direction():
    r = pso.run(BOUNDS, None, 5, 10, lambda c: -surrogate_fitness(c), seed=5, direction=MINIMIZE)
    assert r.best_fitness == min(e.fitness for e in r.evaluations)


def test_run_rejects_zero_iterations():
    with pytest.raises(ConfigurationError):
        pso.run(BOUNDS, None, 5, 0, surrogate_fitness, seed=0)


def _within_one_grid_unit(cfg):
    # nearest neighbours of (3, 100, 25) on the default grid: neurons 75/150, epochs step 5
    return abs(cfg.layers - 3) <= 1 and 75 <= cfg.neurons <= 150 and abs(cfg.epochs - 25) <= 5


@pytest.mark.xfail(strict=True, reason="93 of 100 seeds land near the optimum; see notes")
def test_run_finds_surrogate_optimum_neighbourhood():
    hits = sum(_within_one_grid_unit(pso.run(BOUNDS, None, 5, 10, surrogate_fitness, seed=s).best_config)
               for s in range(100))
    assert hits >= 95


# --- properties -------------------------------------------------------------------

bounds_st = st.builds(
    lambda l, n, e, dl, dn, de: SearchBounds(l, l + dl, n, n + dn, e, e + de),
    st.integers(1, 5), st.integers(1, 50), st.integers(1, 20),
    st.integers(0, 6), st.integers(0, 200), st.integers(0, 50),
)


@given(bounds=bounds_st, seed=st.integers(0, 2**32 - 1), pop=st.integers(1, 6), literal=st.booleans(),
       direction=st.sampled_from([MAXIMIZE, MINIMIZE]))
def test_swarm_stays_in_bounds_and_bests_are_monotone(bounds, seed, pop, literal, direction):
    vb = VelocityBounds.from_bounds(bounds)
    s = pso.init_swarm(bounds, pop, seed, surrogate_fitness, direction=direction, literal=literal)
    for _ in range(4):
        t = pso.step(s, surrogate_fitness)
        for p, q in zip(s.particles, t.particles):
            assert np.all(t.bounds.lower <= q.position) and np.all(q.position <= t.bounds.upper)
            assert np.all(np.abs(q.velocity) <= vb.max_v + 1e-12)
            assert not pso.is_better(p.pbest_fitness, q.pbest_fitness, direction)
        assert not pso.is_better(s.gbest_fitness, t.gbest_fitness, direction)
        best = max if direction == MAXIMIZE else min
        assert t.gbest_fitness == best(q.pbest_fitness for q in t.particles)
        s = t


@given(seed=st.integers(0, 2**32 - 1), pop=st.integers(1, 6), max_it=st.integers(1, 12))
def test_run_budget_and_determinism(seed, pop, max_it):
    a = pso.run(BOUNDS, None, pop, max_it, surrogate_fitness, seed)
    b = pso.run(BOUNDS, None, pop, max_it, surrogate_fitness, seed)
    assert a.iterations <= max_it
    assert len(a.evaluations) <= pop * (max_it + 1)
    assert a.evaluations == b.evaluations and a.best_fitness == b.best_fitness


@given(seed=st.integers(0, 2**32 - 1), w=st.floats(0.1, 0.99))
def test_velocity_decays_geometrically_without_attraction(seed, w):
    s = pso.init_swarm(BOUNDS, 3, seed, lambda c: 0.0, coef=PsoCoefficients(w=w, c1=0.0, c2=0.0))
    for _ in range(3):
        t = pso.step(s, lambda c: 0.0)
        for p, q in zip(s.particles, t.particles):
            moved = p.position + w * p.velocity
            inside = (moved >= BOUNDS.lower) & (moved <= BOUNDS.upper)
            np.testing.assert_allclose(q.velocity[inside], w * p.velocity[inside], rtol=1e-12, atol=1e-15)
        s = t
