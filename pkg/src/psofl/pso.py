"""Particle swarm search over the (layers, neurons, epochs) box.

Positions are continuous; a particle is scored at its nearest-integer
configuration. The loop follows the usual PSO recipe: initialise, then
alternate velocity/position updates with personal/global best bookkeeping
until the global best stops moving or the iteration budget is spent.
"""

from __future__ import annotations

import copy
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"
DEFAULT_INERTIA = 0.729
DEFAULT_TOLERANCE = 1e-6


class ConfigurationError(ValueError):
    """Raised for invalid search bounds, coefficients or run parameters."""


class FitnessEvaluationError(RuntimeError):
    """Wraps a failure raised by the fitness function for one particle."""

    def __init__(self, particle, config, cause, trace=None):
        super().__init__(f"fitness evaluation failed for particle {particle} at {config}: {cause!r}")
        self.particle = particle
        self.config = config
        self.cause = cause
        self.trace = trace if trace is not None else []


class ModelConfig(NamedTuple):
    layers: int
    neurons: int
    epochs: int

    def __str__(self):
        return f"(L={self.layers}, N={self.neurons}, E={self.epochs})"


@dataclass(frozen=True)
class SearchBounds:
    min_layers: int = 1
    max_layers: int = 5
    min_neurons: int = 1
    max_neurons: int = 200
    min_epochs: int = 1
    max_epochs: int = 50

    def __post_init__(self):
        for name, lo, hi in self._triples():
            if int(lo) != lo or int(hi) != hi:
                raise ConfigurationError(f"{name} bounds must be integers, got [{lo}, {hi}]")
            if lo < 1:
                raise ConfigurationError(f"min_{name} must be >= 1, got {lo}")
            if lo > hi:
                raise ConfigurationError(f"min_{name} ({lo}) exceeds max_{name} ({hi})")

    def _triples(self):
        return (
            ("layers", self.min_layers, self.max_layers),
            ("neurons", self.min_neurons, self.max_neurons),
            ("epochs", self.min_epochs, self.max_epochs),
        )

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.min_layers, self.min_neurons, self.min_epochs], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.max_layers, self.max_neurons, self.max_epochs], dtype=float)

    def contains(self, config: ModelConfig) -> bool:
        return bool(np.all(self.lower <= config) and np.all(np.asarray(config) <= self.upper))


@dataclass(frozen=True)
class VelocityBounds:
    """Symmetric per-dimension velocity caps, 10% of each dimension's range."""

    max_v: np.ndarray

    @classmethod
    def from_bounds(cls, bounds: SearchBounds, fraction: float = 0.1) -> "VelocityBounds":
        return cls(max_v=fraction * (bounds.upper - bounds.lower))

    @property
    def min_v(self) -> np.ndarray:
        return -self.max_v

    def clip(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.min_v, self.max_v)


@dataclass(frozen=True)
class PsoCoefficients:
    w: float = DEFAULT_INERTIA
    c1: float = 2.0
    c2: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.w <= 1.0:
            raise ConfigurationError(f"w must lie in (0, 1], got {self.w}")
        for name in ("c1", "c2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 4.0:
                raise ConfigurationError(f"{name} must lie in [0, 4], got {value}")

    @classmethod
    def sample(cls, rng: np.random.Generator, w: float = DEFAULT_INERTIA) -> "PsoCoefficients":
        """Draw c1 and c2 uniformly from [0, 4]; used once per run."""
        c1, c2 = rng.uniform(0.0, 4.0, size=2)
        return cls(w=w, c1=float(c1), c2=float(c2))


def is_better(candidate: float, incumbent: float, direction: str) -> bool:
    """Strict improvement test; ties keep the incumbent."""
    if direction == MAXIMIZE:
        return candidate > incumbent
    if direction == MINIMIZE:
        return candidate < incumbent
    raise ConfigurationError(f"unknown direction {direction!r}")


def worst_value(direction: str) -> float:
    return -np.inf if direction == MAXIMIZE else np.inf


@dataclass
class ParticleState:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float


@dataclass
class SwarmState:
    particles: list[ParticleState]
    gbest_position: np.ndarray
    gbest_fitness: float
    bounds: SearchBounds
    coefficients: PsoCoefficients
    direction: str = MAXIMIZE
    iteration: int = 0
    rng_seed: int = 0
    literal: bool = False
    rng: np.random.Generator = field(default=None, repr=False)

    @property
    def velocity_bounds(self) -> VelocityBounds:
        return VelocityBounds.from_bounds(self.bounds)


class Evaluation(NamedTuple):
    iteration: int
    particle: int
    config: ModelConfig
    fitness: float
    cached: bool


@dataclass
class PsoResult:
    best_config: ModelConfig
    best_fitness: float
    iterations: int
    evaluations: list[Evaluation]
    gbest_history: list[float]
    coefficients: PsoCoefficients
    converged: bool

    @property
    def n_evaluations(self) -> int:
        return len(self.evaluations)


def round_to_config(position, bounds: SearchBounds | None = None) -> ModelConfig:
    # np.rint rounds half to even; positions are clipped to the box before this
    values = np.rint(np.asarray(position, dtype=float))
    if bounds is not None:
        values = np.clip(values, bounds.lower, bounds.upper)
    layers, neurons, epochs = (int(v) for v in values)
    return ModelConfig(layers, neurons, epochs)


def update_velocity(
    particle: ParticleState,
    gbest: np.ndarray,
    coef: PsoCoefficients,
    vbounds: VelocityBounds,
    rng: np.random.Generator,
    literal: bool = False,
) -> np.ndarray:
    """Return the particle's next velocity, clamped to ``vbounds``.

    The canonical form pulls toward ``pbest - x`` and ``gbest - x``.
    With ``literal=True`` the attraction terms subtract the current velocity
    instead of the position (``pbest - v`` and ``gbest - v``).
    """
    r1 = rng.random(3)
    r2 = rng.random(3)
    anchor = particle.velocity if literal else particle.position
    v = (
        coef.w * particle.velocity
        + coef.c1 * r1 * (particle.pbest_position - anchor)
        + coef.c2 * r2 * (gbest - anchor)
    )
    return vbounds.clip(v)


def update_position(particle: ParticleState, bounds: SearchBounds) -> tuple[np.ndarray, np.ndarray]:
    """Move by the current velocity; coordinates leaving the box are pinned
    to the wall and their velocity component zeroed.

    Returns ``(position, velocity)``.
    """
    x = particle.position + particle.velocity
    v = particle.velocity.copy()
    outside = (x < bounds.lower) | (x > bounds.upper)
    x = np.clip(x, bounds.lower, bounds.upper)
    v[outside] = 0.0
    return x, v


FitnessFn = Callable[[ModelConfig], float]


def _fitness_value(result) -> float:
    # fitness functions may return a bare number or anything with a `.value`
    value = getattr(result, "value", result)
    return float(value)


def _evaluate_all(configs, fitness_fn, threads, trace):
    """Score configs (given in particle order) and return values in that order.

    Identical configs within one batch are scored once. Evaluation may run
    concurrently; results are always consumed in index order.
    """
    unique = list(dict.fromkeys(configs))

    def one(config):
        try:
            return _fitness_value(fitness_fn(config))
        except FitnessEvaluationError:
            raise
        except Exception as exc:
            raise FitnessEvaluationError(configs.index(config), config, exc) from exc

    try:
        if threads > 1 and len(unique) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                scores = list(pool.map(one, unique))
        else:
            scores = [one(c) for c in unique]
    except FitnessEvaluationError as err:
        err.trace = list(trace)
        raise
    lookup = dict(zip(unique, scores))
    return [lookup[c] for c in configs]


def init_swarm(
    bounds: SearchBounds,
    pop_size: int,
    seed: int,
    fitness_fn: FitnessFn | None = None,
    coef: PsoCoefficients | None = None,
    direction: str = MAXIMIZE,
    literal: bool = False,
    threads: int = 1,
    trace: list[Evaluation] | None = None,
    w: float = DEFAULT_INERTIA,
) -> SwarmState:
    """Build a seeded swarm and score the initial positions.

    Draw order from the seed: c1/c2 (only when ``coef`` is None), then all
    positions, then all velocities. Without a fitness function every
    particle starts at the worst possible fitness and gbest is particle 0.
    """
    if pop_size < 1:
        raise ConfigurationError(f"pop_size must be >= 1, got {pop_size}")
    if direction not in (MAXIMIZE, MINIMIZE):
        raise ConfigurationError(f"unknown direction {direction!r}")
    rng = np.random.default_rng(seed)
    if coef is None:
        coef = PsoCoefficients.sample(rng, w=w)
    vb = VelocityBounds.from_bounds(bounds)
    positions = rng.uniform(bounds.lower, bounds.upper, size=(pop_size, 3))
    velocities = rng.uniform(vb.min_v, vb.max_v, size=(pop_size, 3))

    if fitness_fn is None:
        values = [worst_value(direction)] * pop_size
    else:
        configs = [round_to_config(p, bounds) for p in positions]
        values = _evaluate_all(configs, fitness_fn, threads, trace or [])
        if trace is not None:
            trace.extend(Evaluation(0, i, c, f, False) for i, (c, f) in enumerate(zip(configs, values)))

    particles = [
        ParticleState(positions[i].copy(), velocities[i].copy(), positions[i].copy(), values[i])
        for i in range(pop_size)
    ]
    best = 0
    for i in range(1, pop_size):
        if is_better(values[i], values[best], direction):
            best = i
    return SwarmState(
        particles=particles,
        gbest_position=particles[best].pbest_position.copy(),
        gbest_fitness=values[best],
        bounds=bounds,
        coefficients=coef,
        direction=direction,
        iteration=0,
        rng_seed=seed,
        literal=literal,
        rng=rng,
    )


def step(
    state: SwarmState,
    fitness_fn: FitnessFn,
    threads: int = 1,
    trace: list[Evaluation] | None = None,
) -> SwarmState:
    """Advance the swarm by one iteration and return the new state.

    The input state is left untouched (its generator is copied), so
    ``step(s, f)`` can be replayed.
    """
    new = copy.deepcopy(state)
    vb = new.velocity_bounds
    for p in new.particles:
        p.velocity = update_velocity(p, new.gbest_position, new.coefficients, vb, new.rng, new.literal)
    for p in new.particles:
        p.position, p.velocity = update_position(p, new.bounds)
    new.iteration += 1

    configs = [round_to_config(p.position, new.bounds) for p in new.particles]
    values = _evaluate_all(configs, fitness_fn, threads, trace or [])
    if trace is not None:
        trace.extend(
            Evaluation(new.iteration, i, c, f, False) for i, (c, f) in enumerate(zip(configs, values))
        )

    for p, value in zip(new.particles, values):
        if is_better(value, p.pbest_fitness, new.direction):
            p.pbest_fitness = value
            p.pbest_position = p.position.copy()

    best = 0
    for i in range(1, len(values)):
        if is_better(values[i], values[best], new.direction):
            best = i
    if is_better(values[best], new.gbest_fitness, new.direction):
        new.gbest_fitness = values[best]
        new.gbest_position = new.particles[best].position.copy()
    return new


class _Memo:
    """Fitness cache keyed on the rounded configuration."""

    def __init__(self, fitness_fn):
        self.fitness_fn = fitness_fn
        self.values: dict[ModelConfig, float] = {}
        self._lock = threading.Lock()

    def __call__(self, config):
        with self._lock:
            if config in self.values:
                return self.values[config]
        value = _fitness_value(self.fitness_fn(config))
        with self._lock:
            self.values[config] = value
        return value


def run(
    bounds: SearchBounds,
    coef: PsoCoefficients | None,
    pop_size: int,
    max_it: int,
    fitness_fn: FitnessFn,
    seed: int,
    direction: str = MAXIMIZE,
    tol: float = DEFAULT_TOLERANCE,
    literal: bool = False,
    memoize: bool = True,
    threads: int = 1,
    w: float = DEFAULT_INERTIA,
) -> PsoResult:
    """Run the swarm to termination.

    Iteration 0 is the initial scoring. Steps 1..max_it follow; after step
    t >= 2 the run stops once ``|gbest_t - gbest_{t-1}| < tol``. When
    ``coef`` is None, c1 and c2 are drawn once from the run seed and
    paired with inertia ``w``.

    With ``memoize`` (the default) a configuration is scored at most once
    per run; repeats reuse the cached value and appear in the evaluation
    log with ``cached=True``.
    """
    if max_it < 1:
        raise ConfigurationError(f"max_it must be >= 1, got {max_it}")
    scorer = _Memo(fitness_fn) if memoize else fitness_fn
    trace: list[Evaluation] = []
    seen: set[ModelConfig] = set()

    def mark_cached(start):
        for k in range(start, len(trace)):
            ev = trace[k]
            if memoize and ev.config in seen:
                trace[k] = ev._replace(cached=True)
            seen.add(ev.config)

    state = init_swarm(bounds, pop_size, seed, scorer, coef, direction, literal, threads, trace, w)
    mark_cached(0)
    history = [state.gbest_fitness]
    converged = False
    while state.iteration < max_it:
        start = len(trace)
        state = step(state, scorer, threads, trace)
        mark_cached(start)
        history.append(state.gbest_fitness)
        if state.iteration >= 2 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break
    return PsoResult(
        best_config=round_to_config(state.gbest_position, bounds),
        best_fitness=state.gbest_fitness,
        iterations=state.iteration,
        evaluations=trace,
        gbest_history=history,
        coefficients=state.coefficients,
        converged=converged,
    )
