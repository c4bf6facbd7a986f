import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from psofl import lstm
from psofl.data import gen_traffic
from psofl.federated import (
    ClientFailure,
    FlConfig,
    centralized_fit,
    centralized_train,
    config_seed,
    run_fl,
    run_round,
    weighted_average,
)
from psofl.lstm import TrainSpec
from psofl.pso import ConfigurationError, ModelConfig

CFG = ModelConfig(1, 4, 2)


def test_weighted_average_arithmetic():
    assert weighted_average([np.array([0.0]), np.array([4.0])], [1, 3])[0] == pytest.approx(3.0)


def test_weighted_average_of_equals():
    v = np.array([0.3, -1.7, 2.25])
    np.testing.assert_array_equal(weighted_average([v, v, v], [5, 1, 9]), v)


def test_weighted_average_single():
    v = np.array([0.1, 0.2])
    np.testing.assert_array_equal(weighted_average([v], [17]), v)


@given(
    vecs=st.integers(1, 6).flatmap(lambda k: st.tuples(
        hnp.arrays(np.float64, (k, 5), elements=st.floats(-1e6, 1e6)),
        st.lists(st.integers(1, 1000), min_size=k, max_size=k),
    ))
)
def test_weighted_average_convex_bound(vecs):
    stack, weights = vecs
    avg = weighted_average(list(stack), weights)
    span = np.abs(stack).max(axis=0)
    tol = 1e-12 * np.maximum(span, 1.0)
    assert np.all(avg >= stack.min(axis=0) - tol)
    assert np.all(avg <= stack.max(axis=0) + tol)


def test_fl_config_validation():
    for kwargs in ({"num_clients": 0}, {"comm_rounds": 0}, {"client_fraction": 0.5}):
        with pytest.raises(ConfigurationError):
            FlConfig(**kwargs)


def test_config_seed_depends_on_config():
    a = np.random.default_rng(config_seed(0, CFG)).random()
    assert a == np.random.default_rng(config_seed(0, CFG)).random()
    assert a != np.random.default_rng(config_seed(0, ModelConfig(1, 4, 3))).random()


def test_run_fl_consumes_comm_rounds(tiny_traffic):
    out = run_fl(CFG, FlConfig(num_clients=3, comm_rounds=15), tiny_traffic, TrainSpec(epochs=1))
    assert out.rounds_consumed == 15
    assert out.fitness.metric >= 0 and out.fitness.n_samples == len(tiny_traffic.test)


def test_run_fl_is_deterministic(tiny_traffic):
    fl = FlConfig(num_clients=3, comm_rounds=2, model_seed=4)
    a = run_fl(CFG, fl, tiny_traffic)
    b = run_fl(CFG, fl, tiny_traffic)
    assert a.model.params.tobytes() == b.model.params.tobytes()
    assert a.fitness == b.fitness


def test_run_fl_zero_epochs_keeps_initial_model(tiny_traffic):
    cfg = ModelConfig(1, 4, 0)
    out = run_fl(cfg, FlConfig(num_clients=3, comm_rounds=1), tiny_traffic)
    init = lstm.init_model(cfg, tiny_traffic.input_width, 1, config_seed(0, cfg))
    np.testing.assert_array_equal(out.model.params, init.params)


def test_run_fl_shard_count_must_match(tiny_traffic):
    with pytest.raises(ConfigurationError):
        run_fl(CFG, FlConfig(num_clients=4, comm_rounds=1), tiny_traffic)


def test_single_client_matches_centralized():
    data = gen_traffic(seed=2, n_clients=1, rows_per_client=120, lookback=6)
    spec = TrainSpec(epochs=1, shuffle_seed_base=5)
    fl = run_fl(CFG, FlConfig(num_clients=1, comm_rounds=3, model_seed=11), data, spec)
    central = centralized_fit(CFG, data, 3 * CFG.epochs, seed=11, spec=spec)
    np.testing.assert_allclose(fl.model.params, central.params, rtol=0, atol=1e-6)


def test_round_is_thread_and_order_invariant(tiny_traffic):
    model = lstm.init_model(CFG, tiny_traffic.input_width, 1, seed=0)
    spec = TrainSpec(epochs=1)
    a = run_round(model, tiny_traffic.shards, spec, round_index=2)
    b = run_round(model, tiny_traffic.shards, spec, round_index=2, threads=3)
    assert a.params.tobytes() == b.params.tobytes()


def test_clients_only_read_their_own_shard():
    data = gen_traffic(seed=3, n_clients=3, rows_per_client=80, lookback=6)
    run_fl(CFG, FlConfig(num_clients=3, comm_rounds=2), data, threads=2)
    for shard in data.shards:
        assert shard.read_log == [shard.client_id] * 2


def test_client_failure_names_client(tiny_traffic):
    model = lstm.init_model(CFG, tiny_traffic.input_width, 1, seed=0)
    model.params[:] = np.nan
    with pytest.raises(ClientFailure) as err:
        run_round(model, tiny_traffic.shards, TrainSpec(epochs=1))
    assert err.value.client_id == 0


def test_centralized_zero_epochs_is_untrained(tiny_traffic):
    untrained = lstm.init_model(CFG, tiny_traffic.input_width, 1, config_seed(1, CFG))
    expected = lstm.evaluate(untrained, tiny_traffic.test, tiny_traffic.target_scale)
    assert centralized_train(CFG, tiny_traffic, 0, seed=1) == expected


def test_centralized_deterministic(tiny_traffic):
    assert centralized_train(CFG, tiny_traffic, 2, seed=3) == centralized_train(CFG, tiny_traffic, 2, seed=3)


def test_centralized_beats_untrained_on_traffic():
    data = gen_traffic(seed=0, n_clients=5, rows_per_client=500)
    cfg = ModelConfig(1, 8, 1)
    untrained = centralized_train(cfg, data, 0, seed=0)
    trained = centralized_train(cfg, data, 5, seed=0)
    assert trained.metric <= untrained.metric
