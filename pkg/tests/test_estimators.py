import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from speclab.errors import DegeneracyError, IllConditionedError, RankDeficiencyError, SizeError
from speclab.estimators import (
    EstimatorConfig,
    _step,
    esprit,
    esprit_refine,
    mle_refine,
    objective,
    weights_least_squares,
)
from speclab.measure import (
    MeasurementSet,
    NoiseModel,
    SpikeMeasure,
    apply_noise,
    circular_distance,
    random_measure,
    sample_noiseless,
)
from speclab.perturbation import build_design, solve_first_order


def assert_recovers(truth, est, tol):
    order = np.argsort(truth.locations)
    assert est.r == truth.r
    # both are sorted; pair by nearest when wrap-around reorders
    for x, w in zip(truth.locations[order], truth.weights[order]):
        k = np.argmin(circular_distance(est.locations, x))
        assert circular_distance(est.locations[k], x) <= tol
        assert abs(est.weights[k] - w) <= tol * abs(w)


def test_esprit_single_spike():
    truth = SpikeMeasure([1.0], [2.0], 1.0)
    est = esprit(sample_noiseless(truth, 8), 1)
    assert_recovers(truth, est, 1e-10)


def test_esprit_two_spikes():
    truth = SpikeMeasure([1.0, 2.0], [1.0, 0.5], 0.5)
    est = esprit(sample_noiseless(truth, 16), 2)
    assert_recovers(truth, est, 1e-9)


def test_esprit_zero_data():
    with pytest.raises(RankDeficiencyError):
        esprit(MeasurementSet(6, np.zeros(13)), 1)


def test_esprit_size_error():
    g = sample_noiseless(random_measure(3, 0.3, seed=0), 3)
    with pytest.raises(SizeError):
        esprit(g, 4)
    esprit(g, 3)


def test_esprit_exact_gap_check():
    g = sample_noiseless(random_measure(3, 0.5, seed=0), 20)
    with pytest.raises(RankDeficiencyError):
        esprit(g, 2, exact_gap_ratio=1e-6)
    esprit(g, 3, exact_gap_ratio=1e-6)


def test_esprit_complex_weights():
    truth = SpikeMeasure([0.3, 2.9, 5.0], [1.0 + 1.0j, -0.5j, 0.8], 0.5)
    assert_recovers(truth, esprit(sample_noiseless(truth, 24), 3), 1e-9)


def test_esprit_matrix_free_path():
    truth = random_measure(4, 0.1, seed=9)
    est = esprit(sample_noiseless(truth, 1000), 4)
    assert_recovers(truth, est, 1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3.0, 3.0))
def test_esprit_shift_equivariance(seed, delta):
    truth = random_measure(3, 0.4, seed=seed)
    n = 24
    g = sample_noiseless(truth, n)
    shifted = MeasurementSet(n, g.samples * np.exp(1j * g.freqs * delta))
    x0 = esprit(g, 3).locations
    x1 = esprit(shifted, 3).locations
    for x in x0:
        assert np.min(circular_distance(x1, x + delta)) <= 1e-8


# ---------------------------------------------------------------------------
# weights


def test_weights_exact():
    truth = random_measure(4, 0.2, seed=3)
    g = sample_noiseless(truth, 20)
    np.testing.assert_allclose(weights_least_squares(g, truth.locations), truth.weights, rtol=1e-10)


def test_weights_zero_data():
    w = weights_least_squares(MeasurementSet(5, np.zeros(11)), [0.1, 2.0])
    assert np.all(w == 0)


def test_weights_match_dense_oracle():
    truth = random_measure(4, 0.2, seed=3)
    n = 50
    g = apply_noise(sample_noiseless(truth, n), NoiseModel(0.5, 0.25, 8), 0)
    x = truth.locations + 1e-3
    j = np.arange(-n, n + 1)
    V = np.cos(np.outer(j, x)) + 1j * np.sin(np.outer(j, x))
    ref = scipy.linalg.lstsq(V, g.samples, lapack_driver="gelsy")[0]
    w = weights_least_squares(g, x)
    assert np.linalg.norm(w - ref) <= 1e-9 * np.linalg.norm(ref)


def test_weights_ill_conditioned():
    g = sample_noiseless(random_measure(2, 0.5, seed=0), 4)
    with pytest.raises(IllConditionedError):
        weights_least_squares(g, [1.0, 1.0 + 1e-9])


# ---------------------------------------------------------------------------
# refinement


def test_refine_from_truth_noiseless():
    truth = random_measure(4, 0.2, seed=2)
    g = sample_noiseless(truth, 32)
    d = build_design(truth, 32)
    first = solve_first_order(d, g.samples - sample_noiseless(truth, 32).samples, real_locations=True)
    assert np.linalg.norm(np.concatenate([first.a, first.b])) <= 1e-10
    res = mle_refine(g, truth, EstimatorConfig(rank=4))
    assert res.converged
    np.testing.assert_allclose(res.measure.locations, truth.locations, atol=1e-12)
    np.testing.assert_allclose(res.measure.weights, truth.weights, rtol=1e-12)


def test_refine_quadratic_step():
    truth = random_measure(4, 0.3, seed=5)
    n = 32
    g = sample_noiseless(truth, n)
    start = SpikeMeasure(truth.locations + 1e-4, truth.weights, truth.min_gap * 0.5)
    res = mle_refine(g, start, EstimatorConfig(rank=4, max_iters=1))
    before = np.max(circular_distance(start.locations, truth.locations))
    after = np.max(circular_distance(res.measure.locations, truth.locations))
    assert after * 100 <= before


def test_refine_improves_on_esprit():
    truth = random_measure(4, 0.1, seed=17)
    g = apply_noise(sample_noiseless(truth, 256), NoiseModel(0.1, 0.0, 4), 0)
    init = esprit(g, 4)
    res = mle_refine(g, init, EstimatorConfig(rank=4))
    assert res.objective <= objective(g, init)
    assert res.initial_objective == objective(g, init)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.0, 0.25, 0.75]), st.sampled_from([16, 40, 100]))
def test_refine_objective_monotone(seed, p, n):
    truth = random_measure(3, 0.2, seed=seed)
    g = apply_noise(sample_noiseless(truth, n), NoiseModel(0.2, p, seed), 0)
    res = mle_refine(g, esprit(g, 3), EstimatorConfig(rank=3))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)
    assert res.objective == h[-1]


def test_refine_zero_iterations():
    truth = random_measure(2, 0.5, seed=1)
    g = apply_noise(sample_noiseless(truth, 20), NoiseModel(0.1, 0.0, 1), 0)
    init = esprit(g, 2)
    res = mle_refine(g, init, EstimatorConfig(rank=2, max_iters=0))
    assert res.measure == init and not res.converged and res.iterations == 0


def test_refine_rank_mismatch():
    truth = random_measure(2, 0.5, seed=1)
    with pytest.raises(ValueError):
        mle_refine(sample_noiseless(truth, 8), truth, EstimatorConfig(rank=3))


def test_step_collision():
    m = SpikeMeasure([1.0, 1.1], [1.0, 1.0], 0.05)
    with pytest.raises(DegeneracyError):
        _step(m, np.array([0.05, -0.05]), np.zeros(2), 1.0)


def test_esprit_refine_heteroscedastic_large_n():
    # |j|^p noise degrades the full-window subspace; refinement recovers the rate
    truth = random_measure(4, 0.1, seed=3)
    n = 1024
    g = apply_noise(sample_noiseless(truth, n), NoiseModel(0.1, 0.75, 11), 0)
    res = esprit_refine(g, EstimatorConfig(rank=4))
    assert res.objective <= res.initial_objective

    def loc_err(m):
        return np.max([np.min(circular_distance(m.locations, x)) for x in truth.locations])

    assert loc_err(res.measure) < 0.3 / n
    assert 3 * loc_err(res.measure) < loc_err(esprit(g, 4))


def test_esprit_refine_without_warm_start():
    truth = random_measure(3, 0.3, seed=3)
    g = apply_noise(sample_noiseless(truth, 64), NoiseModel(0.05, 0.0, 1), 0)
    res = esprit_refine(g, EstimatorConfig(rank=3, warm_start_window=None))
    assert res.objective <= objective(g, esprit(g, 3))


def test_estimator_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(rank=0)
    with pytest.raises(ValueError):
        EstimatorConfig(rank=1, max_iters=-1)
    with pytest.raises(ValueError):
        EstimatorConfig(rank=1, step_tol=0.0)
    with pytest.raises(ValueError):
        EstimatorConfig(rank=1, window_growth=1.0)
