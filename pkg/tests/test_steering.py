import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zslens.data import standardize_signatures
from zslens.model import compatibility, predict_batch, weighted_compatibility
from zslens.steering import (
    GUIDANCE_FLOOR,
    RetrainJob,
    SteeringState,
    adjust_weight,
    diagnose,
    replay,
    retrain,
)


def test_initial_state():
    state = SteeringState.initial(4)
    assert state.weights.tolist() == [1.0, 1.0, 1.0, 1.0]
    assert state.revision == 0
    assert state.history == ()
    assert state.below_guidance() == []


def test_adjust_decrement():
    state = adjust_weight(SteeringState.initial(3), 1, -0.1)
    assert state.weights[1] == pytest.approx(0.9)
    assert state.weights[0] == 1.0
    assert state.revision == 1
    assert len(state.history) == 1
    attr, old, new, stamp = state.history[0]
    assert (attr, old) == (1, 1.0) and new == pytest.approx(0.9)
    assert stamp > 0


def test_adjust_clamps_both_ends():
    low = SteeringState(np.array([0.05, 1.0]), 5, ())
    clamped = adjust_weight(low, 0, -0.1)
    assert clamped.weights[0] == 0.0
    high = adjust_weight(SteeringState.initial(2), 1, 0.7)
    assert high.weights[1] == 1.0


def test_adjust_zero_delta_still_bumps_revision():
    state = adjust_weight(SteeringState.initial(2), 0, 0.0)
    assert state.weights.tolist() == [1.0, 1.0]
    assert state.revision == 1
    assert len(state.history) == 1


def test_adjust_rejects_bad_inputs():
    state = SteeringState.initial(2)
    with pytest.raises(IndexError):
        adjust_weight(state, 2, -0.1)
    with pytest.raises(IndexError):
        adjust_weight(state, -1, -0.1)
    with pytest.raises(ValueError):
        adjust_weight(state, 0, float("nan"))


def test_below_guidance_listing():
    state = SteeringState(np.array([0.4, 0.5, 1.0]), 0, ())
    assert state.below_guidance() == [0]
    assert GUIDANCE_FLOOR == 0.5


def test_state_validation():
    with pytest.raises(ValueError):
        SteeringState(np.array([1.2]), 0, ())
    with pytest.raises(ValueError):
        SteeringState(np.array([-0.1]), 0, ())
    with pytest.raises(ValueError):
        SteeringState(np.array([0.5]), -1, ())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(-2, 2)), max_size=25))
def test_clamp_law_and_replay(moves):
    state = SteeringState.initial(4)
    for attr, delta in moves:
        state = adjust_weight(state, attr, delta, timestamp=0.0)
    assert np.all(state.weights >= 0.0) and np.all(state.weights <= 1.0)
    assert state.revision == len(moves)
    assert np.array_equal(replay(4, state.history), state.weights)


def test_replay_rejects_out_of_range_history():
    with pytest.raises(IndexError):
        replay(2, [(5, 1.0, 0.9, 0.0)])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_weighted_compatibility_equals_prescaled(seed, a):
    rng = np.random.default_rng(seed)
    z1, z2 = rng.normal(size=a), rng.normal(size=a)
    w = rng.uniform(0, 1, size=a)
    assert abs(weighted_compatibility(z1, z2, w) - compatibility(z1, w * z2)) <= 1e-12


# -- RetrainJob -----------------------------------------------------------------


def test_job_lifecycle():
    job = RetrainJob(id=1, base_revision=0)
    assert job.status == "pending"
    job.advance("running")
    job.advance("done")
    assert job.status == "done"


def test_job_illegal_transitions():
    job = RetrainJob(id=1, base_revision=0)
    with pytest.raises(ValueError):
        job.advance("done")
    job.advance("running")
    with pytest.raises(ValueError):
        job.advance("pending")
    job.advance("failed")
    with pytest.raises(ValueError):
        job.advance("running")


def test_job_to_dict():
    job = RetrainJob(id=3, base_revision=2)
    out = job.to_dict()
    assert out == {
        "id": 3, "status": "pending", "base_revision": 2,
        "error": None, "metrics_before": None, "metrics_after": None,
    }


# -- retrain ---------------------------------------------------------------------


def test_retrain_all_ones_reproduces_base(tiny_dataset, tiny_split, tiny_signatures,
                                           fast_config, tiny_model):
    state = SteeringState.initial(tiny_dataset.n_attributes)
    model, report, summary = retrain(tiny_dataset, tiny_split, tiny_signatures,
                                     state, fast_config)
    assert np.array_equal(model.W1, tiny_model.W1)
    assert np.array_equal(model.W2, tiny_model.W2)
    X = tiny_dataset.features[tiny_split.diag_instances].astype(np.float64)
    base_preds = predict_batch(tiny_model, X, tiny_split.seen_classes,
                               tiny_signatures, state.weights)
    new_preds = predict_batch(model, X, tiny_split.seen_classes,
                              tiny_signatures, state.weights)
    assert np.array_equal(base_preds, new_preds)
    assert report.epochs_run == fast_config.epochs
    assert summary.n_attributes == tiny_dataset.n_attributes


def test_retrain_weight_zero_column_is_inert(tiny_dataset, tiny_split,
                                             tiny_signatures, fast_config):
    k = 2
    w = np.ones(tiny_dataset.n_attributes)
    w[k] = 0.0
    state = SteeringState(w, 1, ())
    model_a, _, _ = retrain(tiny_dataset, tiny_split, tiny_signatures, state, fast_config)

    # randomize signature column k; with w_k = 0 nothing downstream may change
    raw = tiny_dataset.raw_attributes.copy()
    raw[:, k] = np.random.default_rng(99).normal(size=raw.shape[0]) * 50
    scrambled = standardize_signatures(raw)
    model_b, _, _ = retrain(tiny_dataset, tiny_split, scrambled, state, fast_config)

    X = tiny_dataset.features[tiny_split.diag_instances].astype(np.float64)
    preds_a = predict_batch(model_a, X, tiny_split.seen_classes, tiny_signatures, w)
    preds_b = predict_batch(model_b, X, tiny_split.seen_classes, scrambled, w)
    assert np.array_equal(model_a.W1, model_b.W1)
    assert np.array_equal(preds_a, preds_b)


def test_retrain_rejects_attribute_mismatch(tiny_dataset, tiny_split,
                                            tiny_signatures, fast_config):
    state = SteeringState.initial(tiny_dataset.n_attributes + 1)
    with pytest.raises(ValueError, match="attribute count"):
        retrain(tiny_dataset, tiny_split, tiny_signatures, state, fast_config)


def test_diagnose_defaults_to_seen_with_diag_instances(tiny_dataset, tiny_split,
                                                       tiny_signatures, tiny_model):
    summary = diagnose(tiny_model, tiny_dataset, tiny_split, tiny_signatures,
                       np.ones(tiny_dataset.n_attributes))
    assert summary.selected_categories == tiny_split.seen_classes
    assert summary.q_over.shape == (tiny_dataset.n_attributes,
                                    len(tiny_split.seen_classes))
