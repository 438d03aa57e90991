import json

import numpy as np
import pytest

from uxeval.core import MetricVector, RngSpec, derive_stream
from uxeval.errors import (
    DimensionMismatch,
    InvalidConfig,
    ReferenceTooSmall,
    UnknownProfile,
    WeightsNotNormalized,
)
from uxeval.oracle import generate_synthetic
from uxeval.score import (
    BUILTIN_PROFILES,
    AdaptationRule,
    DomainProfile,
    ScoreBreakdown,
    adapt_weights,
    band_of,
    detect_drift,
    load_profile,
    load_rules,
    normalize,
    population_stability_index,
    weighted_score,
)

from conftest import make_tabular


# -- normalization -----------------------------------------------------------

def test_normalize_endpoints_and_midpoint():
    scores, bands = normalize(MetricVector(0.0, 1.0, 0.5, 0.25, 0.75))
    np.testing.assert_allclose(scores, [1.0, 5.0, 3.0, 2.0, 4.0])
    np.testing.assert_array_equal(bands, [1, 5, 3, 2, 4])


def test_band_boundaries():
    assert band_of(1.0) == 1
    assert band_of(1.8) == 2
    assert band_of(2.6) == 3
    assert band_of(3.4) == 4
    assert band_of(4.2) == 5
    assert band_of(5.0) == 5


# -- weighted score ------------------------------------------------------------

def test_worked_example_healthcare():
    S = weighted_score([4, 5, 3, 4, 4], load_profile("healthcare"))
    assert abs(S - 4.20) <= 1e-12


def test_hand_computed_finance_score():
    # 0.20*3 + 0.25*4 + 0.15*2 + 0.25*5 + 0.15*3 = 3.60
    S = weighted_score([3, 4, 2, 5, 3], load_profile("finance"))
    assert abs(S - 3.60) <= 1e-12


def test_equal_weights_reduce_to_mean():
    profile = DomainProfile("equal", np.full(5, 0.2))
    rng = derive_stream(RngSpec(5), 0, "w")
    for _ in range(20):
        s = rng.uniform(1, 5, 5)
        assert abs(weighted_score(s, profile) - s.mean()) <= 1e-12


def test_score_monotone_in_each_criterion():
    rng = derive_stream(RngSpec(6), 0, "mono")
    for name in BUILTIN_PROFILES:
        profile = load_profile(name)
        s = rng.uniform(1, 4.5, 5)
        base = weighted_score(s, profile)
        for i in range(5):
            bumped = s.copy()
            bumped[i] += 0.4
            assert weighted_score(bumped, profile) >= base


def test_dominance_preserved_under_every_profile():
    rng = derive_stream(RngSpec(7), 0, "dom")
    for _ in range(20):
        b = rng.uniform(1, 4, 5)
        a = b + rng.uniform(0, 1, 5)  # a dominates b component-wise
        for name in BUILTIN_PROFILES:
            profile = load_profile(name)
            assert weighted_score(a, profile) >= weighted_score(b, profile)


def test_breakdown_invariants():
    raw = MetricVector(0.9, 0.2, 0.8, 1.0, 0.5)
    profile = load_profile("agriculture")
    breakdown = ScoreBreakdown.from_metrics(raw, profile)
    assert abs(breakdown.total - float(breakdown.weights @ breakdown.scores)) <= 1e-12
    assert breakdown.n == 5
    assert 1.0 <= breakdown.total <= 5.0


def test_audit_scores_reproduce_integer_example():
    raw = MetricVector(0, 0, 0, 0, 0)
    breakdown = ScoreBreakdown.from_audit_scores(raw, [4, 5, 3, 4, 4], load_profile("healthcare"))
    assert abs(breakdown.total - 4.20) <= 1e-12
    np.testing.assert_array_equal(breakdown.bands, [4, 5, 3, 4, 4])


# -- profiles ---------------------------------------------------------------------

def test_builtin_profiles_match_published_percentages():
    expected = {
        "healthcare": (0.25, 0.30, 0.10, 0.10, 0.25),
        "finance": (0.20, 0.25, 0.15, 0.25, 0.15),
        "agriculture": (0.20, 0.30, 0.15, 0.10, 0.25),
        "security": (0.25, 0.20, 0.15, 0.20, 0.20),
    }
    for name, weights in expected.items():
        profile = load_profile(name)
        assert profile.weights.tolist() == list(weights)
        # the printed percent column sums to exactly 100
        assert sum(BUILTIN_PROFILES[name]) == 100


def test_profile_file_round_trip(tmp_path):
    doc = {
        "name": "custom",
        "weights": {
            "fidelity": 40,
            "interpretability": 20,
            "robustness": 10,
            "fairness": 10,
            "completeness": 20,
        },
    }
    path = tmp_path / "profile.json"
    path.write_text(json.dumps(doc))
    profile = load_profile(path)
    assert profile.name == "custom"
    assert profile.weight("fidelity") == pytest.approx(0.4)


def test_profile_file_rejects_bad_sum(tmp_path):
    doc = {
        "name": "broken",
        "weights": {
            "fidelity": 40,
            "interpretability": 20,
            "robustness": 10,
            "fairness": 10,
            "completeness": 10,
        },
    }
    path = tmp_path / "profile.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(WeightsNotNormalized):
        load_profile(path)


def test_unknown_profile():
    with pytest.raises(UnknownProfile):
        load_profile("astrology")


# -- drift -----------------------------------------------------------------------

def test_psi_zero_for_identical_samples():
    rng = derive_stream(RngSpec(8), 0, "psi")
    sample = rng.standard_normal(500)
    assert population_stability_index(sample, sample.copy()) == 0.0


def test_detect_drift_identical_datasets():
    data = generate_synthetic("tabular-linear", 100, 21).dataset
    drift = detect_drift(data, data)
    assert drift.feature_psi.max() == 0.0
    assert not drift.feature_drift


def test_detect_drift_flags_shifted_feature():
    reference = generate_synthetic("tabular-linear", 150, 21).dataset
    X = reference.feature_matrix().copy()
    X[:, 0] += 5.0 * X[:, 0].std()
    current = make_tabular(X)
    drift = detect_drift(reference, current)
    assert drift.feature_psi[0] > 0.2
    assert drift.feature_drift


def test_detect_drift_small_reference_rejected():
    small = generate_synthetic("tabular-linear", 5, 1).dataset
    with pytest.raises(ReferenceTooSmall):
        detect_drift(small, small)


def test_detect_drift_dimension_mismatch():
    a = generate_synthetic("tabular-linear", 20, 1).dataset
    b = make_tabular(np.zeros((20, 2)))
    with pytest.raises(DimensionMismatch):
        detect_drift(a, b)


def test_detect_drift_with_prediction_psi():
    from uxeval.oracle import LinearModel

    reference = generate_synthetic("tabular-linear", 60, 2)
    model = LinearModel(np.vstack([-reference.true_weights, reference.true_weights]),
                        np.zeros(2), link="softmax")
    X = reference.dataset.feature_matrix() + 4.0
    current = make_tabular(X)
    drift = detect_drift(reference.dataset, current, model=model)
    assert drift.prediction_psi is not None
    assert drift.prediction_drift


# -- adaptation ---------------------------------------------------------------------

def _drifted_report():
    data = generate_synthetic("tabular-linear", 100, 21).dataset
    X = data.feature_matrix().copy()
    X[:, 0] += 5.0 * X[:, 0].std()
    return detect_drift(data, make_tabular(X))


def _calm_report():
    data = generate_synthetic("tabular-linear", 100, 21).dataset
    return detect_drift(data, data)


def test_adaptation_noop_without_drift():
    profile = load_profile("finance")
    rule = AdaptationRule("drift-on-features", "robustness", 0.05)
    assert adapt_weights(profile, [rule], _calm_report()) is profile


def test_adaptation_hand_renormalization():
    profile = load_profile("finance")
    rule = AdaptationRule("drift-on-features", "robustness", 0.05)
    log = []
    adapted = adapt_weights(profile, [rule], _drifted_report(), log)
    expected = np.array([0.1905, 0.2381, 0.1905, 0.2381, 0.1429])
    assert np.abs(adapted.weights - expected).max() <= 1e-4
    assert log


def test_adaptation_clamps_to_cap():
    profile = load_profile("finance")
    rule = AdaptationRule("drift-on-features", "robustness", 0.50, cap=0.20)
    adapted = adapt_weights(profile, [rule], _drifted_report())
    # robustness hits the 0.20 cap before renormalization
    assert adapted.weight("robustness") == pytest.approx(0.20 / 1.05)


def test_adaptation_conserves_total_weight():
    rng = derive_stream(RngSpec(9), 0, "adapt")
    drift = _drifted_report()
    criteria = ("fidelity", "interpretability", "robustness", "fairness", "completeness")
    for _ in range(50):
        profile = load_profile("security")
        rules = [
            AdaptationRule("drift-on-features", criteria[int(rng.integers(0, 5))],
                           float(rng.uniform(-0.1, 0.2)), floor=0.05, cap=0.6)
            for _ in range(int(rng.integers(1, 4)))
        ]
        adapted = adapt_weights(profile, rules, drift)
        assert abs(adapted.weights.sum() - 1.0) <= 1e-9
        assert (adapted.weights >= 0).all()


def test_rule_validation():
    with pytest.raises(InvalidConfig):
        AdaptationRule("drift-on-mars", "robustness", 0.1)
    with pytest.raises(InvalidConfig):
        AdaptationRule("drift-on-features", "accuracy", 0.1)
    with pytest.raises(InvalidConfig):
        AdaptationRule("drift-on-features", "fairness", 0.1, floor=0.5, cap=0.2)


def test_rules_file_percent_units(tmp_path):
    doc = [{"trigger": "drift-on-features", "criterion": "robustness",
            "delta": 5, "floor": 0, "cap": 40}]
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(doc))
    rules = load_rules(path)
    assert rules[0].delta == pytest.approx(0.05)
    assert rules[0].cap == pytest.approx(0.40)


def test_shipped_default_rules_parse():
    from uxeval.report import schema_path

    rules = load_rules(schema_path().parent / "rules_fraud.json")
    assert len(rules) == 2
    assert {r.trigger for r in rules} == {"drift-on-features", "drift-on-predictions"}
