import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_records
from rcip.calibration import (
    CalibrationConfig,
    HelpVariant,
    RiskKind,
    RiskSpec,
    calibrate,
    chain_starts,
    compute_table,
    empirical_risk,
    fixed_sequence_test,
    help_loss,
    loss_for,
    min_records_for,
    miscoverage_loss,
    ood_adjust,
    pvalue_floor,
    select_operating_point,
)
from rcip.dataset import PackedDataset
from rcip.scoring import causal_action_set
from rcip.types import InvalidInputError, ParamPair, ScenarioRecord, StepContext

E_099_10 = 2.4583653604805184677  # e * 0.99^10, mpmath


def scores_step(scores, true=0):
    return StepContext(tuple(math.log(s) for s in scores), tuple(range(len(scores))), true)


def perfect_records(m):
    """Every step puts all but a sliver of mass on the true intent."""
    return [ScenarioRecord(f"p{i}", (StepContext((30.0, 0.0, 0.0), (0, 1, 2), 0),)) for i in range(m)]


# -- losses ------------------------------------------------------------------------

def test_miscoverage_loss_extremes(rng):
    for rec in random_records(rng, 30):
        assert miscoverage_loss(rec, ParamPair(0.0, 1.0)) == 0
    rec = ScenarioRecord("x", (scores_step([0.7, 0.3]),))
    assert miscoverage_loss(rec, ParamPair(1.0, 1.0)) == 1


def test_miscoverage_loss_matches_per_step_membership(rng):
    for rec in random_records(rng, 200, steps=(2, 2)):
        p = ParamPair(float(rng.uniform()), 1.0)
        sets = causal_action_set(rec, p)
        covered = all(s.true_action in sets[t] for t, s in enumerate(rec.steps))
        assert miscoverage_loss(rec, p) == int(not covered)


def test_help_loss_examples():
    single = scores_step([0.9, 0.1])
    helpful = scores_step([0.5, 0.5])
    rec = ScenarioRecord("x", (single, single))
    p = ParamPair(0.6, 1.0)
    assert help_loss(rec, p, "plan") == 0 and help_loss(rec, p, "step") == 0
    zero = ParamPair(0.0, 1.0)
    assert help_loss(rec, zero, "plan") == 1 and help_loss(rec, zero, "step") == 1
    rec = ScenarioRecord("y", (single, helpful, single))
    p = ParamPair(0.45, 1.0)
    assert help_loss(rec, p, HelpVariant.PLAN) == 1
    assert help_loss(rec, p, HelpVariant.STEP) == pytest.approx(1 / 3)


def test_empirical_risk_examples():
    recs = [ScenarioRecord(str(i), (scores_step([0.5, 0.5]),)) for i in range(4)]
    flags = iter([1, 0, 1, 0])
    assert empirical_risk(recs, ParamPair(0.0, 1.0), lambda r, p: next(flags)) == 0.5
    assert empirical_risk(recs, ParamPair(0.0, 1.0), lambda r, p: 0) == 0
    recs400 = [ScenarioRecord(str(i), (scores_step([0.5, 0.5]),)) for i in range(400)]
    assert empirical_risk(recs400, ParamPair(0.0, 1.0), lambda r, p: int(r.scenario_id) < 60) == 0.15
    with pytest.raises(InvalidInputError):
        empirical_risk([], ParamPair(0.0, 1.0), miscoverage_loss)


# -- vectorised sweep vs scalar reference ------------------------------------------------

@pytest.mark.parametrize("spec", [
    RiskSpec(RiskKind.MISCOVERAGE, 0.2),
    RiskSpec(RiskKind.HELP, 0.2, "plan"),
    RiskSpec(RiskKind.HELP, 0.2, "step"),
])
def test_table_matches_scalar_losses(backend, rng, spec):
    recs = random_records(rng, 60, steps=(1, 4), intents=(1, 5), actions=3)
    lam = tuple(np.linspace(0, 1, 41).tolist()) + (0.5,)
    cfg = CalibrationConfig(lambda_grid=sorted(lam), theta_grid=(0.3, 1.0, 4.0), risks=(spec,))
    table = compute_table(recs, cfg)
    loss = loss_for(spec)
    for j in range(cfg.num_hypotheses):
        ref = empirical_risk(recs, cfg.params(j), loss)
        assert table.empirical_risks[j, 0] == pytest.approx(ref, abs=1e-12)


def test_table_on_grid_points_equal_to_scores(backend):
    # lambda exactly at a score value: inclusive threshold keeps the action
    recs = [ScenarioRecord("a", (scores_step([0.5, 0.25, 0.25]),))]
    cfg = CalibrationConfig(lambda_grid=(0.25, 0.5), theta_grid=(1.0,))
    table = compute_table(recs, cfg)
    assert [miscoverage_loss(recs[0], cfg.params(j)) for j in range(2)] == [0, 0]
    np.testing.assert_array_equal(table.empirical_risks[:, 0], [0.0, 0.0])


def test_risk_monotone_in_lambda(rng):
    recs = random_records(rng, 80, steps=(1, 3), actions=3)
    cfg = CalibrationConfig(lambda_grid=np.linspace(0, 1, 101), theta_grid=(0.1, 1.0, 10.0),
                            risks=(RiskSpec("miscoverage", 0.2), RiskSpec("help", 0.5)))
    table = compute_table(recs, cfg)
    L = len(cfg.lambda_grid)
    for b in range(len(cfg.theta_grid)):
        block = table.empirical_risks[b * L:(b + 1) * L]
        assert np.all(np.diff(block[:, 0]) >= 0)
        assert np.all(np.diff(block[:, 1]) <= 0)


# -- fixed-sequence testing -----------------------------------------------------------------

def test_fst_examples():
    assert fixed_sequence_test([1.0] * 5, 0.01, 1) == []
    p = [0.001, 0.002, 0.2, 0.001]
    assert fixed_sequence_test(p, 0.01, 1) == [0, 1]
    assert fixed_sequence_test(p, 0.01, 2, starts=[0, 2]) == [0, 1]
    assert chain_starts(4, 2) == [0, 2]


def test_default_chains_start_each_theta_block():
    cfg = CalibrationConfig()
    assert chain_starts(cfg.num_hypotheses, cfg.num_chains) == [0, 2000, 4000, 6000, 8000]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.floats(0.001, 0.5), st.integers(1, 8))
def test_fst_members_pass_level_and_chains_are_contiguous(p, delta, chains):
    chains = min(chains, len(p))
    got = fixed_sequence_test(p, delta, chains)
    level = delta / chains
    assert all(p[j] <= level for j in got)
    # each start's run is exactly its maximal prefix below level
    for s in chain_starts(len(p), chains):
        j = s
        while j < len(p) and p[j] <= level:
            assert j in got
            j += 1


# -- calibrate ------------------------------------------------------------------------

def test_defaults():
    cfg = CalibrationConfig()
    assert cfg.delta == 0.01
    assert len(cfg.lambda_grid) == 2000
    np.testing.assert_allclose(np.diff(cfg.lambda_grid), 1 / 1999, rtol=1e-9)
    assert cfg.lambda_grid[0] == 0.0 and cfg.lambda_grid[-1] == 1.0
    np.testing.assert_allclose(cfg.theta_grid, [1e-3, 1e-2, 1e-1, 1.0, 10.0], rtol=1e-12)


def test_calibrate_perfect_predictor():
    recs = perfect_records(50)
    cfg = CalibrationConfig(risks=(RiskSpec("miscoverage", 1 - 1e-9),))
    res = calibrate(recs, cfg)
    assert res.feasible
    # some valid lambda covers every record
    assert any(all(miscoverage_loss(r, p) == 0 for r in recs) for p in res.valid_params)


def test_calibrate_infeasible_small_m():
    assert pvalue_floor(0.01, 10) == pytest.approx(0.99**10)
    assert min(1.0, E_099_10) == 1.0
    recs = perfect_records(10)
    res = calibrate(recs, CalibrationConfig(risks=(RiskSpec("miscoverage", 0.01),)))
    assert res.valid_indices == () and res.selected is None and not res.feasible


def test_calibrate_members_pass_level(rng):
    recs = random_records(rng, 300, actions=3)
    cfg = CalibrationConfig(lambda_grid=np.linspace(0, 1, 200), risks=(RiskSpec("miscoverage", 0.3),))
    res = calibrate(recs, cfg)
    assert res.feasible
    assert np.all(res.table.combined_p[list(res.valid_indices)] <= cfg.level)


def test_calibrate_deterministic(rng):
    recs = random_records(rng, 100, actions=3)
    cfg = CalibrationConfig(lambda_grid=np.linspace(0, 1, 100), risks=(RiskSpec("miscoverage", 0.3),))
    a, b = calibrate(recs, cfg), calibrate(list(recs), cfg)
    assert a.valid_indices == b.valid_indices and a.selected == b.selected
    np.testing.assert_array_equal(a.table.p_values, b.table.p_values)


def test_calibrate_accepts_packed(rng):
    recs = random_records(rng, 40, actions=3)
    cfg = CalibrationConfig(lambda_grid=np.linspace(0, 1, 50), risks=(RiskSpec("miscoverage", 0.5),))
    a = calibrate(recs, cfg)
    b = calibrate(PackedDataset.from_records(recs), cfg)
    assert a.valid_indices == b.valid_indices


def test_calibrate_empty_dataset():
    with pytest.raises(InvalidInputError):
        calibrate([], CalibrationConfig())


def test_select_tie_breaks():
    cfg = CalibrationConfig(lambda_grid=(0.2, 0.4), theta_grid=(1.0, 2.0))
    from rcip.calibration import PValueTable

    table = PValueTable(
        lam=np.array([0.2, 0.4, 0.2, 0.4]), theta=np.array([1.0, 1.0, 2.0, 2.0]),
        empirical_risks=np.zeros((4, 1)), p_values=np.zeros((4, 1)),
        help_rate=np.array([0.1, 0.1, 0.1, 0.3]),
    )
    # equal help at indices 0, 1, 2: larger theta wins, then larger lambda
    assert select_operating_point(table, [0, 1, 2, 3]) == 2
    assert select_operating_point(table, [0, 1]) == 1
    assert select_operating_point(table, []) is None
    assert cfg.params(2) == ParamPair(0.2, 2.0)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        CalibrationConfig(delta=0.0)
    with pytest.raises(InvalidInputError):
        CalibrationConfig(lambda_grid=(0.5, 0.2))
    with pytest.raises(InvalidInputError):
        CalibrationConfig(theta_grid=(0.0, 1.0))
    with pytest.raises(InvalidInputError):
        CalibrationConfig(risks=(RiskSpec("help", 0.3), RiskSpec("miscoverage", 0.1)))
    with pytest.raises(InvalidInputError):
        CalibrationConfig(num_chains=0)
    with pytest.raises(InvalidInputError):
        RiskSpec("miscoverage", 1.5)


def test_ood_adjust():
    assert ood_adjust(0.30, 0.15) == pytest.approx(0.15)
    assert ood_adjust(0.10, 0.15) == 0.0
    assert ood_adjust(0.25, 0.0) == 0.25
    with pytest.raises(InvalidInputError):
        ood_adjust(1.2, 0.1)


def test_min_records_for():
    m = min_records_for(0.15, 0.01 / 5)
    assert pvalue_floor(0.15, m) <= 0.002 < pvalue_floor(0.15, m - 1)
