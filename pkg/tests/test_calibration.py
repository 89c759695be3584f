import math

import numpy as np
import pytest

from nrl2sm.calibration import (
    CalibrationEnsemble,
    Realization,
    block_fading_gains,
    calibrate_beta,
    calibration_objective,
    reference_for,
    gen_fading_ensemble,
    golden_section_search,
    load_ensemble,
    save_ensemble,
)
from nrl2sm.errors import InvalidInputError, LutFormatError
from nrl2sm.lut import capacity_threshold_db
from nrl2sm.tables import mcs_lookup


def noise_grid(key):
    e = mcs_lookup(*key)
    thr = capacity_threshold_db(e.modulation_order, e.ecr)
    return [thr + d for d in (-1.0, 1.0, 3.0, 5.0, 7.0)]


def test_golden_section_quadratic():
    x, trace = golden_section_search(lambda b: (b - 2.5) ** 2, 0.0, 10.0, 1e-6)
    assert x == pytest.approx(2.5, abs=1e-5)
    assert len(trace) < 60


def test_objective_zero_at_planted_beta():
    ens = gen_fading_ensemble(("Table1", 13), 10, noise_grid(("Table1", 13)), planted_beta=5.16)
    assert calibration_objective(5.16, ens) == pytest.approx(0.0, abs=1e-20)
    assert calibration_objective(2.0, ens) > 0.0


@pytest.mark.parametrize("key, beta", [(("Table1", 0), 1.60), (("Table1", 13), 5.16), (("Table1", 28), 34.28)])
def test_plant_and_recover(key, beta):
    ens = gen_fading_ensemble(key, 50, noise_grid(key), planted_beta=beta, seed=3)
    res = calibrate_beta(ens)
    assert res.beta_opt == pytest.approx(beta, rel=0.05)
    assert res.objective_value == min(v for _, v in res.search_trace)
    assert not res.beta_insensitive


def test_flat_channels_are_beta_insensitive():
    ref = reference_for(("Table1", 5))
    reals = [Realization(np.full(8, 10 ** (x / 10)), float(ref(x)), 0, k) for k, x in enumerate((-2.0, -1.0))]
    res = calibrate_beta(CalibrationEnsemble(reals, ("Table1", 5), ref))
    assert res.beta_insensitive


def test_capacity_mode_runs():
    ens = gen_fading_ensemble(("Table1", 13), 20, noise_grid(("Table1", 13)), mode="capacity")
    res = calibrate_beta(ens)
    assert 0.1 <= res.beta_opt <= 300 and math.isfinite(res.objective_value)


def test_ensemble_validation():
    ref = reference_for(("Table1", 0))
    one = Realization(np.ones(4), 0.5, 0, 0)
    with pytest.raises(InvalidInputError):
        CalibrationEnsemble([one], ("Table1", 0), ref)
    with pytest.raises(InvalidInputError):
        CalibrationEnsemble([one, Realization(np.ones(4), 0.4, 1, 0)], ("Table1", 0), ref)
    with pytest.raises(InvalidInputError):
        CalibrationEnsemble([one, Realization(np.ones(4), 0.0, 1, 1)], ("Table1", 0), ref)


def test_from_samples_drops_saturated():
    ref = reference_for(("Table1", 0))
    samples = [(np.ones(4), 0.5), (np.ones(4), 0.0), (np.full(4, 2.0), 0.2), (np.ones(4), 1.0)]
    ens = CalibrationEnsemble.from_samples(samples, ("Table1", 0), ref)
    assert len(ens.realizations) == 2 and ens.dropped == 2


def test_bad_search_range():
    ens = gen_fading_ensemble(("Table1", 0), 4, noise_grid(("Table1", 0)))
    with pytest.raises(InvalidInputError):
        calibrate_beta(ens, beta_min=5, beta_max=1)
    with pytest.raises(InvalidInputError):
        calibration_objective(0.0, ens)


def test_block_fading_unit_mean():
    g = block_fading_gains(np.random.default_rng(0), 10_000, 1)
    assert g.mean() == pytest.approx(1.0, abs=0.05)
    g = block_fading_gains(np.random.default_rng(0), 10, 4)
    assert len(g) == 10 and g[0] == g[3] and g[4] == g[7]


def test_ensemble_file_roundtrip(tmp_path):
    key = ("Table1", 13)
    ens = gen_fading_ensemble(key, 6, noise_grid(key), planted_beta=5.16)
    path = tmp_path / "ens.json"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    assert back.mcs == ens.mcs and len(back.realizations) == len(ens.realizations)
    for a, b in zip(ens.realizations, back.realizations):
        np.testing.assert_allclose(a.spectrum, b.spectrum, rtol=1e-12)
    path.write_text('{"mcs": {"table_id": "Table1", "index": 99}, "realizations": []}')
    with pytest.raises(LutFormatError):
        load_ensemble(path)


@pytest.mark.parametrize("key", [("Table1", 13), ("Table2", 20)])
def test_beta_insensitive_to_rb_granularity(key):
    # wider RBs over the same physical channel: half the RBs, half the RBs per coherence block
    fine = gen_fading_ensemble(key, 50, noise_grid(key), n_rbs=48, coherence_rbs=4, seed=11, mode="capacity")
    coarse = gen_fading_ensemble(key, 50, noise_grid(key), n_rbs=24, coherence_rbs=2, seed=11, mode="capacity")
    b_fine = calibrate_beta(fine).beta_opt
    b_coarse = calibrate_beta(coarse).beta_opt
    assert abs(b_fine - b_coarse) <= 0.1 * b_fine
