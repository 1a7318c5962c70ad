import json

import numpy as np
import pytest

import driveby


def test_version():
    assert driveby.__version__ == "0.1.0"


def test_case_frequencies():
    assert driveby.case_frequencies("unsw")[0] == pytest.approx(6.65)
    assert driveby.case_frequencies("bulli")[0] == pytest.approx(6.7)
    with pytest.raises(RuntimeError):
        driveby.case_frequencies("nowhere")


def test_direct_fdd_peak():
    records = [driveby.simulate_direct("unsw", seed=s) for s in range(5)]
    assert records[0].shape == (3, 7500)
    freq, values = driveby.singular_spectrum(records)
    assert abs(driveby.pick_peak(freq, values, 1.0, 10.0) - 6.65) <= 0.05


def test_znorm_distance():
    assert driveby.znorm_distance(np.array([0.0, 1, 0, 1]), np.array([1.0, 0, 1, 0])) == pytest.approx(4.0)


def test_matrix_profile_motif():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(600)
    motif = rng.standard_normal(40)
    x[50:90] = motif
    x[400:440] = 3 * motif + 2
    profile, index = driveby.matrix_profile(x, 40)
    assert profile[50] == pytest.approx(0.0, abs=1e-6)
    assert index[50] == 400


def test_corrected_arc_curve_bounds():
    x = np.random.default_rng(2).standard_normal(1500)
    cac, lowest, argmin = driveby.corrected_arc_curve(x, 30)
    assert cac.min() >= 0.0 and cac.max() <= 1.0
    assert 30 <= argmin < len(cac) - 30


def test_percentile():
    assert driveby.percentile([1.0, 2.0, 3.0, 4.0], 90.0) == pytest.approx(3.7)


def test_cli_round_trip(tmp_path):
    out = tmp_path / "bundle"
    code, stdout, _ = driveby.run_cli(["simulate", "--crossings", "2", "--damaged", "0", "--out", str(out)])
    assert code == 0
    assert json.loads(stdout)["records"] == 2
    code, _, stderr = driveby.run_cli(["fdd", "--bundle", str(tmp_path / "missing"), "--out", str(tmp_path / "f")])
    assert code == 3
    assert stderr
