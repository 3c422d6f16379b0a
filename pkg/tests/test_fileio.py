import numpy as np
import pytest

from parallel_ngrc import fileio
from parallel_ngrc.errors import FormatError
from parallel_ngrc.features import FeatureConfig
from parallel_ngrc.lorenz96 import TrajectoryGrid
from parallel_ngrc.ridge import INDEPENDENT, SHARED, ReadoutWeights


def test_trajectory_round_trip(tmp_path, rng):
    g = TrajectoryGrid(rng.normal(size=(5, 17)), 0.01, t0=10.0, norm_mean=1.5, norm_std=2.5, normalized=True)
    fileio.write_trajectory(tmp_path / "a.l96t", g)
    h = fileio.read_trajectory(tmp_path / "a.l96t")
    assert h.data.tobytes() == g.data.tobytes()
    assert (h.dt_save, h.t0, h.norm_mean, h.norm_std, h.normalized) == (0.01, 10.0, 1.5, 2.5, True)


def test_trajectory_layout(tmp_path):
    g = TrajectoryGrid(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.5)
    fileio.write_trajectory(tmp_path / "a.l96t", g)
    raw = (tmp_path / "a.l96t").read_bytes()
    assert raw[:4] == b"L96T"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:16], "little") == 2 and int.from_bytes(raw[16:24], "little") == 2
    assert np.array_equal(np.frombuffer(raw[-32:], "<f8"), [1, 2, 3, 4])


def test_empty_trajectory_round_trip(tmp_path):
    fileio.write_trajectory(tmp_path / "e.l96t", TrajectoryGrid(np.zeros((4, 0)), 0.01))
    assert fileio.read_trajectory(tmp_path / "e.l96t").data.shape == (4, 0)


@pytest.mark.parametrize("mode,rows", [(INDEPENDENT, 6), (SHARED, 1)])
def test_weights_round_trip(tmp_path, rng, mode, rows):
    cfg = FeatureConfig(k=2, n_nn=1, c=0.5)
    w = ReadoutWeights(mode, rng.normal(size=(rows, cfg.d_total)), cfg, 1e-3, 6, 0.25, 3.0)
    fileio.write_weights(tmp_path / "w.ngrw", w)
    v = fileio.read_weights(tmp_path / "w.ngrw")
    assert v.weights.tobytes() == w.weights.tobytes()
    assert (v.mode, v.cfg, v.alpha, v.n_locations, v.norm_mean, v.norm_std) == (mode, cfg, 1e-3, 6, 0.25, 3.0)


def test_corrupt_files(tmp_path, rng):
    bad = tmp_path / "bad"
    bad.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(FormatError):
        fileio.read_trajectory(bad)
    with pytest.raises(FormatError):
        fileio.read_weights(bad)
    fileio.write_trajectory(tmp_path / "t", TrajectoryGrid(rng.normal(size=(2, 3)), 0.01))
    (tmp_path / "cut").write_bytes((tmp_path / "t").read_bytes()[:-8])
    with pytest.raises(FormatError):
        fileio.read_trajectory(tmp_path / "cut")
    raw = bytearray((tmp_path / "t").read_bytes())
    raw[4] = 9
    (tmp_path / "v").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        fileio.read_trajectory(tmp_path / "v")


def test_csv_headers(tmp_path, rng):
    g = TrajectoryGrid(rng.normal(size=(3, 4)), 0.01)
    fileio.write_trajectory_csv(tmp_path / "t.csv", g)
    header, rows = fileio.read_csv(tmp_path / "t.csv")
    assert header == ["t", "x_1", "x_2", "x_3"] and len(rows) == 4
    assert float(rows[2][2]) == g.data[1, 2]
    fileio.write_nrmse_csv(tmp_path / "n.csv", np.array([0.1, 0.2]), 0.01)
    header, rows = fileio.read_csv(tmp_path / "n.csv")
    assert header == ["t", "nrmse"] and rows[1] == ["0.01", "0.2"]
    assert fileio.SWEEP_HEADER == ["axis", "mean", "std_of_mean", "n"]
    assert fileio.COMPLEXITY_HEADER[:4] == ["label", "ml_model", "M", "d_total"]
