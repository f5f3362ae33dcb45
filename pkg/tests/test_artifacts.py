import os

import numpy as np
import pytest

from distcoop.artifacts import atomic_write, csv_text, metrics_table, trajectory_table, write_run
from distcoop.sim import extract_metrics, integrate
from distcoop.verify import regression_scenario


@pytest.fixture(scope="module")
def run():
    s = regression_scenario(t_final=1.0, record_every=100)
    tr = integrate(s)
    return s, tr, extract_metrics(tr, s)


def test_trajectory_header(run):
    s, tr, _ = run
    header, rows = trajectory_table(tr, s)
    assert header[:3] == ["t", "x_1", "x_2"]
    assert header[3:7] == ["xhat_1_1", "xhat_1_2", "gamma_1", "u_1_1"]
    assert len(header) == 3 + 3 * 4
    assert rows.shape == (len(tr), len(header))


def test_metrics_header(run):
    _, _, m = run
    header, rows = metrics_table(m)
    assert header[:3] == ["t", "state_norm", "avg_est_error"]
    assert rows.shape[1] == len(header) == 3 + 2 * 3


def test_csv_round_trips_doubles():
    x = np.array([[0.1, 1 / 3, -2.5e-300]])
    text = csv_text(["a", "b", "c"], x)
    back = np.loadtxt(text.splitlines()[1:], delimiter=",", ndmin=2)
    assert np.array_equal(back, x)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = atomic_write(tmp_path / "sub" / "f.txt", "hello\n")
    assert p.read_text() == "hello\n"
    atomic_write(p, "again\n")
    assert p.read_text() == "again\n"
    assert os.listdir(tmp_path / "sub") == ["f.txt"]


def test_atomic_write_failure_keeps_old_file(tmp_path):
    p = atomic_write(tmp_path / "f.txt", "old\n")
    with pytest.raises(TypeError):
        atomic_write(p, None)
    assert p.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        s = regression_scenario(t_final=1.0, record_every=50)
        tr = integrate(s)
        d = tmp_path / str(k)
        write_run(d, "r", s, tr, extract_metrics(tr, s))
        outs.append(d)
    for name in ("trajectory.csv", "metrics.csv", "output_errors.csv", "summary.txt", "plots.gp"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_gnuplot_references_csv(tmp_path, run):
    s, tr, m = run
    write_run(tmp_path, "r", s, tr, m, formats=("csv", "gnuplot"))
    assert "trajectory.csv" in (tmp_path / "plots.gp").read_text()
