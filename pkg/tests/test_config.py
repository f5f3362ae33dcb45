import json

import numpy as np
import pytest

from distcoop.config import ScenarioConfig, example1, example2
from distcoop.errors import ConfigError
from distcoop.graph import is_strongly_connected
from distcoop.node import Mode


def test_round_trip(small_doc):
    cfg = ScenarioConfig(small_doc)
    again = ScenarioConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_load_from_file(tmp_path, small_doc):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(small_doc))
    assert ScenarioConfig.load(p) == ScenarioConfig(small_doc)
    with pytest.raises(ConfigError, match="cannot read"):
        ScenarioConfig.load(tmp_path / "missing.json")


def test_edges_are_one_based(small_doc):
    cfg = ScenarioConfig(small_doc)
    # [1, 2] means node 2 receives from node 1
    assert cfg.parsed.graph.adjacency[1, 0] == 1.0
    assert cfg.parsed.graph.adjacency[0, 1] == 0.0


def test_wrong_column_count_names_field(small_doc):
    small_doc["plant"]["A"] = np.eye(4).tolist()
    small_doc["plant"]["x0"] = [0.0] * 4
    small_doc["plant"]["B"] = [[[0.0]] * 4] * 3
    small_doc["plant"]["C"][1] = [[1.0, 0.0, 0.0]]
    small_doc["plant"]["C"][0] = [[1.0, 0.0, 0.0, 0.0]]
    with pytest.raises(ConfigError, match=r"plant\.C\[1\]: has 3 columns, expected 4"):
        ScenarioConfig(small_doc)


def test_robust_gamma0_message(small_doc):
    small_doc["nodes"].update(mode="robust", gamma0=0.5, epsilon=0.01)
    with pytest.raises(ConfigError, match=r"nodes\.gamma0: robust modes require the initial adaptive gain"):
        ScenarioConfig(small_doc)


@pytest.mark.parametrize("section", ["<root>", "graph", "plant", "nodes", "integrator"])
def test_unknown_keys_rejected(small_doc, section):
    target = small_doc if section == "<root>" else small_doc[section]
    target["bogus"] = 1
    with pytest.raises(ConfigError, match="unknown key"):
        ScenarioConfig(small_doc)


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError, match=r"line 2, column \d+"):
        ScenarioConfig.from_json('{"a": 1,\n  oops}')


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["graph"].update(edges=[[1, 1]]), "graph.edges[0]"),
    (lambda d: d["graph"].update(edges=[[0, 2]]), "graph.edges[0]"),
    (lambda d: d["nodes"].update(mode="turbo"), "nodes.mode"),
    (lambda d: d["nodes"].update(mu=-1.0), "nodes.mu"),
    (lambda d: d["integrator"].update(dt=0.0), "integrator.dt"),
    (lambda d: d["integrator"].update(method="midpoint"), "integrator.method"),
    (lambda d: d["synthesis"].update(method="magic"), "synthesis.method"),
    (lambda d: d["plant"].update(x0=[1.0]), "plant.x0"),
    (lambda d: d.update(schema_version=7), "schema_version"),
    (lambda d: d["outputs"].update(formats=["pdf"]), "outputs.formats"),
])
def test_field_named_errors(small_doc, mutate, field):
    mutate(small_doc)
    with pytest.raises(ConfigError) as err:
        ScenarioConfig(small_doc)
    assert str(err.value).startswith(field + ":")


def test_with_overrides_keeps_other_fields(small_doc):
    cfg = ScenarioConfig(small_doc).with_overrides(dt=0.005, t_final=None)
    assert cfg.parsed.integrator.dt == 0.005
    assert cfg.parsed.integrator.t_final == 2.0


def test_explicit_gains(small_doc):
    small_doc["synthesis"] = {"method": "explicit", "K": [[[0.0, 0.0]]] * 3, "F": [[[-1.0], [0.0]]] * 3}
    gains = ScenarioConfig(small_doc).synthesize()
    np.testing.assert_array_equal(gains.estimator_gains[1], [[-1.0], [0.0]])


def test_example1_document():
    cfg = example1(noisy=False)
    p = cfg.parsed
    np.testing.assert_array_equal(p.x0, [-200.0, -160.0, 0.0, 0.0])
    assert p.graph.n_nodes == 6 and len(p.graph.edges()) == 6
    assert is_strongly_connected(p.graph)
    b1 = p.plant.inputs[0][:, 0]
    np.testing.assert_allclose(b1, [0.0, 0.0, np.cos(np.pi / 3) / 5, np.sin(np.pi / 3) / 5], atol=1e-15)
    sensing = [i for i, c in enumerate(p.plant.outputs) if np.any(c)]
    assert sensing == [0, 2]
    assert p.params.mode is Mode.ROBUST
    assert not p.plant.noisy
    assert example1(noisy=True).parsed.plant.noisy


def test_example1_noise_waveforms():
    plant = example1(noisy=True).parsed.plant
    t = 0.7
    np.testing.assert_allclose(plant.omega(t), 0.02 * np.sin(np.array([1, 2, 3, 4]) * t), atol=1e-15)
    np.testing.assert_allclose(plant.nu(0, t), 0.02 * np.cos(np.array([1, 2]) * t), atol=1e-15)


def test_example2_document():
    cfg = example2(scale=8, seed=0)
    p = cfg.parsed
    assert p.plant.n == 8 and p.graph.n_nodes == 8
    np.testing.assert_array_equal(np.diag(p.plant.A, 1), np.full(7, 0.01))
    assert np.count_nonzero(p.plant.A) == 7
    np.testing.assert_allclose(p.x0, 1 + 0.01 * np.arange(1, 9))
    np.testing.assert_array_equal(p.params.x_hat0[:, 0], np.arange(1, 9))
    assert is_strongly_connected(p.graph)
    assert p.params.mode is Mode.PURE_OBSERVER


def test_example2_noisy_waveforms():
    plant = example2(scale=4, noisy=True).parsed.plant
    t = 3.0
    np.testing.assert_allclose(plant.omega(t), np.full(4, 0.2 * np.sin(0.01 * t)))
    np.testing.assert_allclose(plant.nu(2, t), [0.2 * np.cos(0.01 * t)])


def test_example2_full_scale_dimensions():
    p = example2(full_scale=True).parsed
    assert p.plant.A.shape == (100, 100)
    assert p.graph.n_nodes == 100
    assert is_strongly_connected(p.graph)


def test_example2_deterministic():
    assert example2(scale=10, seed=3) == example2(scale=10, seed=3)
