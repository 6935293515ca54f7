import json

import numpy as np
import pytest

from conftest import smooth_field, transport_system
from stochns.brownian import PathSpec, increments
from stochns.config import ConfigError, ExperimentConfig, default_oracle_config
from stochns.fields import random_h1_field
from stochns.sde import integrate
from stochns.snapshots import (load_field, load_state, save_field,
                               save_increments, save_state, sha256_file)


def test_default_config_valid():
    cfg = ExperimentConfig.default()
    assert cfg["lattice.dim"] == 2
    assert cfg.sha256() == ExperimentConfig.default().sha256()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.default(**{"lattice": {"grid_m": 64}})
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({**ExperimentConfig.default().data, "extra": 1})


@pytest.mark.parametrize("overrides,msg", [
    ({"lattice": {"grid_n": 15}}, "even"),
    ({"galerkin": {"cutoffs": [8, 16], "n_ref": 20}}, "2\\*max"),
    ({"lattice": {"grid_n": 64}}, "3\\*n_ref"),
    ({"physics": {"t_end": 0.0505}}, "multiple"),
    ({"monitors": {"budget_m": 0.5}}, "exceed 1"),
    ({"noise": {"multiplicative": {"variant": "weird"}}}, "variant"),
], ids=["odd-grid", "nref", "headroom", "dt-grid", "budget-m", "variant"])
def test_validation_errors(overrides, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.default(**overrides)


def test_config_hash_is_content_addressed(tmp_path):
    cfg = ExperimentConfig.default()
    other = cfg.with_overrides({"ensemble": {"n_paths": 3}})
    assert cfg.sha256() != other.sha256()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.data))
    assert ExperimentConfig.from_file(path).sha256() == cfg.sha256()


def test_oracle_preset_shape():
    cfg = default_oracle_config()
    assert cfg["physics.convection"] is False
    assert cfg["noise.multiplicative.variant"] == "zero"
    assert len(cfg["noise.transport.vectors"]) == 1


def test_builders_produce_consistent_objects():
    cfg = ExperimentConfig.default(**{
        "lattice": {"grid_n": 32}, "galerkin": {"cutoffs": [4], "n_ref": 8},
        "physics": {"t_end": 0.01, "dt": 0.001}})
    lattice = cfg.build_lattice()
    system = cfg.build_noise_system(lattice)
    assert system.n_wiener == 5
    assert set(system.g.index_set) == {0}
    assert set(system.xi.index_set) == {1, 2, 3, 4}
    scfg = cfg.stepper_config(8)
    assert scfg.cutoff == 8 and scfg.k0 == cfg["initial.k0"]
    u0 = cfg.initial_field(lattice)
    assert abs(np.sum(np.abs(u0.coeffs) ** 2 * lattice.ksq) - cfg["initial.k0"]) <= 1e-9


# ---------------------------------------------------------------------------
# snapshots

def test_field_round_trip(tmp_path, lat32):
    f = smooth_field(lat32, seed=1)
    save_field(tmp_path / "f", f, {"note": "test"})
    g, meta = load_field(tmp_path / "f")
    assert np.array_equal(f.coeffs, g.coeffs)
    assert g.solenoidal == f.solenoidal
    assert meta["note"] == "test" and meta["grid_n"] == 32


def test_state_round_trip(tmp_path, lat32):
    system = transport_system(lat32, [np.array([0.5, 0.0])])
    from stochns.sde import StepperConfig
    cfg = StepperConfig(nu=0.05, dt=1e-3, t_end=0.01, cutoff=8, budget_m=1.01)
    traj = integrate(cfg, system, PathSpec(1, 0, 1),
                     random_h1_field(lat32, seed=2, k0=1.0))
    state = traj.final
    save_state(tmp_path / "s", state)
    restored, _ = load_state(tmp_path / "s")
    assert np.array_equal(restored.u.coeffs, state.u.coeffs)
    assert restored.t == state.t and restored.step == state.step
    assert restored.budget_sup == state.budget_sup
    assert restored.stops == state.stops


def test_snapshot_bytes_deterministic(tmp_path, lat32):
    f = smooth_field(lat32, seed=3)
    save_field(tmp_path / "a", f, {"seed": 3})
    save_field(tmp_path / "b", f, {"seed": 3})
    assert sha256_file(tmp_path / "a.npy") == sha256_file(tmp_path / "b.npy")
    assert sha256_file(tmp_path / "a.json") == sha256_file(tmp_path / "b.json")


def test_increment_dump(tmp_path):
    block = increments(PathSpec(9, 1, 3), 0.0, 0.01, 20)
    save_increments(tmp_path / "w", block)
    arr = np.load(tmp_path / "w.npy")
    assert np.array_equal(arr, block.increments)
    meta = json.loads((tmp_path / "w.json").read_text())
    assert meta["path_index"] == 1 and meta["n_processes"] == 3
