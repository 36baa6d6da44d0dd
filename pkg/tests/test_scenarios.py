import json

import numpy as np
import pytest

from fqpol.lindblad import InvariantBreach
from fqpol.model import PhysicalConfig
from fqpol.scenarios import (PRESETS, ConfigError, ScenarioConfig, build_ensemble, parse_config,
                             run_scenario, sample_couplings, sample_ensemble, write_atomic)


def cfg(**data):
    return parse_config(json.dumps(data))


def test_minimal_config_gets_table_defaults():
    c = cfg(scenario=1, M=3)
    assert c.physical == PhysicalConfig()
    assert c.g == (PhysicalConfig().g0(),) * 3 and c.omega_prime is None
    ens = build_ensemble(c)
    assert np.all(ens.gamma_T == 0) and np.all(ens.gamma_L == 0)
    assert np.all(ens.omega_prime == 0)


def test_caption_arrays_accepted_verbatim():
    data = {"scenario": 4, "M": 7, "omega_prime_rad_s": list(PRESETS["fig-sim7"]["omega_prime"]),
            "g_rad_s": [193, 163, 175, 225, 178, 160, 268]}
    c = parse_config(json.dumps(data))
    assert c.g == (193.0, 163.0, 175.0, 225.0, 178.0, 160.0, 268.0)
    ens = build_ensemble(c)
    assert np.allclose(ens.gamma_T, [1 / 30e-6] + [1e3] * 7)
    assert np.allclose(ens.gamma_L, [1 / 200e-6] + [1.0] * 7)


def test_scenario_defaults_to_caption_preset_for_seven_spins():
    assert cfg(scenario=3, M=7).preset == "fig-sim3"
    assert cfg(scenario=4, M=7).g == PRESETS["fig-sim7"]["g"]


@pytest.mark.parametrize("data,key", [
    ({"scenario": 4, "M": 7, "g_rad_s": [1, 2, 3, 4, 5]}, "g_rad_s"),
    ({"M": 3}, "scenario"),
    ({"scenario": 9, "M": 3}, "scenario"),
    ({"scenario": 1}, "M"),
    ({"scenario": 1, "M": 0}, "M"),
    ({"scenario": 1, "M": 2, "bogus": 1}, "bogus"),
    ({"scenario": 2, "M": 3, "sampling": {"region_half_width_m": 1e-6}}, "sampling.seed"),
    ({"scenario": 2, "M": 3, "sampling": {"seed": 1, "region_half_width_m": 3e-6}},
     "sampling.region_half_width_m"),
    ({"scenario": 2, "M": 3, "schedule": {"delta_s": -1}}, "schedule.delta_s"),
    ({"scenario": 2, "M": 3, "schedule": {"n_steps": 0}}, "schedule.n_steps"),
    ({"scenario": 2, "M": 3, "schedule": {"steps": 4}}, "schedule.steps"),
    ({"scenario": 3, "M": 2, "g_rad_s": [1, 2], "rates": {"transverse": False}}, "rates.transverse"),
    ({"scenario": 1, "M": 2, "g_rad_s": [1, 2]}, "g_rad_s"),
    ({"scenario": 2, "M": 2, "g_rad_s": [1, 2], "omega_prime_rad_s": [5, 0]}, "omega_prime_rad_s"),
    ({"scenario": 4, "M": 3, "rate_convention": "x", "g_rad_s": [1, 2, 3]}, "rate_convention"),
    ({"scenario": 4, "M": 3}, "g_rad_s"),
    ({"scenario": 4, "M": 3, "preset": "fig-sim7"}, "M"),
    ({"scenario": 4, "M": 2, "g_rad_s": [1, "a"]}, "g_rad_s[1]"),
])
def test_config_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(data))
    assert err.value.key == key
    assert str(err.value).startswith(key)


def test_invalid_json():
    with pytest.raises(ConfigError):
        parse_config("{scenario: 1")


def test_rate_gating_per_scenario():
    for scen, (t, l) in {1: (False, False), 2: (False, False), 3: (True, False), 4: (True, True)}.items():
        c = cfg(scenario=scen, M=7)
        ens = build_ensemble(c)
        assert bool(ens.gamma_T.sum()) == t and bool(ens.gamma_L.sum()) == l
    c = cfg(scenario="custom", M=2, g_rad_s=[100, 200], rates={"longitudinal": True, "T1_e_s": 0.5})
    ens = build_ensemble(c)
    assert ens.gamma_T.sum() == 0 and ens.gamma_L[1] == pytest.approx(2.0)


def test_physical_convention_option():
    ens = build_ensemble(cfg(scenario=4, M=7, rate_convention="physical"))
    assert ens.gamma_L[0] == pytest.approx(0.5 / 200e-6)


def test_sampling_is_reproducible():
    c = cfg(scenario=4, M=5, sampling={"seed": 11})
    a, b = sample_ensemble(c), sample_ensemble(c)
    assert np.array_equal(a.g, b.g) and np.array_equal(a.omega_prime, b.omega_prime)
    other = sample_ensemble(c, seed=12)
    assert not np.array_equal(a.g, other.g)
    assert np.all(sample_ensemble(cfg(scenario=2, M=5, sampling={"seed": 1})).omega_prime == 0)
    s1 = sample_ensemble(cfg(scenario=1, M=4, sampling={"seed": 1}))
    assert len(set(s1.g)) == 1


def test_sampling_point_region_gives_g0():
    c = cfg(scenario=2, M=4, sampling={"seed": 3, "region_half_width_m": 0.0})
    assert np.allclose(sample_ensemble(c).g, PhysicalConfig().g0())
    assert PhysicalConfig().g0() == pytest.approx(175, rel=0.02)


def test_sampled_coupling_range():
    rng = np.random.default_rng(0)
    g = sample_couplings(PhysicalConfig(), 10_000, 1.75e-6, rng)
    g0 = PhysicalConfig().g0()
    assert g.min() >= g0 * (1 - 1e-12)
    assert 240 < g.max() < 270
    with pytest.raises(ValueError):
        sample_couplings(PhysicalConfig(), 3, 3e-6, rng)


def test_sampled_detuning_spread():
    c = cfg(scenario=4, M=7, sampling={"seed": 5, "detuning_sigma_rad_s": 4000.0})
    w = np.concatenate([sample_ensemble(c, seed=s).omega_prime for s in range(300)])
    assert np.std(w) == pytest.approx(4000, rel=0.05) and abs(np.mean(w)) < 200


def test_idealized_config_and_run(tmp_path):
    c = cfg(scenario="idealized", M=10, mode="step1+2", n_cycles=50)
    res = run_scenario(c, tmp_path)
    assert np.all(np.diff(res.idealized) < 0)
    lines = res.csv_path.read_text().splitlines()
    assert lines[0] == "cycle,cycles_over_M,p_up" and len(lines) == 52
    with pytest.raises(ConfigError):
        cfg(scenario="idealized", M=3, mode="weird")


def test_run_writes_csv_and_sidecar(tmp_path):
    c = cfg(scenario=3, M=2, g_rad_s=[170.0, 230.0], schedule={"n_steps": 20})
    res = run_scenario(c, tmp_path, stem="run")
    rows = res.csv_path.read_text().splitlines()
    assert rows[0].split(",") == ["step", "time_s", "p_up_1", "p_up_2", "p_up_mean",
                                  "trace_error", "min_eig"]
    assert len(rows) == 22
    side = json.loads(res.json_path.read_text())
    assert side["rates"]["transverse_enabled"] and not side["rates"]["longitudinal_enabled"]
    assert side["rates"]["total_gamma_L"] == 0
    assert side["schedule"]["stopped_by"] == "n_steps"
    assert side["config"]["g"] == [170.0, 230.0]
    assert side["audit"]["max_trace_error"] < 1e-9
    for row in rows[1:]:
        vals = [float(v) for v in row.split(",")]
        assert all(0 <= p <= 1 for p in vals[2:5]) and vals[5] < 1e-9
    assert not list(tmp_path.glob("*.tmp"))


def test_identical_config_gives_identical_bytes(tmp_path):
    c = cfg(scenario=4, M=2, sampling={"seed": 4}, schedule={"n_steps": 15})
    a = run_scenario(c, tmp_path / "a").csv_path.read_bytes()
    b = run_scenario(c, tmp_path / "b").csv_path.read_bytes()
    assert a == b


def test_dissipation_free_scenarios_flagged(tmp_path):
    side = run_scenario(cfg(scenario=2, M=2, g_rad_s=[150.0, 200.0],
                            schedule={"n_steps": 3}), None).sidecar
    assert side["rates"]["dissipation_free"]


def test_breach_propagates():
    c = cfg(scenario="custom", M=1, g_rad_s=[100.0], rates={"longitudinal": True, "T1_fq_s": 1e-7},
            schedule={"n_steps": 3})
    with pytest.warns(UserWarning), pytest.raises(InvariantBreach):
        run_scenario(c)


def test_write_atomic(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    write_atomic(target, "one")
    write_atomic(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]
