"""Scenario configuration, ensemble sampling and result files.

A run is described by a small JSON document::

    {"scenario": 4, "M": 7, "preset": "fig-sim7",
     "schedule": {"delta_s": 5e-6, "n_steps": 20000}}

Missing physical parameters fall back to :class:`fqpol.model.PhysicalConfig`.
The scenario number decides which relaxation channels are switched on:

=========  ===============================================
scenario   rates
=========  ===============================================
1          none; equal couplings, zero detuning
2          none; couplings may differ, zero detuning
3          transverse only (gamma_T)
4          transverse and longitudinal
custom     chosen with ``rates.transverse`` / ``rates.longitudinal``
idealized  table engine, no density matrix
=========  ===============================================
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dicke
from .lindblad import SaturationRule, Schedule, Trajectory, initial_state, run_protocol
from .model import (RATE_CONVENTIONS, PhysicalConfig, SpinEnsemble,
                    build_effective_hamiltonian, coupling_strength)

PRESETS = {
    "fig-sim2": {"scenario": 2, "omega_prime": (0.0,) * 7,
                 "g": (151.0, 221.0, 173.0, 204.0, 197.0, 176.0, 180.0)},
    "fig-sim3": {"scenario": 3, "omega_prime": (0.0,) * 7,
                 "g": (179.0, 202.0, 194.0, 161.0, 178.0, 204.0, 156.0)},
    "fig-sim7": {"scenario": 4,
                 "omega_prime": (4736.0, 455.0, -6867.0, 1773.0, -1569.0, 703.0, -5204.0),
                 "g": (193.0, 163.0, 175.0, 225.0, 178.0, 160.0, 268.0)},
}
# preset used when a scenario is given for M = 7 with neither arrays nor sampling
_DEFAULT_PRESET = {2: "fig-sim2", 3: "fig-sim3", 4: "fig-sim7"}

SCENARIOS = (1, 2, 3, 4, "custom", "idealized")
DEFAULT_MAX_STEPS = 50_000
DEFAULT_REGION_HALF_WIDTH = 1.75e-6
DEFAULT_DETUNING_SIGMA = 4000.0

_TOP_KEYS = {"scenario", "M", "omega_prime_rad_s", "g_rad_s", "sampling", "schedule", "rates",
             "rate_convention", "preset", "mode", "n_cycles", "output"}
_SAMPLING_KEYS = {"seed", "region_half_width_m", "detuning_sigma_rad_s"}
_SCHEDULE_KEYS = {"delta_s", "t_i_s", "t_int_s", "n_steps", "stop_on_saturation"}
_RATE_KEYS = {"T1_fq_s", "T2_fq_s", "T1_e_s", "T2_e_s", "transverse", "longitudinal"}


class ConfigError(ValueError):
    """Invalid scenario configuration.  ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SamplingSpec:
    seed: int
    region_half_width_m: float = DEFAULT_REGION_HALF_WIDTH
    detuning_sigma_rad_s: float = DEFAULT_DETUNING_SIGMA


@dataclass(frozen=True)
class ScheduleSpec:
    delta_s: float = 5e-6
    t_i_s: float = 5e-6
    t_int_s: float = 95e-6
    n_steps: int = DEFAULT_MAX_STEPS
    stop_on_saturation: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int | str
    M: int
    omega_prime: tuple | None = None
    g: tuple | None = None
    sampling: SamplingSpec | None = None
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    physical: PhysicalConfig = field(default_factory=PhysicalConfig)
    transverse: bool = False
    longitudinal: bool = False
    rate_convention: str = "caption-literal"
    preset: str | None = None
    mode: str = "step1+2"
    n_cycles: int = 100
    output: str | None = None

    def resolved(self) -> dict:
        """JSON-ready description of everything the run depends on."""
        out = asdict(self)
        out["physical"] = asdict(self.physical)
        return out


def _require(cond, key, message):
    if not cond:
        raise ConfigError(key, message)


def _number(value, key, *, positive=False, nonneg=False):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), key,
             f"expected a number, got {value!r}")
    if positive:
        _require(value > 0, key, f"must be positive, got {value!r}")
    if nonneg:
        _require(value >= 0, key, f"must be non-negative, got {value!r}")
    return float(value)


def _integer(value, key, minimum):
    _require(isinstance(value, int) and not isinstance(value, bool), key,
             f"expected an integer, got {value!r}")
    _require(value >= minimum, key, f"must be at least {minimum}, got {value!r}")
    return value


def _array(value, key, M):
    _require(isinstance(value, list), key, "expected a list of numbers")
    _require(len(value) == M, key, f"length {len(value)} does not match M = {M}")
    return tuple(_number(v, f"{key}[{i}]") for i, v in enumerate(value))


def _section(data, key, allowed):
    section = data.get(key, {})
    _require(isinstance(section, dict), key, "expected an object")
    unknown = set(section) - allowed
    _require(not unknown, f"{key}.{sorted(unknown)[0]}" if unknown else key, "unknown key")
    return section


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario description."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON ({exc})") from None
    _require(isinstance(data, dict), "<document>", "top level must be an object")
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, sorted(unknown)[0] if unknown else "", "unknown key")

    _require("scenario" in data, "scenario", "missing")
    scenario = data["scenario"]
    _require(scenario in SCENARIOS and not isinstance(scenario, bool), "scenario",
             f"must be one of {SCENARIOS}, got {scenario!r}")

    preset = data.get("preset")
    if preset is not None:
        _require(preset in PRESETS, "preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
    _require("M" in data or preset is not None, "M", "missing")
    M = _integer(data.get("M", 7), "M", 1)

    kwargs = {"scenario": scenario, "M": M, "preset": preset}

    if scenario == "idealized":
        mode = data.get("mode", "step1+2")
        _require(mode in dicke.MODES or mode in dicke._MODE_ALIASES, "mode",
                 f"unknown mode {mode!r}")
        kwargs["mode"] = mode
        kwargs["n_cycles"] = _integer(data.get("n_cycles", 100), "n_cycles", 1)
        if "output" in data:
            kwargs["output"] = str(data["output"])
        return ScenarioConfig(**kwargs)

    rates = _section(data, "rates", _RATE_KEYS)
    physical = PhysicalConfig()
    overrides = {}
    for key, attr in (("T1_fq_s", "T1_fq"), ("T2_fq_s", "T2_fq"), ("T1_e_s", "T1_e"), ("T2_e_s", "T2_e")):
        if key in rates:
            overrides[attr] = _number(rates[key], f"rates.{key}", positive=True)

    schedule = _section(data, "schedule", _SCHEDULE_KEYS)
    sched_kwargs = {}
    for key in ("delta_s", "t_int_s"):
        if key in schedule:
            sched_kwargs[key] = _number(schedule[key], f"schedule.{key}", positive=True)
    if "t_i_s" in schedule:
        sched_kwargs["t_i_s"] = _number(schedule["t_i_s"], "schedule.t_i_s", nonneg=True)
    if "n_steps" in schedule:
        sched_kwargs["n_steps"] = _integer(schedule["n_steps"], "schedule.n_steps", 1)
    if "stop_on_saturation" in schedule:
        _require(isinstance(schedule["stop_on_saturation"], bool), "schedule.stop_on_saturation",
                 "expected true or false")
        sched_kwargs["stop_on_saturation"] = schedule["stop_on_saturation"]
    sched = ScheduleSpec(**sched_kwargs)
    _require(sched.delta_s <= sched.t_int_s, "schedule.delta_s", "exceeds schedule.t_int_s")
    overrides.update(delta=sched.delta_s, t_i=sched.t_i_s, t_int=sched.t_int_s)
    physical = replace(physical, **overrides)

    convention = data.get("rate_convention", "caption-literal")
    _require(convention in RATE_CONVENTIONS, "rate_convention",
             f"must be one of {RATE_CONVENTIONS}, got {convention!r}")

    if scenario == "custom":
        transverse = rates.get("transverse", False)
        longitudinal = rates.get("longitudinal", False)
        _require(isinstance(transverse, bool), "rates.transverse", "expected true or false")
        _require(isinstance(longitudinal, bool), "rates.longitudinal", "expected true or false")
    else:
        for key in ("transverse", "longitudinal"):
            _require(key not in rates, f"rates.{key}",
                     "only allowed with scenario 'custom'; numbered scenarios fix the channels")
        transverse = scenario in (3, 4)
        longitudinal = scenario == 4

    omega = g = sampling = None
    if preset is not None:
        _require(M == 7, "M", f"preset {preset!r} has 7 spins, got M = {M}")
        omega, g = PRESETS[preset]["omega_prime"], PRESETS[preset]["g"]
    if "omega_prime_rad_s" in data:
        omega = _array(data["omega_prime_rad_s"], "omega_prime_rad_s", M)
    if "g_rad_s" in data:
        g = _array(data["g_rad_s"], "g_rad_s", M)
        _require(all(v >= 0 for v in g), "g_rad_s", "couplings must be non-negative")
    if "sampling" in data:
        s = _section(data, "sampling", _SAMPLING_KEYS)
        _require("seed" in s, "sampling.seed", "a seed is required when sampling")
        seed = _integer(s["seed"], "sampling.seed", 0)
        half = _number(s.get("region_half_width_m", DEFAULT_REGION_HALF_WIDTH),
                       "sampling.region_half_width_m", nonneg=True)
        _require(half < physical.r0, "sampling.region_half_width_m",
                 f"region must stay inside the loop (half-side {physical.r0} m)")
        sigma = _number(s.get("detuning_sigma_rad_s", DEFAULT_DETUNING_SIGMA),
                        "sampling.detuning_sigma_rad_s", nonneg=True)
        sampling = SamplingSpec(seed, half, sigma)

    if g is None and sampling is None:
        if scenario == 1:
            g = (physical.g0(),) * M
        elif M == 7 and scenario in _DEFAULT_PRESET:
            kwargs["preset"] = _DEFAULT_PRESET[scenario]
            omega = PRESETS[kwargs["preset"]]["omega_prime"]
            g = PRESETS[kwargs["preset"]]["g"]
        else:
            raise ConfigError("g_rad_s", "give g_rad_s, a preset or a sampling section")

    if scenario in (1, 2, 3):
        if omega is not None:
            _require(all(w == 0 for w in omega), "omega_prime_rad_s",
                     f"scenario {scenario} requires zero detunings")
    if scenario == 1 and g is not None:
        _require(len(set(g)) == 1, "g_rad_s", "scenario 1 requires equal couplings")

    return ScenarioConfig(**kwargs, omega_prime=omega, g=g, sampling=sampling, schedule=sched,
                          physical=physical, transverse=transverse, longitudinal=longitudinal,
                          rate_convention=convention,
                          output=str(data["output"]) if "output" in data else None)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def sample_couplings(config: PhysicalConfig, M: int, half_width: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Couplings of ``M`` spins placed uniformly in the centred square of
    half-width ``half_width``."""
    if not 0 <= half_width < config.r0:
        raise ValueError(f"sampling region half-width {half_width} must lie in [0, {config.r0})")
    positions = rng.uniform(-half_width, half_width, size=(M, 2)) if half_width > 0 \
        else np.zeros((M, 2))
    return np.array([coupling_strength(config, p) for p in positions])


def sample_ensemble(cfg: ScenarioConfig, seed: int | None = None) -> SpinEnsemble:
    """Draw couplings and detunings from the sampling section.  Detunings stay
    zero for scenarios 1-3 and scenario 1 gives every spin the first coupling
    drawn.  The same seed always yields the same ensemble."""
    spec = cfg.sampling
    if spec is None:
        raise ValueError("configuration has no sampling section")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    g = sample_couplings(cfg.physical, cfg.M, spec.region_half_width_m, rng)
    omega = rng.normal(0.0, spec.detuning_sigma_rad_s, size=cfg.M)
    if cfg.scenario in (1, 2, 3):
        omega = np.zeros(cfg.M)
    if cfg.scenario == 1:
        g = np.full(cfg.M, g[0])
    return SpinEnsemble(omega, g)


def build_ensemble(cfg: ScenarioConfig, seed: int | None = None) -> SpinEnsemble:
    """Ensemble with the scenario's relaxation channels attached.  Explicit
    arrays take precedence over sampled values."""
    if cfg.sampling is not None:
        sampled = sample_ensemble(cfg, seed)
        omega, g = sampled.omega_prime, sampled.g
    else:
        omega, g = np.zeros(cfg.M), None
    if cfg.omega_prime is not None:
        omega = np.array(cfg.omega_prime)
    if cfg.g is not None:
        g = np.array(cfg.g)
    gT, gL = cfg.physical.rates(cfg.M, transverse=cfg.transverse, longitudinal=cfg.longitudinal,
                                convention=cfg.rate_convention)
    return SpinEnsemble(omega, g, gT, gL)


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def idealized_csv(values, M: int) -> str:
    lines = ["cycle,cycles_over_M,p_up"]
    for n, v in enumerate(values):
        lines.append(f"{n},{n / M:.8e},{float(v):.8e}")
    return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    config: ScenarioConfig
    csv_path: Path | None
    json_path: Path | None
    sidecar: dict
    trajectory: Trajectory | None = None
    idealized: np.ndarray | None = None

    @property
    def final_p_up(self) -> float:
        if self.trajectory is not None:
            return float(self.trajectory.p_up_mean[-1])
        return float(self.idealized[-1])


def _rate_report(ens: SpinEnsemble, cfg: ScenarioConfig) -> dict:
    gT, gL = np.asarray(ens.gamma_T), np.asarray(ens.gamma_L)
    return {
        "gamma_T": gT.tolist(), "gamma_L": gL.tolist(),
        "transverse_enabled": bool(cfg.transverse), "longitudinal_enabled": bool(cfg.longitudinal),
        "total_gamma_T": float(gT.sum()), "total_gamma_L": float(gL.sum()),
        "dissipation_free": bool(gT.sum() == 0 and gL.sum() == 0),
    }


def run_scenario(cfg: ScenarioConfig, out_dir=None, *, seed: int | None = None,
                 stem: str | None = None, layout: str = "auto") -> RunResult:
    """Run one scenario.  With ``out_dir`` a CSV trajectory and a JSON sidecar
    are written there; otherwise nothing touches the disk.

    Invariant breaches raise :class:`fqpol.lindblad.InvariantBreach`.
    """
    stem = stem or cfg.output or (cfg.preset or f"scenario{cfg.scenario}_M{cfg.M}")
    sidecar = {"config": cfg.resolved()}
    if cfg.scenario == "idealized":
        values = dicke.idealized_protocol(cfg.M, cfg.n_cycles, cfg.mode)
        sidecar.update(engine="dicke", final_p_up=float(values[-1]), n_cycles=cfg.n_cycles)
        csv_text = idealized_csv(values, cfg.M)
        result = RunResult(cfg, None, None, sidecar, idealized=np.asarray(values, float))
    else:
        ens = build_ensemble(cfg, seed)
        sched = Schedule(cfg.schedule.delta_s, cfg.schedule.t_int_s, cfg.schedule.t_i_s,
                         cfg.schedule.n_steps)
        rule = SaturationRule() if cfg.schedule.stop_on_saturation else None
        traj = run_protocol(initial_state(cfg.M), build_effective_hamiltonian(ens), ens, sched,
                            saturation=rule, layout=layout, keep_final=False)
        used_seed = seed if seed is not None else (cfg.sampling.seed if cfg.sampling else None)
        sidecar.update(
            engine="lindblad", seed=used_seed,
            ensemble={"omega_prime_rad_s": np.asarray(ens.omega_prime).tolist(),
                      "g_rad_s": np.asarray(ens.g).tolist()},
            rates=_rate_report(ens, cfg),
            schedule={"substeps_per_step": sched.n_substeps, "t_int_residual_s": sched.residual,
                      "period_s": sched.period, "max_steps": cfg.schedule.n_steps,
                      "steps_run": int(traj.step[-1]),
                      "stopped_by": "saturation" if traj.saturated else "n_steps",
                      "saturation_rule": {"window": 100, "tol": 1e-4} if rule else None},
            audit=traj.audit(), final_p_up=float(traj.p_up_mean[-1]),
            final_p_up_per_spin=traj.p_up[-1].tolist())
        csv_text = traj.to_csv()
        result = RunResult(cfg, None, None, sidecar, trajectory=traj)
    if out_dir is not None:
        out = Path(out_dir)
        result.csv_path = out / f"{stem}.csv"
        result.json_path = out / f"{stem}.json"
        write_atomic(result.csv_path, csv_text)
        write_atomic(result.json_path, json.dumps(sidecar, indent=2, sort_keys=True, default=str) + "\n")
    return result
