"""Scenario files: a strict YAML schema mapped onto ExperimentConfig.

Every physical quantity carries its unit in the key name (``center_ns``,
``period_mhz``, ``dark_rate_hz``...). Unknown keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .comb_preparation import PreparationSequence, PulsePair
from .experiments import ExperimentConfig, TimeBinQubitSpec
from .field_propagation import PulseSpec, TimeGrid
from .photon_detection import DetectorModel, TrialPlan
from .spectral_medium import CombParams, FrequencyGrid, MaterialParams

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "ScenarioError",
    "Scenario",
    "LoadedScenario",
    "parse_scenario",
    "load_scenario_text",
    "list_presets",
    "preset_path",
]

SCHEMA_VERSION = 1
KINDS = ("single_mode", "efficiency_bracket", "linearity", "decay", "multimode", "interference", "calibration")

NS, US, MS = 1e-9, 1e-6, 1e-3
MHZ, KHZ, GHZ = 1e6, 1e3, 1e9


class ScenarioError(ValueError):
    """Invalid scenario. ``problems`` is a list of ``{"key", "message"}`` dicts."""

    def __init__(self, problems: list, source: str = ""):
        self.problems = list(problems)
        self.source = source
        lines = [f"{p['key']}: {p['message']}" if p["key"] else p["message"] for p in self.problems]
        prefix = f"{source}: " if source else ""
        super().__init__(prefix + "; ".join(lines))

    def to_dict(self) -> dict:
        return {"error": "ScenarioError", "source": self.source, "problems": self.problems}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PulseModel(_Strict):
    center_ns: float
    fwhm_ns: float = Field(30.0, gt=0)
    nbar: float = Field(0.5, ge=0)
    phase_rad: float = 0.0


class CombModel(_Strict):
    period_mhz: float = Field(gt=0)
    tooth_fwhm_mhz: float = Field(gt=0)
    shape: Literal["lorentzian", "gaussian", "square"] = "lorentzian"
    d_peak: float = Field(1.0, ge=0)
    d_background: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _finesse(self):
        if self.tooth_fwhm_mhz >= self.period_mhz:
            raise ValueError(
                f"comb invariant violated: tooth_fwhm_mhz ({self.tooth_fwhm_mhz:g}) must be smaller than "
                f"period_mhz ({self.period_mhz:g}), i.e. finesse > 1"
            )
        return self


class PairModel(_Strict):
    area_rad: float = Field(gt=0, lt=math.pi / 2)
    separation_ns: float = Field(gt=0)
    pulse_fwhm_ns: float = Field(30.0, gt=0)
    weight: float = Field(1.0, ge=0, le=1)


class PreparationModel(_Strict):
    pairs: list[PairModel] = Field(min_length=1)
    n_repetitions: int = Field(100, ge=0)
    pair_spacing_us: float = Field(15.0, gt=0)
    wait_before_storage_us: float = Field(1200.0, ge=0)


class MediumModel(_Strict):
    combs: list[CombModel] = Field(default_factory=list, max_length=2)
    comb_weight_first: Optional[float] = Field(None, ge=0, le=1)
    preparation: Optional[PreparationModel] = None
    envelope_fwhm_mhz: Optional[float] = Field(None, gt=0)
    tooth_floor_fwhm_mhz: float = Field(1.0, ge=0)
    control_depth: float = Field(3.9, ge=0)
    include_dispersion: bool = True

    @model_validator(mode="after")
    def _one_source(self):
        if self.combs and self.preparation is not None:
            raise ValueError("give either combs or preparation, not both")
        if not self.combs and self.preparation is None:
            raise ValueError("medium needs combs or a preparation sequence")
        return self


class MaterialModel(_Strict):
    t1_us: float = Field(100.0, gt=0)
    t2_us: float = Field(7.0, gt=0)
    tz_ms: float = Field(6.0, gt=0)
    inhom_fwhm_ghz: float = Field(2.0, gt=0)
    d_max: float = Field(4.0, gt=0)
    branching_to_aux: float = Field(0.5, ge=0, le=1)
    shf_splitting_mhz: float = Field(0.0, ge=0)
    shf_weight: float = Field(0.5, ge=0, le=1)


class FrequencyGridModel(_Strict):
    span_mhz: float = Field(200.0, gt=0)
    n_points: int = Field(8001, ge=3)


class TimeGridModel(_Strict):
    t0_ns: float = 0.0
    dt_ns: float = Field(1.0, gt=0)
    n_samples: int = Field(4000, ge=2)


class DetectorSection(_Strict):
    eta_d: float = Field(0.32, ge=0, le=1)
    eta_t: float = Field(0.2, ge=0, le=1)
    dark_rate_hz: float = Field(100.0, ge=0)
    bin_width_ns: float = Field(10.0, gt=0)


class TrialsModel(_Strict):
    per_sequence: int = Field(400, ge=1)
    trial_rate_khz: float = Field(200.0, gt=0)
    sequence_rate_hz: float = Field(40.0, gt=0)
    n_sequences: Optional[int] = Field(None, ge=1)
    total: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _count(self):
        if self.n_sequences is not None and self.total is not None:
            raise ValueError("give n_sequences or total, not both")
        return self


class WindowModel(_Strict):
    start_ns: float
    end_ns: float
    label: str


class Scenario(_Strict):
    version: int
    kind: Literal[KINDS]
    description: str = ""
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    out_dir: Optional[str] = None
    pulses: list[PulseModel] = Field(min_length=1)
    medium: Optional[MediumModel] = None
    material: MaterialModel = MaterialModel()
    frequency_grid: FrequencyGridModel = FrequencyGridModel()
    time_grid: TimeGridModel = TimeGridModel()
    detector: DetectorSection = DetectorSection()
    trials: TrialsModel = TrialsModel()
    analysis_windows: list[WindowModel] = Field(default_factory=list)
    experiment: dict = Field(default_factory=dict)


# kind-specific parameters


class _NoParams(_Strict):
    pass


class BracketParams(_Strict):
    tooth_fwhms_mhz: list[float] = Field([1.0, 1.5, 2.0], min_length=1)
    target_transmission: float = Field(0.05, gt=0, lt=1)
    target_efficiency: float = Field(0.005, gt=0, lt=1)


class LinearityParams(_Strict):
    nbar_values: list[float] = Field(min_length=4)


class DecayParams(_Strict):
    storage_times_ns: list[float] = Field(min_length=3)
    hold: Literal["mean", "peak"] = "mean"


class InterferenceParams(_Strict):
    tau_ns: float = Field(100.0, gt=0)
    nbar_total: float = Field(0.85, ge=0)
    phi_values_rad: list[float] = Field(min_length=4)
    target_v_raw: Optional[float] = Field(None, gt=0, le=1)


class MultimodeParams(_Strict):
    echo_tolerance_ns: float = Field(15.0, gt=0)


class SingleModeParams(_Strict):
    echo_tolerance_ns: float = Field(15.0, gt=0)


_PARAMS = {
    "single_mode": SingleModeParams,
    "efficiency_bracket": BracketParams,
    "linearity": LinearityParams,
    "decay": DecayParams,
    "multimode": MultimodeParams,
    "interference": InterferenceParams,
    "calibration": _NoParams,
}


@dataclass(frozen=True)
class LoadedScenario:
    scenario: Scenario
    config: ExperimentConfig
    kind: str
    params: BaseModel
    source: str = ""

    def resolved(self) -> dict:
        """Scenario with every default filled in, as plain JSON-able data."""
        data = self.scenario.model_dump(mode="json")
        data["experiment"] = self.params.model_dump(mode="json")
        return data

    def qubit(self) -> TimeBinQubitSpec:
        p = self.params
        return TimeBinQubitSpec(tau=p.tau_ns * NS, nbar_total=p.nbar_total)


def _problems(err: ValidationError, prefix: str = "") -> list:
    out = []
    for e in err.errors():
        key = ".".join(str(x) for x in (prefix, *e["loc"]) if x != "")
        msg = e["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, ") :]
        if e["type"] == "missing":
            msg = "required key missing"
        elif e["type"] == "extra_forbidden":
            msg = "unknown key (check spelling and unit suffix)"
        out.append({"key": key, "message": msg})
    return out


def _required_keys() -> list:
    return [name for name, f in Scenario.model_fields.items() if f.is_required()]


def _build_config(s: Scenario) -> ExperimentConfig:
    m = s.medium
    combs = ()
    prep = None
    weights = None
    if m is not None:
        combs = tuple(
            CombParams(c.period_mhz * MHZ, c.tooth_fwhm_mhz * MHZ, c.shape, c.d_peak, c.d_background) for c in m.combs
        )
        if m.comb_weight_first is not None:
            weights = (m.comb_weight_first, 1.0 - m.comb_weight_first)
        if m.preparation is not None:
            p = m.preparation
            prep = PreparationSequence(
                pairs=tuple(
                    (PulsePair(q.area_rad, q.separation_ns * NS, q.pulse_fwhm_ns * NS), q.weight) for q in p.pairs
                ),
                n_repetitions=p.n_repetitions,
                pair_spacing=p.pair_spacing_us * US,
                wait_before_storage=p.wait_before_storage_us * US,
            )
    mat = s.material
    tr = s.trials
    if tr.total is not None:
        plan = TrialPlan(
            n_trials=tr.per_sequence,
            trial_rate=tr.trial_rate_khz * KHZ,
            sequence_rate=tr.sequence_rate_hz,
            n_sequences=math.ceil(tr.total / tr.per_sequence),
        )
    else:
        plan = TrialPlan(tr.per_sequence, tr.trial_rate_khz * KHZ, tr.sequence_rate_hz, tr.n_sequences or 1)
    return ExperimentConfig(
        input_pulses=tuple(PulseSpec(p.center_ns * NS, p.fwhm_ns * NS, p.nbar, p.phase_rad) for p in s.pulses),
        combs=combs,
        comb_weights=weights,
        preparation=prep,
        envelope_fwhm=None if m is None or m.envelope_fwhm_mhz is None else m.envelope_fwhm_mhz * MHZ,
        tooth_floor_fwhm=1e6 if m is None else m.tooth_floor_fwhm_mhz * MHZ,
        material=MaterialParams(
            T1_excited=mat.t1_us * US,
            T2_optical=mat.t2_us * US,
            TZ_spin=mat.tz_ms * MS,
            inhom_fwhm=mat.inhom_fwhm_ghz * GHZ,
            d_max=mat.d_max,
            branching_to_aux=mat.branching_to_aux,
            shf_splitting=mat.shf_splitting_mhz * MHZ,
            shf_weight=mat.shf_weight,
        ),
        grid=FrequencyGrid(s.frequency_grid.span_mhz * MHZ, s.frequency_grid.n_points),
        time_grid=TimeGrid(s.time_grid.t0_ns * NS, s.time_grid.dt_ns * NS, s.time_grid.n_samples),
        include_dispersion=True if m is None else m.include_dispersion,
        control_depth=3.9 if m is None else m.control_depth,
        detector=DetectorModel(
            eta_d=s.detector.eta_d,
            eta_t=s.detector.eta_t,
            dark_rate=s.detector.dark_rate_hz,
            bin_width=s.detector.bin_width_ns * NS,
        ),
        plan=plan,
        analysis_windows=tuple((w.start_ns * NS, w.end_ns * NS, w.label) for w in s.analysis_windows),
        master_seed=s.seed,
        workers=s.workers,
    )


def _check_units(s: Scenario) -> list:
    problems = []
    ratio = s.detector.bin_width_ns / s.time_grid.dt_ns
    if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
        problems.append(
            {
                "key": "detector.bin_width_ns",
                "message": f"bin width {s.detector.bin_width_ns:g} ns must be a whole multiple of time_grid.dt_ns "
                f"({s.time_grid.dt_ns:g} ns)",
            }
        )
    nyquist = 0.5 / (s.time_grid.dt_ns * NS) / MHZ
    if s.frequency_grid.span_mhz / 2 > nyquist:
        problems.append(
            {
                "key": "frequency_grid.span_mhz",
                "message": f"half-span {s.frequency_grid.span_mhz / 2:g} MHz exceeds the time-grid Nyquist "
                f"frequency {nyquist:g} MHz",
            }
        )
    return problems


def load_scenario_text(text: str, source: str = "", seed: int | None = None, workers: int | None = None) -> LoadedScenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([{"key": "", "message": f"not valid YAML: {exc}"}], source) from None
    if raw is None:
        keys = ", ".join(_required_keys())
        raise ScenarioError([{"key": "", "message": f"scenario is empty; required keys: {keys}"}], source)
    if not isinstance(raw, dict):
        raise ScenarioError([{"key": "", "message": "scenario must be a mapping of keys to values"}], source)
    if "version" in raw and raw["version"] != SCHEMA_VERSION:
        raise ScenarioError(
            [{"key": "version", "message": f"unsupported version {raw['version']!r}; expected {SCHEMA_VERSION}"}], source
        )
    if seed is not None:
        raw = {**raw, "seed": seed}
    if workers is not None:
        raw = {**raw, "workers": workers}
    try:
        s = Scenario.model_validate(raw)
    except ValidationError as err:
        raise ScenarioError(_problems(err), source) from None
    try:
        params = _PARAMS[s.kind].model_validate(s.experiment)
    except ValidationError as err:
        raise ScenarioError(_problems(err, "experiment"), source) from None

    problems = _check_units(s)
    if problems:
        raise ScenarioError(problems, source)
    try:
        cfg = _build_config(s)
    except (ValueError, TypeError) as exc:
        raise ScenarioError([{"key": "", "message": str(exc)}], source) from None
    return LoadedScenario(s, cfg, s.kind, params, source)


def parse_scenario(path, seed: int | None = None, workers: int | None = None) -> LoadedScenario:
    """Read and validate a scenario file; ``seed``/``workers`` override the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([{"key": "", "message": f"cannot read scenario file: {exc.strerror or exc}"}], str(path)) from None
    return load_scenario_text(text, str(path), seed=seed, workers=workers)


def list_presets() -> dict:
    """Preset name -> one-line description."""
    out = {}
    for entry in sorted(resources.files("afcsim.presets").iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            data = yaml.safe_load(entry.read_text()) or {}
            out[entry.name[: -len(".yaml")]] = str(data.get("description", "")).strip()
    return out


def preset_path(name: str) -> Path:
    entry = resources.files("afcsim.presets") / f"{name}.yaml"
    if not entry.is_file():
        raise ScenarioError([{"key": "", "message": f"no preset named {name!r}; try 'afc-sim presets list'"}], name)
    return Path(str(entry))
