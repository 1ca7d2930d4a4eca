"""Experiment configuration: strict YAML schema with documented defaults.

Unknown keys are rejected with their full path, out-of-range values name the
field and the accepted range, and duplicate keys are parse errors with their
location.  An empty file yields the default experiment: three sensors, the
stock link parameters (wireless budget 100 blocks at 240 bits/s, wire at
10^4 bytes/s, threshold 11.5 dB, spread 2 dB, initial backlog 10^4 bytes)
and a calibrated system gain hitting a 4e-7 bit error rate at 100 m.

Sizes are configured in bytes where customary and converted to bits
internally; the wireless block rate is configured in bits/s.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import yaml

from .bnb import BnbConfig
from .horizon import TerminalCost
from .linkmodel import LinkParams, RadioParams, SensorSpec, calibrate_gain
from .relaxation import RelaxConfig
from .simulate import DISTRIBUTIONS, LOSS_MODES, Scenario, TrafficSpec

OUTPUT_DIR_ENV = "HETSCHED_OUT"
ORACLE_VAR_LIMIT = 12


class ConfigError(Exception):
    """Base class for configuration rejections."""


class MissingFileError(ConfigError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.col = col


class UnknownKeyError(ConfigError):
    def __init__(self, key_path: str):
        super().__init__(f"unknown configuration key: {key_path}")
        self.key_path = key_path


class RangeError(ConfigError):
    def __init__(self, field_path: str, accepted: str, got):
        super().__init__(f"{field_path} must be {accepted}, got {got!r}")
        self.field_path = field_path
        self.accepted = accepted


@dataclass(frozen=True)
class RadioConfig:
    tx_power_db: float = 20.0
    gain_db: float | None = None  # None: calibrated from target_ber
    noise_db: float = 1.0
    ref_distance_m: float = 1.0
    distance_m: float = 100.0
    pathloss_exp: float = 2.0
    snr_threshold_db: float = 11.5
    sigma_db: float = 2.0
    target_ber: float = 4e-7
    calibration_distance_m: float = 100.0


@dataclass(frozen=True)
class ScenarioConfig:
    sensor_count: int = 3
    delay_bound_s: tuple[float, ...] = (2.0,)
    min_success_prob: tuple[float, ...] = (0.98,)
    mean_rate_bytes_per_s: float = 200.0
    traffic_distribution: str = "constant"
    traffic_spread: float = 0.5
    duration_steps: int = 100
    dt_s: float = 1.0
    seed: int = 42
    loss_mode: str = "expected"
    initial_depth_bytes: float = 1e4
    buffer_capacity_bytes: float = 1.25e5
    plc_rate_bytes_per_s: float = 1e4
    rb_rate_bits_per_s: float = 240.0
    rb_budget: float = 100.0
    radio: RadioConfig = field(default_factory=RadioConfig)


@dataclass(frozen=True)
class SolverConfig:
    kkt_tol: float = 1e-6
    epsilon: float = 0.5
    node_limit: int = 100_000
    gap_tol: float = 1e-6
    horizon_T: int = 5
    terminal_weight: float = 1.0
    terminal_alpha: float | None = None  # None: weight * capacity (set inactive)
    literal_dive: bool = False


@dataclass(frozen=True)
class OracleConfig:
    sensors: int = 3
    horizon: int = 4
    instances: int = 200
    gradient_instances: int = 100
    seed: int = 7


@dataclass(frozen=True)
class OutputConfig:
    directory: str | None = None  # None: $HETSCHED_OUT or ./results
    plots: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def output_dir(self, override: str | None = None) -> str:
        if override:
            return override
        if self.output.directory:
            return self.output.directory
        return os.environ.get(OUTPUT_DIR_ENV, "results")

    def to_dict(self) -> dict:
        def encode(obj):
            if dataclasses.is_dataclass(obj):
                return {
                    f.name: encode(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)
                }
            if isinstance(obj, tuple):
                return [encode(v) for v in obj]
            return obj

        return encode(self)

    def build_radio(self) -> RadioParams:
        rc = self.scenario.radio
        base = RadioParams(
            tx_power_db=rc.tx_power_db,
            gain_db=0.0,
            noise_db=rc.noise_db,
            ref_distance_m=rc.ref_distance_m,
            distance_m=rc.distance_m,
            pathloss_exp=rc.pathloss_exp,
            snr_threshold_db=rc.snr_threshold_db,
            sigma_db=rc.sigma_db,
        )
        gain = rc.gain_db
        if gain is None:
            gain = calibrate_gain(rc.target_ber, rc.calibration_distance_m, base)
        return dataclasses.replace(base, gain_db=gain)

    def build_scenario(
        self,
        seed: int | None = None,
        mean_rate_bytes_per_s: float | None = None,
    ) -> Scenario:
        sc = self.scenario
        sv = self.solver
        link = LinkParams(
            plc_rate_bps=sc.plc_rate_bytes_per_s * 8.0,
            rb_rate_bps=sc.rb_rate_bits_per_s,
            rb_budget=sc.rb_budget,
            radio=self.build_radio(),
        )
        bounds = _broadcast(sc.delay_bound_s, sc.sensor_count)
        floors = _broadcast(sc.min_success_prob, sc.sensor_count)
        sensors = tuple(
            SensorSpec(id=i, delay_bound_s=bounds[i], min_success_prob=floors[i])
            for i in range(sc.sensor_count)
        )
        capacity_bits = sc.buffer_capacity_bytes * 8.0
        alpha = sv.terminal_alpha
        if alpha is None:
            alpha = max(sv.terminal_weight * capacity_bits, 1.0)
        rate = (
            sc.mean_rate_bytes_per_s
            if mean_rate_bytes_per_s is None
            else mean_rate_bytes_per_s
        )
        traffic = TrafficSpec(
            mean_rate_bytes_per_s=rate,
            distribution=sc.traffic_distribution,
            spread=sc.traffic_spread,
            n_sensors=sc.sensor_count,
            duration_steps=sc.duration_steps,
            dt_s=sc.dt_s,
        )
        return Scenario(
            sensors=sensors,
            link=link,
            traffic=traffic,
            duration_steps=sc.duration_steps,
            dt_s=sc.dt_s,
            seed=sc.seed if seed is None else seed,
            loss_mode=sc.loss_mode,
            initial_depth_bits=sc.initial_depth_bytes * 8.0,
            capacity_bits=capacity_bits,
            horizon_T=sv.horizon_T,
            terminal=TerminalCost(weight=sv.terminal_weight, alpha=alpha),
            relax_cfg=RelaxConfig(kkt_tol=sv.kkt_tol),
            bnb_cfg=BnbConfig(
                epsilon=sv.epsilon,
                node_limit=sv.node_limit,
                gap_tol=sv.gap_tol,
                literal_dive=sv.literal_dive,
            ),
        )


def _broadcast(values: tuple[float, ...], count: int) -> tuple[float, ...]:
    if len(values) == 1:
        return values * count
    return values


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ConfigParseError(
                f"duplicate key {key!r}", mark.line + 1, mark.column + 1
            )
        seen[key] = loader.construct_object(value_node, deep=deep)
    return seen


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def _require(cond: bool, path: str, accepted: str, got):
    if not cond:
        raise RangeError(path, accepted, got)


def _num(value, path, accepted="a number"):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RangeError(path, accepted, value)
    return float(value)


def _intval(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise RangeError(path, "an integer", value)
    return value


def _take_section(data: dict, name: str) -> dict:
    section = data.pop(name, None)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise RangeError(name, "a mapping of keys to values", section)
    return section


def _reject_unknown(section: dict, prefix: str):
    if section:
        key = sorted(str(k) for k in section)[0]
        path = f"{prefix}.{key}" if prefix else key
        raise UnknownKeyError(path)


def _bound_list(raw, path) -> tuple[float, ...]:
    values = raw if isinstance(raw, list) else [raw]
    out = []
    for idx, v in enumerate(values):
        out.append(_num(v, f"{path}[{idx}]" if isinstance(raw, list) else path))
    return tuple(out)


def _parse_radio(section: dict) -> RadioConfig:
    d = RadioConfig()
    out = {}
    for key in (
        "tx_power_db", "noise_db", "ref_distance_m", "distance_m",
        "pathloss_exp", "snr_threshold_db", "sigma_db", "target_ber",
        "calibration_distance_m",
    ):
        if key in section:
            out[key] = _num(section.pop(key), f"scenario.radio.{key}")
    if "gain_db" in section:
        raw = section.pop("gain_db")
        out["gain_db"] = None if raw is None else _num(raw, "scenario.radio.gain_db")
    _reject_unknown(section, "scenario.radio")
    cfg = dataclasses.replace(d, **out)
    _require(cfg.ref_distance_m > 0, "scenario.radio.ref_distance_m", "> 0", cfg.ref_distance_m)
    _require(
        cfg.distance_m >= cfg.ref_distance_m,
        "scenario.radio.distance_m", ">= ref_distance_m", cfg.distance_m,
    )
    _require(cfg.pathloss_exp > 0, "scenario.radio.pathloss_exp", "> 0", cfg.pathloss_exp)
    _require(cfg.sigma_db > 0, "scenario.radio.sigma_db", "> 0", cfg.sigma_db)
    _require(0 < cfg.target_ber < 0.5, "scenario.radio.target_ber", "in (0, 0.5)", cfg.target_ber)
    _require(
        cfg.calibration_distance_m >= cfg.ref_distance_m,
        "scenario.radio.calibration_distance_m", ">= ref_distance_m",
        cfg.calibration_distance_m,
    )
    return cfg


def _parse_scenario(section: dict) -> ScenarioConfig:
    out = {}
    if "sensor_count" in section:
        out["sensor_count"] = _intval(section.pop("sensor_count"), "scenario.sensor_count")
    if "delay_bound_s" in section:
        out["delay_bound_s"] = _bound_list(section.pop("delay_bound_s"), "scenario.delay_bound_s")
    if "min_success_prob" in section:
        out["min_success_prob"] = _bound_list(
            section.pop("min_success_prob"), "scenario.min_success_prob"
        )
    for key in (
        "mean_rate_bytes_per_s", "traffic_spread", "dt_s", "initial_depth_bytes",
        "buffer_capacity_bytes", "plc_rate_bytes_per_s", "rb_rate_bits_per_s",
        "rb_budget",
    ):
        if key in section:
            out[key] = _num(section.pop(key), f"scenario.{key}")
    for key in ("duration_steps", "seed"):
        if key in section:
            out[key] = _intval(section.pop(key), f"scenario.{key}")
    for key in ("traffic_distribution", "loss_mode"):
        if key in section:
            val = section.pop(key)
            if not isinstance(val, str):
                raise RangeError(f"scenario.{key}", "a string", val)
            out[key] = val
    radio = _parse_radio(_take_section(section, "radio"))
    _reject_unknown(section, "scenario")
    cfg = dataclasses.replace(ScenarioConfig(), radio=radio, **out)

    _require(cfg.sensor_count >= 1, "scenario.sensor_count", ">= 1", cfg.sensor_count)
    for name, vals in (("delay_bound_s", cfg.delay_bound_s),
                       ("min_success_prob", cfg.min_success_prob)):
        _require(
            len(vals) in (1, cfg.sensor_count),
            f"scenario.{name}", f"a scalar or a list of length {cfg.sensor_count}",
            list(vals),
        )
    for v in cfg.delay_bound_s:
        _require(v > 0, "scenario.delay_bound_s", "> 0", v)
    for v in cfg.min_success_prob:
        _require(0 <= v <= 1, "scenario.min_success_prob", "in [0, 1]", v)
    _require(cfg.mean_rate_bytes_per_s >= 0, "scenario.mean_rate_bytes_per_s", ">= 0",
             cfg.mean_rate_bytes_per_s)
    _require(cfg.traffic_distribution in DISTRIBUTIONS, "scenario.traffic_distribution",
             f"one of {DISTRIBUTIONS}", cfg.traffic_distribution)
    _require(0 <= cfg.traffic_spread <= 1, "scenario.traffic_spread", "in [0, 1]",
             cfg.traffic_spread)
    _require(cfg.duration_steps >= 1, "scenario.duration_steps", ">= 1", cfg.duration_steps)
    _require(cfg.dt_s > 0, "scenario.dt_s", "> 0", cfg.dt_s)
    _require(0 <= cfg.seed < 2**64, "scenario.seed", "a 64-bit nonnegative integer", cfg.seed)
    _require(cfg.loss_mode in LOSS_MODES, "scenario.loss_mode", f"one of {LOSS_MODES}",
             cfg.loss_mode)
    _require(cfg.initial_depth_bytes >= 0, "scenario.initial_depth_bytes", ">= 0",
             cfg.initial_depth_bytes)
    _require(
        cfg.buffer_capacity_bytes >= cfg.initial_depth_bytes,
        "scenario.buffer_capacity_bytes", ">= initial_depth_bytes",
        cfg.buffer_capacity_bytes,
    )
    _require(cfg.plc_rate_bytes_per_s > 0, "scenario.plc_rate_bytes_per_s", "> 0",
             cfg.plc_rate_bytes_per_s)
    _require(cfg.rb_rate_bits_per_s > 0, "scenario.rb_rate_bits_per_s", "> 0",
             cfg.rb_rate_bits_per_s)
    _require(cfg.rb_budget >= 0, "scenario.rb_budget", ">= 0", cfg.rb_budget)
    return cfg


def _parse_solver(section: dict) -> SolverConfig:
    out = {}
    for key in ("kkt_tol", "epsilon", "gap_tol", "terminal_weight"):
        if key in section:
            out[key] = _num(section.pop(key), f"solver.{key}")
    for key in ("node_limit", "horizon_T"):
        if key in section:
            out[key] = _intval(section.pop(key), f"solver.{key}")
    if "terminal_alpha" in section:
        raw = section.pop("terminal_alpha")
        out["terminal_alpha"] = None if raw is None else _num(raw, "solver.terminal_alpha")
    if "literal_dive" in section:
        raw = section.pop("literal_dive")
        if not isinstance(raw, bool):
            raise RangeError("solver.literal_dive", "a boolean", raw)
        out["literal_dive"] = raw
    _reject_unknown(section, "solver")
    cfg = dataclasses.replace(SolverConfig(), **out)
    _require(cfg.kkt_tol > 0, "solver.kkt_tol", "> 0", cfg.kkt_tol)
    _require(0 < cfg.epsilon < 1, "solver.epsilon", "in (0, 1)", cfg.epsilon)
    _require(cfg.node_limit >= 1, "solver.node_limit", ">= 1", cfg.node_limit)
    _require(cfg.gap_tol >= 0, "solver.gap_tol", ">= 0", cfg.gap_tol)
    _require(cfg.horizon_T >= 1, "solver.horizon_T", ">= 1", cfg.horizon_T)
    _require(cfg.terminal_weight >= 0, "solver.terminal_weight", ">= 0", cfg.terminal_weight)
    if cfg.terminal_alpha is not None:
        _require(cfg.terminal_alpha > 0, "solver.terminal_alpha", "> 0 (or null)",
                 cfg.terminal_alpha)
    return cfg


def _parse_oracle(section: dict) -> OracleConfig:
    out = {}
    for key in ("sensors", "horizon", "instances", "gradient_instances", "seed"):
        if key in section:
            out[key] = _intval(section.pop(key), f"oracle.{key}")
    _reject_unknown(section, "oracle")
    cfg = dataclasses.replace(OracleConfig(), **out)
    _require(cfg.sensors >= 1, "oracle.sensors", ">= 1", cfg.sensors)
    _require(cfg.horizon >= 1, "oracle.horizon", ">= 1", cfg.horizon)
    _require(
        cfg.sensors * cfg.horizon <= ORACLE_VAR_LIMIT,
        "oracle.sensors*horizon", f"<= {ORACLE_VAR_LIMIT} variables",
        cfg.sensors * cfg.horizon,
    )
    _require(cfg.instances >= 1, "oracle.instances", ">= 1", cfg.instances)
    _require(cfg.gradient_instances >= 1, "oracle.gradient_instances", ">= 1",
             cfg.gradient_instances)
    return cfg


def _parse_output(section: dict) -> OutputConfig:
    out = {}
    if "directory" in section:
        raw = section.pop("directory")
        if raw is not None and not isinstance(raw, str):
            raise RangeError("output.directory", "a string or null", raw)
        out["directory"] = raw
    if "plots" in section:
        raw = section.pop("plots")
        if not isinstance(raw, bool):
            raise RangeError("output.plots", "a boolean", raw)
        out["plots"] = raw
    _reject_unknown(section, "output")
    return dataclasses.replace(OutputConfig(), **out)


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        data = yaml.load(text, Loader=_StrictLoader)
    except ConfigParseError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigParseError(
            exc.problem or "invalid YAML",
            None if mark is None else mark.line + 1,
            None if mark is None else mark.column + 1,
        ) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(str(exc)) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a mapping of sections")
    cfg = ExperimentConfig(
        scenario=_parse_scenario(_take_section(data, "scenario")),
        solver=_parse_solver(_take_section(data, "solver")),
        oracle=_parse_oracle(_take_section(data, "oracle")),
        output=_parse_output(_take_section(data, "output")),
    )
    _reject_unknown(data, "")
    return cfg


def parse_config(path: str) -> ExperimentConfig:
    """Load, validate and fully default a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise MissingFileError(f"configuration file not found: {path}") from exc
    except OSError as exc:
        raise MissingFileError(f"cannot read configuration file {path}: {exc}") from exc
    return parse_config_text(text)
