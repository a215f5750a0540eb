"""Configuration tree: JSON in, validated dataclasses out.

The document has six sections (dmp, afo, autonomy, robots, channel,
scenario); every hyperparameter of the learner, oscillator, allocator,
and simulated robots is settable.  Unknown keys are rejected and every
offending key path is reported at once.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .afo import AfoConfig
from .autonomy import AllocationConfig
from .dmp import PdmpConfig
from .sim import (
    DEFAULT_ARM_F_MAX,
    GainSet,
    RobotParams,
    World,
    WorldConfig,
    damping_for,
    default_arm_gainset,
    default_gainset,
)

ENV_CONFIG_PATH = "TELETEACH_CONFIG"

_DMP_KEYS = {
    "n_basis", "h", "h_rot", "alpha_z", "beta_z", "r", "lambda_fg",
    "demo_filter_cutoff_hz", "reset_gains_on_reteach",
}
_AFO_KEYS = {
    "harmonics", "k_phase", "k_freq", "k_coeff", "omega0", "omega_min",
    "omega_max", "variance_window_s",
}
_AUTONOMY_KEYS = {"rho", "epsilon", "lambda_err", "lambda_f", "lambda_m", "error_weights"}
_ROBOT_KEYS = {
    "mass", "inertia", "damping_trans", "damping_rot",
    "k_th", "d_th", "k_th_p", "d_th_p", "k0", "d0",
    "arm_k", "arm_d", "arm_f_max", "scale_tr_gains_with_eta",
    "activation_force_threshold", "err_filter_tau_s",
}
_CHANNEL_KEYS = {"delay_ticks", "drop_prob"}
_SCENARIO_KEYS = {
    "seed", "duration_s", "observe_margin_s", "scripts", "start_pose",
    "telemetry_decimation",
}
_SCRIPT_KEYS = {
    "name", "skill_id", "base_p", "base_q", "trans_amp", "trans_phase",
    "trans_freq_mult", "rot_amp", "rot_phase", "freq_hz", "t_start", "t_stop",
}
_SECTIONS = {
    "dmp": _DMP_KEYS,
    "afo": _AFO_KEYS,
    "autonomy": _AUTONOMY_KEYS,
    "robots": _ROBOT_KEYS,
    "channel": _CHANNEL_KEYS,
    "scenario": _SCENARIO_KEYS,
}


class ConfigError(ValueError):
    """Invalid configuration; ``paths`` names every offending key."""

    def __init__(self, paths: list[str]):
        self.paths = list(paths)
        super().__init__("invalid configuration: " + ", ".join(self.paths))


@dataclass(frozen=True)
class RobotsSection:
    params: RobotParams
    gains_tr: GainSet
    gains_pr_remote: GainSet
    gains_pr_local: GainSet
    arm_gains: GainSet
    arm_f_max: np.ndarray
    scale_tr_gains_with_eta: bool = False
    activation_force_threshold: float = 0.5
    err_filter_tau_s: float = 1.0


@dataclass(frozen=True)
class ChannelSection:
    delay_ticks: int = 0
    drop_prob: float = 0.0


@dataclass(frozen=True)
class ScenarioSection:
    seed: int = 0
    duration_s: float = 60.0
    observe_margin_s: float = 2.0
    scripts: tuple = ()
    start_pose: dict | None = None
    telemetry_decimation: int = 10


@dataclass(frozen=True)
class FullConfig:
    dmp: PdmpConfig
    afo: AfoConfig
    autonomy: AllocationConfig
    robots: RobotsSection
    channel: ChannelSection
    scenario: ScenarioSection
    demo_filter_cutoff_hz: float = 10.0
    reset_gains_on_reteach: bool = True
    raw: dict = field(default_factory=dict)


def _collect_unknown_keys(doc: dict) -> list[str]:
    bad = []
    for section, content in doc.items():
        if section not in _SECTIONS:
            bad.append(section)
            continue
        if not isinstance(content, dict):
            bad.append(section)
            continue
        for key in content:
            if key not in _SECTIONS[section]:
                bad.append(f"{section}.{key}")
        if section == "scenario":
            for i, script in enumerate(content.get("scripts") or []):
                if not isinstance(script, dict):
                    bad.append(f"scenario.scripts[{i}]")
                    continue
                for key in script:
                    if key not in _SCRIPT_KEYS:
                        bad.append(f"scenario.scripts[{i}].{key}")
    return bad


def _vec6(value, default: np.ndarray, path: str, errors: list[str]) -> np.ndarray:
    if value is None:
        return default
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        arr = np.full(6, float(arr))
    if arr.shape != (6,):
        errors.append(path)
        return default
    return arr


def parse_config(doc: dict) -> FullConfig:
    """Validate a configuration document; an empty dict yields all defaults."""
    errors = _collect_unknown_keys(doc)
    if errors:
        raise ConfigError(errors)

    dmp_doc = dict(doc.get("dmp", {}))
    demo_cutoff = dmp_doc.pop("demo_filter_cutoff_hz", 10.0)
    reset_on_reteach = dmp_doc.pop("reset_gains_on_reteach", True)
    afo_doc = dict(doc.get("afo", {}))
    autonomy_doc = dict(doc.get("autonomy", {}))
    if "error_weights" in autonomy_doc:
        autonomy_doc["error_weights"] = tuple(autonomy_doc["error_weights"])
    robots_doc = dict(doc.get("robots", {}))
    channel_doc = dict(doc.get("channel", {}))
    scenario_doc = dict(doc.get("scenario", {}))

    errors = []
    try:
        dmp = PdmpConfig(**dmp_doc)
    except (TypeError, ValueError):
        dmp = None
        errors.append("dmp")
    try:
        afo = AfoConfig(**afo_doc)
    except (TypeError, ValueError):
        afo = None
        errors.append("afo")
    try:
        autonomy = AllocationConfig(**autonomy_doc)
    except (TypeError, ValueError):
        autonomy = None
        errors.append(
            "autonomy" if not autonomy_doc else "autonomy." + next(iter(autonomy_doc))
        )

    try:
        params = RobotParams(
            mass_trans=robots_doc.get("mass", 3.0),
            inertia_rot=robots_doc.get("inertia", 0.05),
            damping_trans=robots_doc.get("damping_trans", 2.0),
            damping_rot=robots_doc.get("damping_rot", 0.05),
        )
    except ValueError:
        params = RobotParams()
        errors.append("robots")

    def gainset(k_key, d_key, default: GainSet) -> GainSet:
        k = _vec6(robots_doc.get(k_key), default.k, f"robots.{k_key}", errors)
        d_raw = robots_doc.get(d_key)
        d = damping_for(k, params) if d_raw is None else _vec6(d_raw, default.d, f"robots.{d_key}", errors)
        try:
            return GainSet(k, d)
        except ValueError:
            errors.append(f"robots.{k_key}")
            return default

    g_default = default_gainset(params)
    arm_default = default_arm_gainset(params)
    robots = RobotsSection(
        params=params,
        gains_tr=gainset("k_th", "d_th", g_default),
        gains_pr_remote=gainset("k_th_p", "d_th_p", g_default),
        gains_pr_local=gainset("k0", "d0", g_default),
        arm_gains=gainset("arm_k", "arm_d", arm_default),
        arm_f_max=_vec6(robots_doc.get("arm_f_max"), DEFAULT_ARM_F_MAX, "robots.arm_f_max", errors),
        scale_tr_gains_with_eta=bool(robots_doc.get("scale_tr_gains_with_eta", False)),
        activation_force_threshold=float(robots_doc.get("activation_force_threshold", 0.5)),
        err_filter_tau_s=float(robots_doc.get("err_filter_tau_s", 1.0)),
    )

    try:
        channel = ChannelSection(
            delay_ticks=int(channel_doc.get("delay_ticks", 0)),
            drop_prob=float(channel_doc.get("drop_prob", 0.0)),
        )
        if channel.delay_ticks < 0 or not 0.0 <= channel.drop_prob < 1.0:
            raise ValueError
    except (TypeError, ValueError):
        channel = ChannelSection()
        errors.append("channel")

    scenario = ScenarioSection(
        seed=int(scenario_doc.get("seed", 0)),
        duration_s=float(scenario_doc.get("duration_s", 60.0)),
        observe_margin_s=float(scenario_doc.get("observe_margin_s", 2.0)),
        scripts=tuple(scenario_doc.get("scripts", ())),
        start_pose=scenario_doc.get("start_pose"),
        telemetry_decimation=int(scenario_doc.get("telemetry_decimation", 10)),
    )
    if scenario.duration_s <= 0 or scenario.telemetry_decimation < 1:
        errors.append("scenario")

    if errors:
        raise ConfigError(errors)
    return FullConfig(
        dmp=dmp,
        afo=afo,
        autonomy=autonomy,
        robots=robots,
        channel=channel,
        scenario=scenario,
        demo_filter_cutoff_hz=float(demo_cutoff),
        reset_gains_on_reteach=bool(reset_on_reteach),
        raw=copy.deepcopy(doc),
    )


def load_config(path: str | None = None) -> FullConfig:
    """Read and validate a JSON config file.

    Falls back to the TELETEACH_CONFIG environment variable, then to all
    defaults when neither is given.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH)
    if path is None:
        return parse_config({})
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(["<root>"])
    return parse_config(doc)


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` pairs on top of a config document."""
    out = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([item])
        dotted, raw_value = item.split("=", 1)
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([dotted])
        node[parts[-1]] = value
    return out


def build_world(cfg: FullConfig, start_pose=None, demo_source=None, collect_telemetry=True) -> World:
    world_cfg = WorldConfig(
        channel_delay_ticks=cfg.channel.delay_ticks,
        channel_drop_prob=cfg.channel.drop_prob,
        seed=cfg.scenario.seed,
        params=cfg.robots.params,
        scale_tr_gains_with_eta=cfg.robots.scale_tr_gains_with_eta,
        demo_filter_cutoff_hz=cfg.demo_filter_cutoff_hz,
        reset_gains_on_reteach=cfg.reset_gains_on_reteach,
        activation_force_threshold=cfg.robots.activation_force_threshold,
        err_filter_tau_s=cfg.robots.err_filter_tau_s,
    )
    return World(
        cfg=world_cfg,
        dmp_cfg=cfg.dmp,
        afo_cfg=cfg.afo,
        alloc_cfg=cfg.autonomy,
        gains_tr=cfg.robots.gains_tr,
        gains_pr_remote=cfg.robots.gains_pr_remote,
        gains_pr_local=cfg.robots.gains_pr_local,
        arm_gains=cfg.robots.arm_gains,
        arm_f_max=cfg.robots.arm_f_max,
        start_pose=start_pose,
        demo_source=demo_source,
        collect_telemetry=collect_telemetry,
    )


def config_hash(cfg: FullConfig) -> str:
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
