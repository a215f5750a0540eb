"""Command-line entry point.

Subcommands: ``sensitivity`` (hyperparameter sweep tables), ``scenario``
(scripted tele-teaching runs), ``teach-serve`` (interactive session
server), and ``skill export|import`` (learned-skill files).  Exit codes:
0 success, 1 validation error, 2 runtime divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    FullConfig,
    apply_overrides,
    build_world,
    config_hash,
    load_config,
    parse_config,
)
from .dmp import PdmpConfig, PdmpState, make_state
from .experiments import (
    NAMED_SCRIPTS,
    SensitivityConfig,
    SkillScript,
    run_scenario,
    run_sensitivity,
)
from .geometry import Pose
from .sim import DivergenceError
from .telemetry import SKILL_SCHEMA, csv_text, write_ndjson

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2

SENSITIVITY_FIELDS = ["param", "weight_std", "rms_error_mm"]


def _fail(message: str, code: int = EXIT_VALIDATION) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_merged_config(args) -> FullConfig:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(str(path))
        cfg = load_config(str(path))
    else:
        cfg = load_config()
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"scenario.seed={args.seed}")
    if overrides:
        cfg = parse_config(apply_overrides(cfg.raw, overrides))
    return cfg


def sensitivity_rows_to_csv(rows: list[dict]) -> str:
    out = []
    for row in rows:
        if row.get("diverged"):
            out.append({"param": row["value"], "weight_std": "", "rms_error_mm": ""})
        else:
            out.append(
                {
                    "param": row["value"],
                    "weight_std": row["weight_std"],
                    "rms_error_mm": row["rms_error_mm"],
                }
            )
    return csv_text(out, SENSITIVITY_FIELDS)


def cmd_sensitivity(args) -> int:
    try:
        cfg = _load_merged_config(args)
        values = tuple(float(v) for v in args.values.split(","))
        sweep = SensitivityConfig(
            param=args.param,
            values=values,
            n_basis=cfg.dmp.n_basis,
            fixed_h=cfg.dmp.h,
            fixed_lambda_fg=cfg.dmp.lambda_fg,
        )
    except FileNotFoundError as exc:
        return _fail(f"config file not found: {exc}")
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc))
    rows = run_sensitivity(sweep)
    text = sensitivity_rows_to_csv(rows)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"sensitivity_{args.param}.csv"
    out_path.write_text(text, encoding="utf-8", newline="")
    print(f"wrote {out_path}")
    for row in rows:
        print(
            f"  {args.param}={row['value']}: weight_std="
            f"{row['weight_std']:.4f} rms_error_mm={row['rms_error_mm']:.4f}"
            if not row.get("diverged")
            else f"  {args.param}={row['value']}: diverged"
        )
    return EXIT_OK


def scripts_from_config(cfg: FullConfig) -> list[SkillScript]:
    scripts = []
    for doc in cfg.scenario.scripts:
        doc = dict(doc)
        name = doc.pop("name", None)
        if name is not None:
            if name not in NAMED_SCRIPTS:
                raise ConfigError([f"scenario.scripts.name={name}"])
            base = NAMED_SCRIPTS[name]()
            fields = {k: getattr(base, k) for k in base.__dataclass_fields__}
            fields.update(doc)
            scripts.append(SkillScript(**_tupled(fields)))
        else:
            scripts.append(SkillScript(**_tupled(doc)))
    return scripts


def _tupled(doc: dict) -> dict:
    out = dict(doc)
    for key in ("base_p", "base_q", "trans_amp", "trans_phase", "trans_freq_mult", "rot_amp", "rot_phase"):
        if key in out and out[key] is not None:
            out[key] = tuple(out[key])
    return out


def cmd_scenario(args) -> int:
    try:
        cfg = _load_merged_config(args)
        scripts = scripts_from_config(cfg)
        if not scripts:
            return _fail("scenario.scripts is empty; nothing to run")
        start = None
        if cfg.scenario.start_pose is not None:
            start = Pose(
                np.array(cfg.scenario.start_pose["p"], dtype=float),
                np.array(cfg.scenario.start_pose["q"], dtype=float),
            )
        else:
            start = Pose(np.array(scripts[0].base_p), np.array(scripts[0].base_q))
        world = build_world(cfg, start_pose=start)
    except FileNotFoundError as exc:
        return _fail(f"config file not found: {exc}")
    except (ConfigError, ValueError, KeyError) as exc:
        return _fail(str(exc))

    try:
        result = run_scenario(
            scripts,
            duration_s=cfg.scenario.duration_s,
            world=world,
            observe_margin_s=cfg.scenario.observe_margin_s,
            reinjection_force=2.0 * cfg.autonomy.lambda_f,
        )
    except DivergenceError as exc:
        return _fail(str(exc), EXIT_DIVERGENCE)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = write_ndjson(
        result.telemetry, out_dir / "telemetry.ndjson", cfg.scenario.telemetry_decimation
    )
    summary = {
        "phases": [ph.as_row() for ph in result.phases],
        "config_hash": config_hash(cfg),
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, allow_nan=True) + "\n", encoding="utf-8"
    )
    skill = skill_to_dict(result.world.pdmp, cfg.dmp, config_hash(cfg))
    (out_dir / "skill.json").write_text(skill_dumps(skill), encoding="utf-8")
    print(f"wrote {out_dir}/telemetry.ndjson ({n} frames), summary.json, skill.json")
    for ph in result.phases:
        print(
            f"  {ph.skill_id}: mu=1 after {ph.periods_to_mu_one:.2f} periods, "
            f"eta=1 after +{ph.periods_mu_to_eta:.2f}, "
            f"tracking {ph.pos_rms_mm:.2f} mm / {ph.rot_rms_rad:.4f} rad"
        )
    return EXIT_OK


def skill_to_dict(state: PdmpState, cfg: PdmpConfig, cfg_hash: str) -> dict:
    return {
        "schema": SKILL_SCHEMA,
        "n_basis": cfg.n_basis,
        "h": cfg.h,
        "h_rot": cfg.h_rot,
        "alpha_z": cfg.alpha_z,
        "beta_z": cfg.beta_z,
        "r": cfg.r,
        "lambda_fg": cfg.lambda_fg,
        "omega": state.omega,
        "goal": {"p": list(state.g_z.p), "q": list(state.g_z.q)},
        "weights": [list(row) for row in state.W],
        "config_hash": cfg_hash,
    }


def skill_dumps(doc: dict) -> str:
    return json.dumps(doc, separators=(",", ":")) + "\n"


def skill_from_dict(doc: dict) -> tuple[PdmpState, PdmpConfig]:
    if doc.get("schema") != SKILL_SCHEMA:
        raise ValueError(f"unsupported skill schema: {doc.get('schema')!r}")
    cfg = PdmpConfig(
        n_basis=int(doc["n_basis"]),
        h=float(doc["h"]),
        h_rot=None if doc.get("h_rot") is None else float(doc["h_rot"]),
        alpha_z=float(doc["alpha_z"]),
        beta_z=float(doc["beta_z"]),
        r=float(doc["r"]),
        lambda_fg=float(doc["lambda_fg"]),
    )
    goal = Pose(np.array(doc["goal"]["p"], dtype=float), np.array(doc["goal"]["q"], dtype=float))
    state = make_state(cfg, goal, float(doc["omega"]))
    weights = np.array(doc["weights"], dtype=float)
    if weights.shape != (6, cfg.n_basis):
        raise ValueError(f"weights must be 6x{cfg.n_basis}, got {weights.shape}")
    state.W = weights
    return state, cfg


def cmd_skill(args) -> int:
    if args.action == "export":
        src = Path(args.source) / "skill.json"
        if not src.exists():
            return _fail(f"no skill state at {src} (run a scenario first)")
        try:
            doc = json.loads(src.read_text(encoding="utf-8"))
            skill_from_dict(doc)  # validate before re-emitting
        except (ValueError, KeyError) as exc:
            return _fail(f"invalid skill file {src}: {exc}")
        Path(args.file).write_text(skill_dumps(doc), encoding="utf-8")
        print(f"wrote {args.file}")
        return EXIT_OK
    # import: validate and report
    path = Path(args.file)
    if not path.exists():
        return _fail(f"skill file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        state, cfg = skill_from_dict(doc)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(f"invalid skill file {path}: {exc}")
    print(
        f"skill ok: {cfg.n_basis} basis functions, omega={state.omega:.4f} rad/s "
        f"({state.omega / (2 * math.pi):.3f} Hz), config_hash={doc.get('config_hash', '')[:12]}"
    )
    return EXIT_OK


def cmd_teach_serve(args) -> int:
    try:
        cfg = _load_merged_config(args)
    except FileNotFoundError as exc:
        return _fail(f"config file not found: {exc}")
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc))
    from .service import serve  # imported lazily; pulls in the socket stack

    try:
        serve(port=args.port, cfg=cfg, realtime=not args.turbo)
    except KeyboardInterrupt:
        print("stopped")
    except DivergenceError as exc:
        return _fail(str(exc), EXIT_DIVERGENCE)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleteach",
        description="Simulated tele-teaching of periodic 6-DoF motions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sens = sub.add_parser("sensitivity", help="hyperparameter sweep on the toy signal")
    p_sens.add_argument("--param", required=True, choices=["h", "lambda_fg"])
    p_sens.add_argument("--values", required=True, help="comma-separated sweep values")
    p_sens.add_argument("--config", default=None)
    p_sens.add_argument("--out", default="out")
    p_sens.add_argument("--seed", type=int, default=None)
    p_sens.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sens.set_defaults(func=cmd_sensitivity)

    p_scen = sub.add_parser("scenario", help="run a scripted tele-teaching timeline")
    p_scen.add_argument("--config", required=True)
    p_scen.add_argument("--out", default="out")
    p_scen.add_argument("--seed", type=int, default=None)
    p_scen.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_scen.set_defaults(func=cmd_scenario)

    p_serve = sub.add_parser("teach-serve", help="interactive teaching session server")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--config", default=None)
    p_serve.add_argument("--turbo", action="store_true", help="run faster than real time")
    p_serve.add_argument("--seed", type=int, default=None)
    p_serve.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_serve.set_defaults(func=cmd_teach_serve)

    p_skill = sub.add_parser("skill", help="export or import learned-skill files")
    p_skill.add_argument("action", choices=["export", "import"])
    p_skill.add_argument("file")
    p_skill.add_argument("--from", dest="source", default="out",
                         help="scenario output directory to export from")
    p_skill.set_defaults(func=cmd_skill)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract wants 1
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
