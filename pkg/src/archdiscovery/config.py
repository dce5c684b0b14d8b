"""Config file handling: TOML or JSON, auto-detected by extension.

Sections: [task], [criteria], [scoring], [loop], [backend], [power],
[trainer].  Criteria keys use the metric symbols verbatim (pa1, ta1, ...,
ot, ut).  CLI flag overrides are merged on top of file values before any
object is constructed, and the merged result is what gets echoed into the
trajectory header.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import BackendConfig, TaskSpec
from .evaluator import EvalConfig
from .loop import ConfigError, LoopConfig
from .metrics import DEFAULT_THRESHOLDS, UserCriteria, load_preset
from .scoring import PowerProfile, ScoringWeights, default_weights

_CRITERIA_KEYS = ("pa1", "pa2", "pe1", "pe2", "pf",
                  "ta1", "ta2", "te1", "te2", "tf", "ot", "ut")


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            return json.loads(path.read_text(encoding="utf-8"))
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def criteria_from_dict(section: dict) -> UserCriteria:
    unknown = sorted(set(section) - set(_CRITERIA_KEYS))
    if unknown:
        raise ConfigError(f"unknown [criteria] keys: {', '.join(unknown)}")
    values = dict(DEFAULT_THRESHOLDS)
    values.update({k: 0.0 for k in ("pa1", "pa2", "pe1", "pe2", "pf")})
    values.update(section)
    try:
        return UserCriteria(**{k: float(v) for k, v in values.items()})
    except ValueError as exc:
        raise ConfigError(f"invalid [criteria]: {exc}") from exc


def criteria_to_dict(c: UserCriteria) -> dict:
    return {k: getattr(c, k) for k in _CRITERIA_KEYS}


def weights_from_dict(section: dict, base: ScoringWeights | None = None) -> ScoringWeights:
    """Each key overrides individually; absent keys keep the derived default."""
    unknown = sorted(set(section) - {"aw", "fw", "ew"})
    if unknown:
        raise ConfigError(f"unknown [scoring] keys: {', '.join(unknown)}")
    defaults = base or ScoringWeights(0.0, 0.0, 0.0)
    return ScoringWeights(
        aw=float(section.get("aw", defaults.aw)),
        fw=float(section.get("fw", defaults.fw)),
        ew=float(section.get("ew", defaults.ew)),
    )


def _power_from_dict(section: dict) -> PowerProfile:
    try:
        return PowerProfile(
            cpu_watts=float(section.get("cpu_watts", 100.0)),
            ram_watts=float(section.get("ram_watts", 50.0)),
            gpu_watts=float(section.get("gpu_watts", 300.0)),
            gpu_count=int(section.get("gpu_count", 1)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [power]: {exc}") from exc


def _task_from_dict(section: dict) -> TaskSpec:
    shape = section.get("input_shape", [32, 32, 3])
    if not (isinstance(shape, list) and len(shape) == 3):
        raise ConfigError("task.input_shape must be [H, W, C]")
    return TaskSpec(
        dataset=str(section.get("dataset", "cifar10")),
        input_shape=tuple(int(d) for d in shape),
        num_classes=int(section.get("num_classes", 10)),
        constraints=str(section.get("constraints", "")),
    )


def criteria_and_weights(
    raw: dict, preset: int | None = None
) -> tuple[UserCriteria, ScoringWeights]:
    """Just the scoring inputs; used where no backend/loop is involved."""
    if "criteria" in raw:
        criteria = criteria_from_dict(raw["criteria"])
    elif preset is not None:
        criteria = load_preset(preset)
    else:
        raise ConfigError("no [criteria] section and no preset selected")
    weights = weights_from_dict(raw.get("scoring", {}), base=default_weights(criteria))
    return criteria, weights


def build_setup(
    raw: dict, preset: int | None = None
) -> tuple[LoopConfig, TaskSpec, dict]:
    """Construct the runtime objects plus the echoable effective snapshot.

    `raw` is the merged file-plus-overrides dict; `preset` fills [criteria]
    when the section is absent.
    """
    criteria, weights = criteria_and_weights(raw, preset)
    power = _power_from_dict(raw.get("power", {}))
    task = _task_from_dict(raw.get("task", {}))

    backend_raw = dict(raw.get("backend", {}))
    kind = backend_raw.get("kind", "scripted")
    try:
        backend = BackendConfig(
            kind=kind,
            endpoint=backend_raw.get("endpoint"),
            model=backend_raw.get("model"),
            auth_env=backend_raw.get("auth_env"),
            temperature=float(backend_raw.get("temperature", 0.0)),
            timeout_s=float(backend_raw.get("timeout_s", 120.0)),
            max_retries=int(backend_raw.get("max_retries", 0)),
            script=backend_raw.get("script"),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [backend]: {exc}") from exc

    trainer_raw = dict(raw.get("trainer", {}))
    try:
        eval_cfg = EvalConfig(
            mode=trainer_raw.get("mode", "surrogate"),
            epochs=int(trainer_raw.get("epochs", 20)),
            batch_size=int(trainer_raw.get("batch_size", 512)),
            dataset=str(trainer_raw.get("dataset", task.dataset)),
            augment=bool(trainer_raw.get("augment", False)),
            adapter_cmd=trainer_raw.get("command"),
            power=power,
            timeout_s=float(trainer_raw.get("timeout_s", 3600.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [trainer]: {exc}") from exc

    loop_raw = dict(raw.get("loop", {}))
    budget = loop_raw.get("budget_hours")
    target = loop_raw.get("target_cm")
    seed = loop_raw.get("seed")
    cfg = LoopConfig(
        criteria=criteria,
        backend=backend,
        eval=eval_cfg,
        weights=weights,
        max_iterations=int(loop_raw.get("max_iterations", 30)),
        budget_hours=float(budget) if budget is not None else None,
        target_cm=float(target) if target is not None else None,
        seed=int(seed) if seed is not None else None,
        out_dir=Path(loop_raw.get("out_dir", "runs")),
        run_id=loop_raw.get("run_id"),
    )
    return cfg, task, snapshot_config(cfg, task)


def snapshot_config(cfg: LoopConfig, task: TaskSpec) -> dict:
    """The effective settings echoed into a trajectory header."""
    return {
        "task": {
            "dataset": task.dataset,
            "input_shape": list(task.input_shape),
            "num_classes": task.num_classes,
            "constraints": task.constraints,
        },
        "criteria": criteria_to_dict(cfg.criteria),
        "scoring": {
            "aw": cfg.resolved_weights().aw,
            "fw": cfg.resolved_weights().fw,
            "ew": cfg.resolved_weights().ew,
        },
        "loop": {
            "max_iterations": cfg.max_iterations,
            "budget_hours": cfg.budget_hours,
            "target_cm": cfg.target_cm,
            "seed": cfg.seed,
            "out_dir": str(cfg.out_dir),
        },
        "backend": {
            "kind": cfg.backend.kind,
            "endpoint": cfg.backend.endpoint,
            "model": cfg.backend.model,
            "auth_env": cfg.backend.auth_env,
            "temperature": cfg.backend.temperature,
            "timeout_s": cfg.backend.timeout_s,
            "max_retries": cfg.backend.max_retries,
            "script": cfg.backend.script,
        },
        "power": {
            "cpu_watts": cfg.eval.power.cpu_watts,
            "ram_watts": cfg.eval.power.ram_watts,
            "gpu_watts": cfg.eval.power.gpu_watts,
            "gpu_count": cfg.eval.power.gpu_count,
        },
        "trainer": {
            "mode": cfg.eval.mode,
            "epochs": cfg.eval.epochs,
            "batch_size": cfg.eval.batch_size,
            "dataset": cfg.eval.dataset,
            "augment": cfg.eval.augment,
            "command": list(cfg.eval.command()) or None,
            "timeout_s": cfg.eval.timeout_s,
        },
    }
