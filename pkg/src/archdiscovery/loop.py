"""The discovery loop: prompt, generate, validate, evaluate, score, refine.

Each iteration asks the backend for an architecture, validates and evaluates
it, scores it, and derives the next iteration's refinement instructions from
the latest metrics.  The best candidate is tracked by strict score
improvement.  Every iteration is appended to a JSONL trajectory file and
flushed before the next backend call, so an interrupted run leaves a
replayable prefix.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import backends, evaluator, ir, rules, scoring
from .backends import BackendConfig, PreviousAttempt, PromptRecord, TaskSpec
from .evaluator import EvalConfig, EvalResult
from .metrics import MetricsRecord, UserCriteria
from .rules import RefinedCommand
from .scoring import ScoreReport, ScoringWeights, co2_lbs

SCHEMA_VERSION = "discovery-trajectory/1"


class ConfigError(Exception):
    pass


class BackendFatal(Exception):
    """Unrecoverable backend failure; the partial trajectory is preserved."""


class SchemaMismatch(Exception):
    pass


class DivergenceDetected(Exception):
    """Stored scores or best flags disagree with a recomputation."""

    def __init__(self, indices: list[int]):
        super().__init__(f"divergence at iteration(s) {indices}")
        self.indices = indices


@dataclass(frozen=True)
class LoopConfig:
    criteria: UserCriteria
    backend: BackendConfig
    eval: EvalConfig
    weights: ScoringWeights | None = None  # None: derived from criteria
    max_iterations: int = 30
    budget_hours: float | None = None
    target_cm: float | None = None
    seed: int | None = None
    out_dir: Path = Path("runs")
    run_id: str | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations!r}")

    def resolved_weights(self) -> ScoringWeights:
        return self.weights if self.weights is not None else scoring.default_weights(self.criteria)


@dataclass(frozen=True)
class IterationRecord:
    """Everything one iteration produced; exactly one of eval/error is set."""

    index: int
    refined: RefinedCommand
    prompt: PromptRecord
    response: str | None
    valid: bool
    error_type: str | None
    error: str | None
    arch_json: str | None
    eval: EvalResult | None
    score: ScoreReport | None
    best: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "refined": rules.refined_to_json(self.refined),
            "prompt": {
                "system_text": self.prompt.system_text,
                "user_text": self.prompt.user_text,
                "temperature": self.prompt.temperature,
                "iteration": self.prompt.iteration,
            },
            "response": self.response,
            "valid": self.valid,
            "error_type": self.error_type,
            "error": self.error,
            "arch": json.loads(self.arch_json) if self.arch_json else None,
            "eval": _eval_to_dict(self.eval),
            "score": _score_to_dict(self.score),
            "best": self.best,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "IterationRecord":
        prompt = PromptRecord(
            system_text=obj["prompt"]["system_text"],
            user_text=obj["prompt"]["user_text"],
            temperature=obj["prompt"]["temperature"],
            iteration=obj["prompt"]["iteration"],
        )
        arch = obj.get("arch")
        return cls(
            index=obj["index"],
            refined=rules.refined_from_json(obj["refined"]),
            prompt=prompt,
            response=obj.get("response"),
            valid=obj["valid"],
            error_type=obj.get("error_type"),
            error=obj.get("error"),
            arch_json=json.dumps(arch) if arch is not None else None,
            eval=_eval_from_dict(obj.get("eval")),
            score=_score_from_dict(obj.get("score")),
            best=obj["best"],
        )


def _eval_to_dict(result: EvalResult | None) -> dict | None:
    if result is None:
        return None
    return {
        "a1": result.a1, "a2": result.a2,
        "e1_kwh": result.e1_kwh, "e2_kwh": result.e2_kwh,
        "fps": result.fps, "params": result.params,
        "train_hours": result.train_hours, "eval_hours": result.eval_hours,
        "energy_source": result.energy_source,
        "transcript": list(result.transcript),
    }


def _eval_from_dict(obj: dict | None) -> EvalResult | None:
    if obj is None:
        return None
    return EvalResult(
        a1=obj["a1"], a2=obj["a2"], e1_kwh=obj["e1_kwh"], e2_kwh=obj["e2_kwh"],
        fps=obj["fps"], params=obj["params"],
        train_hours=obj["train_hours"], eval_hours=obj["eval_hours"],
        energy_source=obj.get("energy_source", "profile"),
        transcript=tuple(obj.get("transcript", ())),
    )


def _score_to_dict(report: ScoreReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "cm": report.cm, "ta": report.ta, "va": report.va, "nf": report.nf,
        "t_ne": report.t_ne, "v_ne": report.v_ne,
        "aw": report.aw, "fw": report.fw, "ew": report.ew,
    }


def _score_from_dict(obj: dict | None) -> ScoreReport | None:
    if obj is None:
        return None
    return ScoreReport(**obj)


@dataclass
class RunTrajectory:
    """Complete record of one discovery run."""

    run_id: str
    config: dict
    records: list[IterationRecord]
    best_index: int | None
    best_arch: ir.ArchGraph | None
    best_score: ScoreReport | None
    path: Path | None = None

    @property
    def totals(self) -> dict:
        hours = sum(
            r.eval.train_hours + r.eval.eval_hours for r in self.records if r.eval
        )
        kwh = sum(r.eval.e1_kwh + r.eval.e2_kwh for r in self.records if r.eval)
        return {"hours": hours, "kwh_pue": kwh, "co2_lbs": co2_lbs(kwh)}


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

def _new_run_id() -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    return f"run-{stamp}-{uuid.uuid4().hex[:6]}"


def _metrics_line(m: MetricsRecord) -> str:
    return (
        f"a1={m.a1:.4f} a2={m.a2:.4f} fps={m.fps:.1f} "
        f"e1_kwh={m.e1_kwh:.4g} e2_kwh={m.e2_kwh:.4g} params={m.params}"
    )


def _failure_text(exc: Exception) -> str:
    text = f"{type(exc).__name__}: {exc}"
    fragment = getattr(exc, "fragment", None)
    if fragment:
        text += "\nOffending document:\n" + fragment
    return text


def run_discovery(
    cfg: LoopConfig,
    ts: TaskSpec,
    config_snapshot: dict | None = None,
    on_iteration=None,
) -> RunTrajectory:
    """Run the full discovery loop and persist the trajectory.

    `config_snapshot` is echoed into the trajectory header (the CLI passes
    the effective file-plus-overrides settings); `on_iteration` is an
    optional callback fed each IterationRecord as it is written.
    """
    run_id = cfg.run_id or _new_run_id()
    weights = cfg.resolved_weights()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    trajectory_path = cfg.out_dir / f"{run_id}.trajectory.jsonl"
    if trajectory_path.exists():
        raise ConfigError(f"refusing to overwrite existing run {trajectory_path}")
    best_path = cfg.out_dir / f"{run_id}.best.arch.json"

    if config_snapshot is None:
        from .config import snapshot_config  # local import: config builds on loop types

        config_snapshot = snapshot_config(cfg, ts)

    header = {
        "schema": SCHEMA_VERSION,
        "run_id": run_id,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": config_snapshot,
    }

    records: list[IterationRecord] = []
    best_index: int | None = None
    best_arch: ir.ArchGraph | None = None
    best_score: ScoreReport | None = None
    last_metrics: MetricsRecord | None = None
    last_arch_json: str | None = None
    last_error: str | None = None
    started = time.monotonic()

    with trajectory_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.flush()

        for index in range(cfg.max_iterations):
            if last_metrics is None:
                refined: RefinedCommand = []
            else:
                refined = rules.resolve_conflicts(
                    rules.generate_instructions(last_metrics, cfg.criteria)
                )
            prev = None
            if index > 0:
                prev = PreviousAttempt(
                    arch_json=last_arch_json,
                    metrics_line=_metrics_line(last_metrics) if last_metrics else None,
                    error=last_error,
                )
            prompt = backends.build_prompt(
                ts, refined, prev,
                temperature=cfg.backend.temperature, iteration=index,
            )

            # Invalid documents are not retried by default (max_retries 0):
            # the error context rides into the NEXT iteration's prompt.  With
            # max_retries > 0 the same iteration re-prompts with the error
            # before being recorded as failed.  Transport errors never retry.
            response: str | None = None
            failure: Exception | None = None
            graph = None
            for attempt in range(cfg.backend.max_retries + 1):
                try:
                    response = backends.complete(cfg.backend, prompt)
                except (backends.AuthMissing, backends.ScriptExhausted) as exc:
                    raise BackendFatal(str(exc)) from exc
                except backends.BackendError as exc:
                    failure = exc
                    break
                try:
                    graph, _ = backends.extract_arch(response)
                    failure = None
                    break
                except (backends.NoDocumentFound, ir.ArchError) as exc:
                    failure = exc
                    if attempt < cfg.backend.max_retries:
                        prompt = backends.build_prompt(
                            ts, refined,
                            PreviousAttempt(arch_json=last_arch_json,
                                            error=_failure_text(exc)),
                            temperature=cfg.backend.temperature, iteration=index,
                        )

            result: EvalResult | None = None
            if failure is None:
                try:
                    result = evaluator.evaluate(graph, cfg.eval)
                except evaluator.AdapterError as exc:
                    failure = exc

            if failure is None:
                metrics = result.to_metrics()
                score = scoring.combined_effectiveness(metrics, cfg.criteria, weights)
                is_best = best_score is None or score.cm > best_score.cm
                arch_json = ir.serialize_arch(graph, indent=None)
                record = IterationRecord(
                    index=index, refined=refined, prompt=prompt, response=response,
                    valid=True, error_type=None, error=None, arch_json=arch_json,
                    eval=result, score=score, best=is_best,
                )
                last_metrics = metrics
                last_arch_json = arch_json
                last_error = None
                if is_best:
                    best_index = index
                    best_arch = graph
                    best_score = score
                    best_path.write_text(ir.serialize_arch(graph), encoding="utf-8")
            else:
                record = IterationRecord(
                    index=index, refined=refined, prompt=prompt, response=response,
                    valid=False, error_type=type(failure).__name__,
                    error=_failure_text(failure), arch_json=None,
                    eval=None, score=None, best=False,
                )
                last_error = record.error

            records.append(record)
            fh.write(json.dumps(record.to_dict()) + "\n")
            fh.flush()
            if on_iteration is not None:
                on_iteration(record)

            if cfg.target_cm is not None and best_score is not None:
                if best_score.cm >= cfg.target_cm:
                    break
            if cfg.budget_hours is not None:
                if (time.monotonic() - started) / 3600.0 > cfg.budget_hours:
                    break

    return RunTrajectory(
        run_id=run_id, config=config_snapshot, records=records,
        best_index=best_index, best_arch=best_arch, best_score=best_score,
        path=trajectory_path,
    )


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------

def replay(trajectory_path: str | Path) -> RunTrajectory:
    """Recompute every score and best flag from the stored metrics.

    Raises DivergenceDetected when any stored value disagrees with the
    recomputation, which catches scoring-code or config drift.  A torn
    trailing line (interrupted run) is ignored.
    """
    from .config import criteria_from_dict, weights_from_dict

    path = Path(trajectory_path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaMismatch(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"header is not JSON: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("schema") != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"expected schema {SCHEMA_VERSION!r}, got {header.get('schema')!r}"
        )
    config = header.get("config", {})
    try:
        criteria = criteria_from_dict(config["criteria"])
        weights = weights_from_dict(config["scoring"])
    except (KeyError, TypeError) as exc:
        raise SchemaMismatch(f"config snapshot incomplete: {exc}") from exc

    records: list[IterationRecord] = []
    for pos, line in enumerate(lines[1:], start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            if pos == len(lines) - 1:
                break  # torn trailing line from an interrupted run
            raise SchemaMismatch(f"record line {pos} is not JSON")
        try:
            records.append(IterationRecord.from_dict(obj))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"record line {pos}: {exc}") from exc

    divergent: list[int] = []
    best_cm: float | None = None
    best_index: int | None = None
    for record in records:
        if not record.valid or record.eval is None:
            if record.best:
                divergent.append(record.index)
            continue
        recomputed = scoring.combined_effectiveness(
            record.eval.to_metrics(), criteria, weights
        )
        expect_best = best_cm is None or recomputed.cm > best_cm
        if expect_best:
            best_cm = recomputed.cm
            best_index = record.index
        stored = record.score
        if (
            stored is None
            or _score_to_dict(stored) != _score_to_dict(recomputed)
            or record.best is not expect_best
        ):
            divergent.append(record.index)

    if divergent:
        raise DivergenceDetected(divergent)

    best_arch = None
    best_score = None
    if best_index is not None:
        best_record = next(r for r in records if r.index == best_index)
        best_score = best_record.score
        if best_record.arch_json:
            best_arch = ir.parse_arch(best_record.arch_json)

    return RunTrajectory(
        run_id=header.get("run_id", path.stem),
        config=config,
        records=records,
        best_index=best_index,
        best_arch=best_arch,
        best_score=best_score,
        path=path,
    )
