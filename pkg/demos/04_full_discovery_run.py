#!/usr/bin/env python3
"""End-to-end discovery with the scripted backend and surrogate evaluator.

Runs the bundled 30-response script (which includes the classic failure
classes), tracks the best model, then verifies the trajectory by replay.
"""

import tempfile
from pathlib import Path

from archdiscovery.backends import BackendConfig, TaskSpec
from archdiscovery.evaluator import EvalConfig
from archdiscovery.loop import LoopConfig, replay, run_discovery
from archdiscovery.metrics import load_preset

ROOT = Path(__file__).resolve().parents[1]
out_dir = Path(tempfile.mkdtemp(prefix="discovery-demo-"))

cfg = LoopConfig(
    criteria=load_preset(3),
    backend=BackendConfig(kind="scripted",
                          script=str(ROOT / "fixtures" / "runs" / "run30")),
    eval=EvalConfig(mode="surrogate", epochs=20),
    max_iterations=30,
    out_dir=out_dir,
    run_id="demo",
)
task = TaskSpec(dataset="cifar10", input_shape=(32, 32, 3), num_classes=10)

trajectory = run_discovery(cfg, task)
for record in trajectory.records:
    if record.valid:
        mark = " *best*" if record.best else ""
        print(f"iter {record.index:>2}: cm={record.score.cm:+.4f}{mark}")
    else:
        print(f"iter {record.index:>2}: failed ({record.error_type}); "
              "error is fed into the next prompt")

print(f"\nbest: iteration {trajectory.best_index}, "
      f"cm={trajectory.best_score.cm:.4f}, "
      f"params={trajectory.records[trajectory.best_index].eval.params}")
print(f"totals: {trajectory.totals}")

replayed = replay(trajectory.path)
print(f"replay: {len(replayed.records)} records verified, zero divergences")
print(f"files in {out_dir}")
