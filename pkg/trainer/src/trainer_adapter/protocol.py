"""Wire protocol: one evaluate request per process over stdin/stdout.

Only protocol JSON ever goes to stdout; logs belong on stderr.  The process
exits 0 after `result` and 1 after `error`.
"""

from __future__ import annotations

import json
import sys

from .training import TrainerError, evaluate_request


def _emit(stream, obj: dict) -> None:
    stream.write(json.dumps(obj) + "\n")
    stream.flush()


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    line = stdin.readline()
    if not line.strip():
        _emit(stdout, {"type": "error", "message": "empty request"})
        return 1
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        _emit(stdout, {"type": "error", "message": f"request is not JSON: {exc.msg}"})
        return 1
    if not isinstance(request, dict) or request.get("type") != "evaluate":
        _emit(stdout, {"type": "error",
                       "message": f"unsupported request type {request!r:.80}"})
        return 1

    def on_progress(epoch: int, train_acc: float, val_acc: float) -> None:
        _emit(stdout, {"type": "progress", "epoch": epoch,
                       "train_acc": round(train_acc, 6),
                       "val_acc": round(val_acc, 6)})

    try:
        metrics = evaluate_request(request, on_progress=on_progress)
    except TrainerError as exc:
        _emit(stdout, {"type": "error", "message": str(exc)})
        return 1
    except Exception as exc:  # never leak a traceback onto the protocol stream
        print(f"trainer-adapter internal error: {exc!r}", file=sys.stderr)
        _emit(stdout, {"type": "error", "message": f"internal error: {exc}"})
        return 1

    _emit(stdout, {"type": "result", "metrics": metrics})
    return 0
