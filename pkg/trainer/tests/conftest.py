import json
import subprocess
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[2]
FIXTURES = REPO / "fixtures"
ADAPTER_CMD = [sys.executable, "-m", "trainer_adapter", "serve"]


def run_adapter(request: dict, timeout: float = 120.0) -> tuple[list[dict], int]:
    """One raw exchange; returns (messages, exit code)."""
    proc = subprocess.run(
        ADAPTER_CMD,
        input=json.dumps(request) + "\n",
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        timeout=timeout,
    )
    messages = [json.loads(line) for line in proc.stdout.splitlines() if line]
    return messages, proc.returncode


def evaluate_request_for(doc: dict, **config) -> dict:
    base = {"epochs": 1, "batch_size": 16, "dataset": "blobs:48", "augment": False}
    base.update(config)
    return {"type": "evaluate", "arch": doc, "config": base}


@pytest.fixture(scope="session")
def valid_docs() -> dict[str, dict]:
    docs = {}
    for path in sorted((FIXTURES / "corpus" / "valid").glob("*.json")):
        docs[path.stem] = json.loads(path.read_text(encoding="utf-8"))
    return docs


@pytest.fixture(scope="session")
def invalid_docs() -> dict[str, dict]:
    manifest = json.loads(
        (FIXTURES / "corpus" / "invalid" / "manifest.json").read_text()
    )
    docs = {}
    for name in manifest:
        text = (FIXTURES / "corpus" / "invalid" / name).read_text(encoding="utf-8")
        try:
            docs[name] = json.loads(text)
        except json.JSONDecodeError:
            pass  # the not-even-JSON case is a backend concern, not a trainer one
    return docs
