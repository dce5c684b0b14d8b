import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    """Collect acceptance outcomes so the summary prints one line each."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    _ACCEPTANCE_RESULTS.append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    from test_acceptance import __dict__ as acceptance_ns

    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid, outcome in _ACCEPTANCE_RESULTS:
        test_name = nodeid.split("::")[-1].split("[")[0]
        func = acceptance_ns.get(test_name)
        doc = (func.__doc__ or test_name).strip().splitlines()[0] if func else test_name
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}: {doc}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def valid_corpus() -> list[tuple[str, str]]:
    """(name, document text) for every valid corpus fixture."""
    files = sorted((FIXTURES / "corpus" / "valid").glob("*.json"))
    return [(p.stem, p.read_text(encoding="utf-8")) for p in files]


@pytest.fixture(scope="session")
def invalid_corpus() -> list[tuple[str, str, str]]:
    """(name, expected error class, document text) per invalid fixture."""
    manifest = json.loads(
        (FIXTURES / "corpus" / "invalid" / "manifest.json").read_text(encoding="utf-8")
    )
    out = []
    for name, expected in manifest.items():
        text = (FIXTURES / "corpus" / "invalid" / name).read_text(encoding="utf-8")
        out.append((name, expected, text))
    return out
