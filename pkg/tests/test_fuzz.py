"""Protocol fuzz suite run against the in-repo stub adapter.

External trainer adapters are held to the same suite (with the full
exchange count) in their own test trees.
"""

import sys
from pathlib import Path

from archdiscovery.testing import fuzz_adapter

STUB = Path(__file__).parent / "stub_adapter.py"


def test_stub_adapter_is_conformant():
    failures = fuzz_adapter([sys.executable, str(STUB), "ok"],
                            n=60, seed=7, timeout_s=30.0, workers=4)
    details = [(f.index, f.violations) for f in failures]
    assert failures == [], details


def test_fuzz_catches_noise_after_result():
    failures = fuzz_adapter([sys.executable, str(STUB), "noise-after-result"],
                            n=8, seed=8, timeout_s=30.0, workers=4)
    assert failures, "noisy stub must be flagged"
    assert any("not JSON" in v or "after terminal" in v
               for f in failures for v in f.violations)


def test_fuzz_catches_junk_lines():
    failures = fuzz_adapter([sys.executable, str(STUB), "junk-line"],
                            n=8, seed=9, timeout_s=30.0, workers=4)
    assert failures
