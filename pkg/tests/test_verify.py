import pytest

from ldrwe.config import PRESETS, preset
from ldrwe.verify import format_report, run_identity_suite


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_identity_suite_holds(name):
    checks = run_identity_suite(preset(name))
    failed = [c.line() for c in checks if not c.passed]
    assert not failed, failed
    assert len({c.name for c in checks}) == len(checks)


def test_report_is_worker_independent(monkeypatch):
    texts = []
    for threads in ("1", "6"):
        monkeypatch.setenv("LDRWE_THREADS", threads)
        lines = []
        format_report(run_identity_suite(preset("symmetric-binary")), lines.append)
        texts.append("\n".join(lines))
    assert texts[0] == texts[1]
