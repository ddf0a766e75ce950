import contextlib

import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


class _Record:
    detail = ""


@pytest.fixture
def criterion():
    """``with criterion(n) as rec:`` records PASS/FAIL for acceptance criterion ``n``; set ``rec.detail``."""

    @contextlib.contextmanager
    def run(num: int):
        rec = _Record()
        try:
            yield rec
        except BaseException as exc:
            msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            _CRITERIA[num] = (False, f"{rec.detail}; {msg}" if rec.detail else msg)
            raise
        _CRITERIA[num] = (True, rec.detail)

    return run


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
