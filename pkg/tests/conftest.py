import sys
from contextlib import contextmanager

import pytest


@pytest.fixture
def criterion(request):
    """Context manager tagging a test body with a [criterion-k] verdict line.

    The line is written past pytest's capture so it survives in plain
    ``pytest -v`` output for passing tests too.
    """
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line):
        if capman is not None:
            capman.suspend_global_capture(in_=False)
        try:
            sys.stdout.write(line)
            sys.stdout.flush()
        finally:
            if capman is not None:
                capman.resume_global_capture()

    @contextmanager
    def tag(k):
        verdict = "PASS"
        try:
            yield
        except BaseException:
            verdict = "FAIL"
            raise
        finally:
            emit(f"\n[criterion-{k}] {verdict}\n")

    return tag
