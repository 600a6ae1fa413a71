import os

from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Filled by tests/test_acceptance.py: criterion id -> (passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'} {detail}")
