import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# verdicts from the acceptance suite, one line per criterion at the end of the run
ACCEPTANCE: dict = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        parts = ACCEPTANCE[key]
        ok = all(p[0] for p in parts)
        detail = "; ".join(d if p else f"{d} [FAIL]" for p, d in parts)
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
