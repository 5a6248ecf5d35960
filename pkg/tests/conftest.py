from __future__ import annotations

from hypothesis import HealthCheck, settings

# Seeded and repeatable: every run draws the same cases.
settings.register_profile(
    "edskit",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("edskit")


# One line per acceptance criterion in the terminal summary.  Tests opt in by
# recording a "criterion" user property (and optionally "detail").
_ACCEPTANCE: dict[int, tuple[str, bool, float, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    n = props["criterion"]
    _ACCEPTANCE[n] = (props.get("title", ""), report.passed, report.duration, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, secs, detail = _ACCEPTANCE[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({secs:.2f} s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
