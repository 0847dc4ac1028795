import re

CRITERIA = {
    1: "classical interval spectra",
    2: "Robin interval against the secular equation",
    3: "step data exactness and root harmonic measure",
    4: "Kirchhoff balance and maximum principle",
    5: "energy minimality and orthogonality",
    6: "level-set flux conservation",
    7: "clamped quadratic form decomposition",
    8: "harmonic clamp against constant clamp",
    9: "energy blow-up with uniform convergence",
    10: "built-in verify suite",
}


def pytest_terminal_summary(terminalreporter):
    status = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = re.search(r"test_acceptance\.py::test_c(\d\d)_", getattr(rep, "nodeid", ""))
            if not m or rep.when not in ("call", "setup"):
                continue
            n = int(m.group(1))
            if rep.when == "call" or key != "passed":
                status[n] = status.get(n, True) and key == "passed"
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        if n in status:
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if status[n] else 'FAIL'}  {label}")
