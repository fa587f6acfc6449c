import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Record one summary line per acceptance criterion, printed at the end of the session."""
    lines = request.config.stash[_LINES]

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = list(config.stash.get(_LINES, []))
    if lines:
        seen = {int(s.split(":")[0].split()[1]) for s in lines}
        lines += [f"criterion {k:>2}: NOT RUN (skipped or deselected)" for k in range(1, 11) if k not in seen]
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
