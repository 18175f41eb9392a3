import pytest

from spinsat.model import PhysicalParams, normalize

T1, T2, OMEGA = 0.740, 0.060, 32.3


@pytest.fixture(scope="session")
def ref_params():
    return PhysicalParams(T1, T2, OMEGA)


@pytest.fixture(scope="session")
def ref_norm(ref_params):
    return normalize(ref_params)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
