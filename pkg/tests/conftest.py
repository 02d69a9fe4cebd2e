import pytest

from hermwave.harness import ExperimentConfig, run_experiment
from hermwave.hermite_sim import ModelParams
from hermwave.variation import IndexParams

CLT_SEED = 20240601
CLT_REPS = 500

_criteria_lines = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    _criteria_lines.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _criteria_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def clt_config(N, reps=CLT_REPS, H=0.7, q=1, seed=CLT_SEED):
    return ExperimentConfig(ModelParams(q, H), IndexParams(N, 0.6, 0.55, 3), reps, seed)


@pytest.fixture(scope="session")
def q1_clt_n8():
    return run_experiment(clt_config(8))


@pytest.fixture(scope="session")
def q1_clt_n12():
    return run_experiment(clt_config(12))
