import subprocess
import sys

import pytest

from rotkld import selftest


def run_cli(*extra):
    return subprocess.run([sys.executable, "-m", "rotkld", "selftest", *extra], capture_output=True, text=True)


@pytest.fixture(scope="module")
def fault_run():
    return run_cli("--inject-fault", "sigma-asymmetry")


def test_fault_is_caught_and_named(fault_run):
    assert fault_run.returncode == 1
    lines = fault_run.stdout.splitlines()
    assert lines[0].startswith("FAIL gaussian-structure")
    assert lines[-1] == "selftest FAILED: first failing property gaussian-structure"


def test_one_line_per_property(fault_run):
    body = fault_run.stdout.splitlines()[:-1]
    assert [line.split(":")[0].split()[1] for line in body] == [name for name, _ in selftest.CHECKS]


def test_fault_hook_restores_original():
    before = selftest.G.box_to_gaussian
    with selftest.inject_fault("sigma-asymmetry"):
        assert selftest.G.box_to_gaussian is not before
    assert selftest.G.box_to_gaussian is before


def test_unknown_fault():
    with pytest.raises(ValueError):
        with selftest.inject_fault("nope"):
            pass


def test_repeated_runs_identical():
    first, second = [], []
    selftest.run(out=first.append)
    selftest.run(out=second.append)
    assert first == second


def test_crashing_check_counts_as_failure(monkeypatch):
    def boom():
        raise RuntimeError("kaput")

    monkeypatch.setattr(selftest, "CHECKS", [("boom", boom)])
    lines = []
    assert selftest.run(out=lines.append) == 1
    assert lines == ["FAIL boom: RuntimeError: kaput", "selftest FAILED: first failing property boom"]
