import numpy as np
import pytest

from gvbridge.gradcheck import numerical_gradient, relative_error

_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    _criteria.setdefault(number, (title, []))[1].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report._criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        ok = outcomes and all(o == "passed" for o in outcomes)
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({len(outcomes)} checks)")


def fd_check(f, inputs, h=1e-5):
    """Largest relative error between tape gradients and central differences.

    ``f(*tensors) -> scalar Tensor``; ``inputs`` are arrays, perturbed in place.
    """
    from gvbridge.autodiff import Tape

    tape = Tape()
    leaves = [tape.watch(x) for x in inputs]
    tape.backward(f(*leaves))
    worst = 0.0
    for x, leaf in zip(inputs, leaves):
        numeric = numerical_gradient(lambda: f(*[_const(a) for a in inputs]).item(), x, h)
        worst = max(worst, relative_error(tape.grad(leaf), numeric))
    return worst


def _const(a):
    from gvbridge.autodiff import Tensor

    return Tensor(a)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
