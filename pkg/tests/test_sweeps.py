import time

import pytest

from coshflows.errors import BudgetExceededError, InvalidArgumentError
from coshflows.sweeps import THREADS_ENV, Deadline, ErrorTable, format_number, run_sweep, thread_count


@pytest.mark.parametrize(
    "value, text",
    [(True, "true"), (3, "3"), (0.1, "0.1"), (1e-300, "1e-300"), (float("nan"), "nan"), ("SG", "SG")],
)
def test_format_number(value, text):
    assert format_number(value) == text


def test_error_table_csv():
    table = ErrorTable(columns=("eps", "sup_error", "ok"), rows=((0.1, 0.25, True), (0.01, 0.025, False)))
    assert table.to_csv() == "eps,sup_error,ok\n0.1,0.25,true\n0.01,0.025,false\n"
    assert table.column("sup_error") == [0.25, 0.025]


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert thread_count() == 4
    assert thread_count(2) == 2
    monkeypatch.setenv(THREADS_ENV, "0")
    assert thread_count() == 1
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(InvalidArgumentError):
        thread_count()


@pytest.mark.parametrize("threads", [1, 3])
def test_run_sweep_keeps_point_order(threads):
    results = run_sweep(lambda x: x * x, [3, 1, 2], threads=threads)
    assert [value for value, _ in results] == [9, 1, 4]
    assert all(runtime >= 0 for _, runtime in results)


def test_deadline_stops_the_sweep():
    deadline = Deadline(0.0)
    time.sleep(0.01)
    with pytest.raises(BudgetExceededError):
        run_sweep(lambda x: x, [1, 2], threads=1, deadline=deadline)


def test_unbounded_deadline():
    Deadline(None).check()
