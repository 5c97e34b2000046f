import csv
import json

import pytest

from infgmres.cli import main
from infgmres.experiments import EXPERIMENTS, first_reaching, outlier_count


def test_outlier_count():
    assert outlier_count([5.0, 4.0, 0.5, 0.4, 0.3, 0.2]) == 2
    assert outlier_count([1.0, 0.1, 0.09, 0.08]) == 1


def test_first_reaching():
    assert first_reaching([1.0, 0.1, 0.01], 0.1) == 2
    assert first_reaching([1.0, 0.5], 0.1) is None


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_experiment_cli(tmp_path, name):
    out = tmp_path / name
    assert main(["experiment", "--name", name, "--out", str(out)]) == 0
    results = json.loads((out / "assertions.json").read_text())
    assert results and all(v["passed"] for v in results.values())
    csvs = list(out.glob("*.csv"))
    assert csvs
    for path in csvs:
        rows = list(csv.reader(open(path)))
        assert len(rows) >= 2
        assert all(len(r) == len(rows[0]) for r in rows)
        assert not any("np." in v for r in rows for v in r)
