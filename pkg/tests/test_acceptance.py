"""Acceptance criteria, evaluated on two full ``reproduce_all`` runs with pinned seeds.

Each criterion test prints one ``criterion N: PASS|FAIL`` line, repeated in the
terminal summary.  Criteria 1-7 read the checks recorded in the first run's
manifests; criterion 8 compares the CSV artifacts of both runs byte for byte.
"""

import json
import time

import pytest

from bcslab.experiments import CRITERIA, csv_digests, reproduce_all

RUNTIME_BUDGET_S = 15 * 60


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    first_dir = tmp_path_factory.mktemp("reproduce_a")
    second_dir = tmp_path_factory.mktemp("reproduce_b")
    t0 = time.perf_counter()
    first = reproduce_all(first_dir)
    first_runtime = time.perf_counter() - t0
    second = reproduce_all(second_dir)
    return {"first": first, "second": second, "dirs": (first_dir, second_dir), "runtime": first_runtime}


def failing_checks(root, criterion):
    out = []
    for manifest in sorted(root.glob("*/manifest.json")):
        for chk in json.loads(manifest.read_text())["checks"]:
            if chk["criterion"] == criterion and not chk["passed"]:
                out.append(f"{manifest.parent.name}.{chk['name']}={chk['value']:.4g} (need {chk['threshold']})")
    return out


def report(log, criterion, ok, detail=""):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}" + (f"  {detail}" if detail else "")
    log.append(line)
    print(line)
    return ok


@pytest.mark.parametrize("criterion", [c for c in sorted(CRITERIA) if CRITERIA[c] != "reproduce-all"])
def test_criterion(runs, acceptance_log, criterion):
    status = runs["first"]["criteria"]
    assert str(criterion) in status, f"no check tagged with criterion {criterion}"
    failures = failing_checks(runs["dirs"][0], criterion)
    ok = report(acceptance_log, criterion, status[str(criterion)], "; ".join(failures))
    assert ok, failures


def test_criterion_8_determinism(runs, acceptance_log):
    a, b = (csv_digests(d) for d in runs["dirs"])
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    complete = runs["first"]["complete"] and runs["second"]["complete"]
    in_budget = runs["runtime"] <= RUNTIME_BUDGET_S
    ok = complete and bool(a) and not differing and in_budget
    detail = f"{len(a)} csv files, {len(differing)} differ, first run {runs['runtime']:.0f} s"
    assert report(acceptance_log, 8, ok, detail), differing
