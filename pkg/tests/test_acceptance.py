"""Acceptance criteria, one pass/fail line per criterion (run with ``pytest -s`` to see them)."""
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from stackel_lab import shipped, verify

SEED = shipped.default_seed()


@pytest.mark.parametrize("number", sorted(verify.CRITERIA))
def test_criterion(number):
    res = verify.CRITERIA[number](SEED, jobs=1)
    print(res.summary())
    for c in res.failures():
        print(f"    {c.name}: {c.value!r} {c.op} {c.limit!r} fails")
    assert res.passed


def _verify_all(out: Path):
    exe = shutil.which("stackel-lab")
    cmd = [exe] if exe else [sys.executable, "-m", "stackel_lab.cli"]
    return subprocess.run([*cmd, "verify", "all", "--out", str(out)], capture_output=True, text=True)


def test_criterion_8_reproducible(tmp_path):
    a, b = tmp_path / "run1", tmp_path / "run2"
    ra, rb = _verify_all(a), _verify_all(b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    identical = files_a == files_b and all((a / f).read_bytes() == (b / f).read_bytes() for f in files_a)
    ok = ra.returncode == 0 and rb.returncode == 0 and identical and ra.stdout == rb.stdout and bool(files_a)
    print(f"[{'PASS' if ok else 'FAIL'}] 8. reproducibility (exit {ra.returncode}/{rb.returncode}, "
          f"{len(files_a)} files, identical={identical})")
    assert ok
