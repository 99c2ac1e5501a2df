# -*- coding: utf-8 -*-
"""
reproduce.py

Runs every experiment subcommand into runs/<experiment>/results.csv, then runs
the acceptance grader and stores its stdout/stderr in runs/grader/. Each
experiment is one `python -m asndepth` subprocess; a failing experiment is
reported and the driver moves on.
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent
GRADER_PATH = ROOT / "grader" / "grade.py"
RUNS_DIR = ROOT / "runs"

EXPERIMENTS = {
    "noise_exp": ["noise-exp"],
    "sweep_k": ["sweep-k"],
    "sweep_patch": ["sweep-patch"],
    "ablation": ["ablation"],
    "compare": ["compare"],
    "gradcheck": ["gradcheck"],
    "bench": ["bench"],
}


def run_experiment(name: str, argv: list[str], threads: int) -> subprocess.CompletedProcess:
    out_dir = RUNS_DIR / name
    out_dir.mkdir(parents=True, exist_ok=True)
    cmd = [sys.executable, "-m", "asndepth", *argv, "--threads", str(threads), "--out", str(out_dir / "results.csv")]
    proc = subprocess.run(cmd, capture_output=True, text=True, cwd=str(ROOT))
    (out_dir / "stdout.txt").write_text(proc.stdout, encoding="utf-8")
    if proc.stderr:
        (out_dir / "stderr.txt").write_text(proc.stderr, encoding="utf-8")
    return proc


def run_grader() -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, str(GRADER_PATH)],
        capture_output=True, text=True, cwd=str(ROOT)
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=sorted(EXPERIMENTS), default=None)
    ap.add_argument("--skip-grader", action="store_true")
    args = ap.parse_args()

    RUNS_DIR.mkdir(exist_ok=True)
    names = args.only or list(EXPERIMENTS)

    failures = 0
    for i, name in enumerate(names, 1):
        print(f"\n=== Experiment {i}/{len(names)}: {name} ===")
        start = time.perf_counter()
        proc = run_experiment(name, EXPERIMENTS[name], args.threads)
        print(proc.stdout, end="")
        if proc.returncode != 0:
            failures += 1
            print(f"exit code {proc.returncode} (see runs/{name}/stderr.txt)")
        else:
            print(f"done in {time.perf_counter() - start:.1f} s")

    if not args.skip_grader:
        print("\n=== Grader ===")
        grader_dir = RUNS_DIR / "grader"
        grader_dir.mkdir(exist_ok=True)
        proc = run_grader()
        (grader_dir / "grader_stdout.txt").write_text(proc.stdout, encoding="utf-8")
        if proc.stderr:
            (grader_dir / "grader_stderr.txt").write_text(proc.stderr, encoding="utf-8")
        print(proc.stdout, end="")
        failures += proc.returncode != 0

    print(f"\nExperiments: {len(names)}  Failures: {failures}")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
