#!/usr/bin/env python3
"""Independent reference computation for the mini-corpus.

Runs every candidate with plain subprocess calls, classifies each cell,
then enumerates pairwise agreement scores, the selected medoid and the
headline metrics by brute force. Nothing here shares code with the Rust
implementation. Output: golden.json next to this script.
"""

import json
import os
import signal
import subprocess
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
TIMEOUT_S = 1.0
MAX_OUTPUT = 1048576


def normalize(raw):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        return None
    text = text.replace("\r\n", "\n").strip()
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    return text or None


def run_cell(path, stdin):
    proc = subprocess.Popen(
        ["sh", path],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        start_new_session=True,
    )
    try:
        out, _ = proc.communicate(stdin.encode(), timeout=TIMEOUT_S)
    except subprocess.TimeoutExpired:
        os.killpg(proc.pid, signal.SIGKILL)
        proc.communicate()
        return ("Timeout", None)
    if len(out) > MAX_OUTPUT:
        return ("OutputTooLarge", None)
    if proc.returncode != 0:
        return ("RuntimeError", None)
    text = normalize(out)
    if text is None:
        return ("InvalidFormat", None)
    return ("Ok", text)


def load(name):
    with open(HERE / name) as f:
        return [json.loads(line) for line in f if line.strip()]


def main():
    tasks = load("tasks.jsonl")
    cands = load("candidates.jsonl")
    report = {"tasks": {}}
    mean_vals, best_vals, fmv_vals = [], [], []
    with tempfile.TemporaryDirectory() as tmp:
        for task in sorted(tasks, key=lambda t: t["task_id"]):
            rows = sorted(
                (c for c in cands if c["task_id"] == task["task_id"]),
                key=lambda c: c["sample_index"],
            )
            grid = []
            for c in rows:
                path = os.path.join(tmp, "prog.sh")
                with open(path, "w") as f:
                    f.write(c["source"])
                grid.append([run_cell(path, x) for x in task["test_inputs"]])
            n, k = len(grid), len(task["test_inputs"])
            valid = [i for i in range(n) if all(s == "Ok" for s, _ in grid[i])]
            scores = {}
            for i in valid:
                total = 0
                for j in valid:
                    if j == i:
                        continue
                    for col in range(k):
                        if grid[i][col][1] == grid[j][col][1]:
                            total += 1
                scores[i] = total
            selected = None
            for i in valid:
                if selected is None or scores[i] > scores[selected]:
                    selected = i
            oracle = task["oracle_outputs"]
            correct = [
                i in valid and all(grid[i][col][1] == oracle[col] for col in range(k))
                for i in range(n)
            ]
            fmv_ok = selected is not None and correct[selected]
            mean_vals.append(sum(correct) / n)
            best_vals.append(1.0 if any(correct) else 0.0)
            fmv_vals.append(1.0 if fmv_ok else 0.0)
            report["tasks"][task["task_id"]] = {
                "statuses": [[s for s, _ in row] for row in grid],
                "valid_set": valid,
                "scores": {str(i): s for i, s in scores.items()},
                "selected": selected,
                "n_correct": sum(correct),
                "fmv_correct": fmv_ok,
            }
    report["n_tasks"] = len(tasks)
    report["mean_at_n"] = sum(mean_vals) / len(mean_vals)
    report["best_at_n"] = sum(best_vals) / len(best_vals)
    report["fmv_accuracy"] = sum(fmv_vals) / len(fmv_vals)
    with open(HERE / "golden.json", "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
