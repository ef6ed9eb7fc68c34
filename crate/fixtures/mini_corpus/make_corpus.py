#!/usr/bin/env python3
"""Writes tasks.jsonl and candidates.jsonl for the bundled mini-corpus.

Ten small stdin/stdout tasks with sixteen POSIX sh candidates each. The
candidates mix correct programs, consistently wrong programs, programs that
are only wrong on an edge case, crashes, empty output, a runaway output and
a few that hang on one input. The row order within a task is a fixed
shuffle so correct programs do not always come first.
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

CRASH = 'read x\necho "boom" >&2\nexit 3\n'
EMPTY = "read x\n"
BLANK = "read x\necho\n"

TASKS = [
    {
        "task_id": "mini-01-double",
        "prompt": "Read an integer n and print 2n.",
        "inputs": ["3", "0", "-2", "10"],
        "oracle": ["6", "0", "-4", "20"],
        "candidates": [
            (5, "read n\necho $((n * 2))\n"),
            (3, "read n\necho $((n + n))\n"),
            (2, "read n\nprintf '%s   \\n\\n' $((2 * n))\n"),
            (2, 'read n\nif [ "$n" -lt 0 ]; then echo $((-n * 2)); else echo $((n * 2)); fi\n'),
            (2, "read n\necho $((n * 3))\n"),
            (1, CRASH),
            (1, EMPTY),
        ],
    },
    {
        "task_id": "mini-02-sum",
        "prompt": "Read a line of integers and print their sum.",
        "inputs": ["1 2 3", "5", "10 -4", "0 0 0 7"],
        "oracle": ["6", "5", "6", "7"],
        "candidates": [
            (4, "read line\ns=0\nfor x in $line; do s=$((s + x)); done\necho $s\n"),
            (3, "awk '{ s = 0; for (i = 1; i <= NF; i++) s += $i; print s }'\n"),
            (5, "read a rest\necho $a\n"),
            (2, CRASH),
            (1, 'read line\ncase "$line" in 5) sleep 5 ;; esac\necho 0\n'),
            (1, BLANK),
        ],
    },
    {
        "task_id": "mini-03-reverse",
        "prompt": "Read a line and print it reversed.",
        "inputs": ["abc", "a", "hello world", "racecar"],
        "oracle": ["cba", "a", "dlrow olleh", "racecar"],
        "candidates": [
            (6, "awk '{ r = \"\"; for (i = length($0); i > 0; i--) r = r substr($0, i, 1); print r }'\n"),
            (6, "cat\n"),
            (2, "tr a-z A-Z\n"),
            (2, CRASH),
        ],
    },
    {
        "task_id": "mini-04-max",
        "prompt": "Read a line of integers and print the largest.",
        "inputs": ["3 9 2", "-1 -5", "7", "4 4"],
        "oracle": ["9", "-1", "7", "4"],
        "candidates": [
            (9, 'read line\nm=""\nfor x in $line; do if [ -z "$m" ] || [ "$x" -gt "$m" ]; then m=$x; fi; done\necho $m\n'),
            (3, "read line\nfor x in $line; do m=$x; done\necho $m\n"),
            (2, CRASH),
            (1, "read line\nyes 0123456789 | head -c 2000000\n"),
            (1, EMPTY),
        ],
    },
    {
        "task_id": "mini-05-words",
        "prompt": "Read a line and print the number of whitespace-separated words.",
        "inputs": ["a b c", "single", "  spaced   out  ", "x y"],
        "oracle": ["3", "1", "2", "2"],
        "candidates": [
            (4, "wc -w\n"),
            (4, "read line\nset -- $line\necho $#\n"),
            (4, 'IFS= read -r line\necho ${#line}\n'),
            (4, CRASH),
        ],
    },
    {
        "task_id": "mini-06-square",
        "prompt": "Read an integer n and print n squared.",
        "inputs": ["2", "3", "4", "5"],
        "oracle": ["4", "9", "16", "25"],
        "candidates": [
            (10, CRASH),
            (6, EMPTY),
        ],
    },
    {
        "task_id": "mini-07-abs",
        "prompt": "Read an integer and print its absolute value.",
        "inputs": ["-3", "4", "0", "-10"],
        "oracle": ["3", "4", "0", "10"],
        "candidates": [
            (8, 'read n\nif [ "$n" -lt 0 ]; then echo $((-n)); else echo $n; fi\n'),
            (6, "read n\necho ${n#-}\n"),
            (2, "read n\nprintf '%s  \\r\\n' ${n#-}\n"),
        ],
    },
    {
        "task_id": "mini-08-even",
        "prompt": "Read an integer and print YES if it is even, NO otherwise.",
        "inputs": ["2", "7", "0", "-4"],
        "oracle": ["YES", "NO", "YES", "YES"],
        "candidates": [
            (3, "read n\nif [ $((n % 2)) -eq 0 ]; then echo YES; else echo NO; fi\n"),
            (8, "read n\nif [ $((n % 2)) -eq 0 ]; then echo NO; else echo YES; fi\n"),
            (5, CRASH),
        ],
    },
    {
        "task_id": "mini-09-factorial",
        "prompt": "Read a non-negative integer n and print n factorial.",
        "inputs": ["0", "1", "5", "6"],
        "oracle": ["1", "1", "120", "720"],
        "candidates": [
            (6, "read n\nf=1\ni=2\nwhile [ $i -le $n ]; do f=$((f * i)); i=$((i + 1)); done\necho $f\n"),
            (4, 'read n\nif [ "$n" -eq 0 ]; then echo 0; exit; fi\nf=1\ni=2\nwhile [ $i -le $n ]; do f=$((f * i)); i=$((i + 1)); done\necho $f\n'),
            (3, "read n\nf=1\ni=2\nwhile [ $i -lt $n ]; do f=$((f * i)); i=$((i + 1)); done\necho $f\n"),
            (3, "read n\nf=1\ni=2\nwhile [ $i -le $n ]; do f=$((f * i)); i=$((i + 1)); done\necho result\necho $f\n"),
        ],
    },
    {
        "task_id": "mini-10-fizzbuzz",
        "prompt": "Read n and print Fizz, Buzz, FizzBuzz or n.",
        "inputs": ["3", "5", "15", "7"],
        "oracle": ["Fizz", "Buzz", "FizzBuzz", "7"],
        "candidates": [
            (7, 'read n\nif [ $((n % 15)) -eq 0 ]; then echo FizzBuzz\nelif [ $((n % 3)) -eq 0 ]; then echo Fizz\nelif [ $((n % 5)) -eq 0 ]; then echo Buzz\nelse echo $n; fi\n'),
            (5, 'read n\nif [ $((n % 3)) -eq 0 ]; then echo Fizz\nelif [ $((n % 5)) -eq 0 ]; then echo Buzz\nelse echo $n; fi\n'),
            (2, CRASH),
            (1, 'read n\nif [ "$n" = 7 ]; then sleep 5; fi\necho Fizz\n'),
            (1, EMPTY),
        ],
    },
]


def main():
    tasks, candidates = [], []
    for idx, t in enumerate(TASKS):
        sources = [src for count, src in t["candidates"] for _ in range(count)]
        assert len(sources) == 16, t["task_id"]
        random.Random(1000 + idx).shuffle(sources)
        tasks.append(
            {
                "task_id": t["task_id"],
                "prompt": t["prompt"],
                "test_inputs": [x + "\n" for x in t["inputs"]],
                "oracle_outputs": t["oracle"],
            }
        )
        for i, src in enumerate(sources):
            candidates.append(
                {
                    "candidate_id": f"{t['task_id']}/{i}",
                    "task_id": t["task_id"],
                    "sample_index": i,
                    "source": src,
                }
            )
    with open(HERE / "tasks.jsonl", "w") as f:
        for t in tasks:
            f.write(json.dumps(t) + "\n")
    with open(HERE / "candidates.jsonl", "w") as f:
        for c in candidates:
            f.write(json.dumps(c) + "\n")


if __name__ == "__main__":
    main()
