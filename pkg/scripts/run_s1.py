"""Status-mix study: complete data, heavy censoring, rarer disease deaths, unknown causes.

    python scripts/run_s1.py                      # s1-1 .. s1-4, 50 reps of n=500
    python scripts/run_s1.py --settings s1-1 --bootstrap 200
"""

from _common import parse, run

if __name__ == "__main__":
    run(parse(["s1-1", "s1-2", "s1-3", "s1-4"], __doc__))
