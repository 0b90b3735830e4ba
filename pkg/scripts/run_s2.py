"""Mislabelled causes of death: 5% of O/D labels swapped, then partly or fully recoded to status 3.

    python scripts/run_s2.py
"""

from _common import parse, run

if __name__ == "__main__":
    run(parse(["s2-1", "s2-2", "s2-3", "s2-4"], __doc__))
