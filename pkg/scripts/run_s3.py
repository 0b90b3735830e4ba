"""Family misspecification: Weibull-generated data fitted with the log-normal (default) or Weibull.

    python scripts/run_s3.py
    python scripts/run_s3.py --fit-family weibull
"""

from _common import parse, run

if __name__ == "__main__":
    run(parse(["s3-1", "s3-2", "s3-3", "s3-4"], __doc__, fit_family="lognormal"))
