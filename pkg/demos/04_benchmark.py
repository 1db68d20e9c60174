"""A small Monte Carlo comparison of the seven estimators.

The acceptance suite runs the full 100-replicate version; this uses 10
replicates so it finishes in about a minute.

Run: python demos/04_benchmark.py
"""
from idid.simulation import run_benchmark

report = run_benchmark("main", replications=10, n=5000, test_size=50_000)
summary = report.summary()
print(f"{'estimator':10s} {'median PCD':>10s} {'IQR':>7s}")
for est in report.estimators:
    print(f"{est:10s} {summary['median'][est]:10.3f} {summary['iqr'][est]:7.3f}")
print("ordering check:", summary["ordering_check"], f"({report.elapsed:.0f}s)")
