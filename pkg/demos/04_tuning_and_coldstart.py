"""Random search over a neighborhood size, then a training-history sweep.

Run with ``python demos/04_tuning_and_coldstart.py``. Outputs go to ``demo_results/``.
"""

import csv

from sbrbench import harness
from sbrbench.harness import ExperimentConfig, TuneSpec

config = ExperimentConfig.from_dict({"profile": "synthetic", "algorithms": ["sr", "vsknn"], "output": "demo_results"})
prepared = harness.prepare(config)

# Tuning holds out the last day of the first training window as validation
# data and never touches the test days.
spec = TuneSpec("vsknn", {"k": [20, 50, 100, 200], "m": [200, 1000]}, iterations=6, objective="MRR@20")
best, trials = harness.tune(config, spec, prepared)
for t in trials:
    print(f"trial {t['trial']}: {t['params']} -> {t['objective']:.4f}")
print("best:", best)

# Cold-start sweep: keep only the most recent days of each training window.
path = harness.coldstart_sweep(config, [1, 2, 3, None], prepared)
rows = [r for r in csv.DictReader(path.open(), delimiter=";") if r["metric"] == "HR@20"]
for r in rows:
    print(f"{r['algorithm']:6s} keep_days={r['keep_days']:>4s} HR@20={float(r['value']):.4f}")
