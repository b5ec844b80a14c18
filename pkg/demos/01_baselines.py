"""Fit the rule and neighborhood baselines on the bundled click log and inspect their lists.

Run with ``python demos/01_baselines.py``.
"""

from sbrbench import harness
from sbrbench.harness import ExperimentConfig

# The synthetic profile points at a small click log that ships with the
# package: 1000 sessions over 200 items spread across 12 days.
config = ExperimentConfig.from_dict({"profile": "synthetic", "algorithms": ["sr"]})
prepared = harness.prepare(config)
train, test = prepared.slices[0].train, prepared.slices[0].test
print(f"slice 0: {len(train)} training sessions, {len(test)} test sessions, {prepared.n_items} items")

# Every algorithm shares one surface: fit on sessions, then rank items for a prefix.
session = test[0]
prefix = list(session.items[:2])
print(f"prefix {prefix}, true next item {session.items[2]}")
for name in ["ar", "mc", "sr", "iknn", "sknn", "vsknn", "ssknn", "sfsknn"]:
    model = harness.make_algorithm(name).fit(train, prepared.n_items)
    ranking = model.rank(prefix, 5)
    shown = ", ".join(f"{i}:{s:.3f}" for i, s in zip(ranking.items, ranking.scores))
    print(f"  {name:7s} {shown}")

# Streaming use: feed events one by one into a session state.
model = harness.make_algorithm("vsknn").fit(train, prepared.n_items)
state = model.new_session()
for item in session.items[:-1]:
    state.update(item)
    print(f"after {item:3d} -> top 3 {state.rank(3).items.tolist()}")
