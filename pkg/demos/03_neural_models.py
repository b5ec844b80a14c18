"""Train the factorization and GRU models on a planted pattern and checkpoint one.

Run with ``python demos/03_neural_models.py``.
"""

import tempfile
from pathlib import Path

import numpy as np

from sbrbench.checkpoint import load_model, save_model
from sbrbench.factorize import FPMC, SMF
from sbrbench.gru import GRU4Rec
from sbrbench.synthetic import A, B, C, planted_transition_corpus

# Item A is followed by B nine times out of ten and by C otherwise.
corpus = planted_transition_corpus(n_sessions=500, n_items=20, p_b=0.9, seed=0)

for model in (FPMC(d=32, seed=0), SMF(d=32, n_negatives=32, seed=0), GRU4Rec(hidden=32, seed=0)):
    model.fit(corpus, 20)
    scores = model.rank([A], 20).as_dict()
    print(f"{model.name:8s} score(B)={scores[B]:+.3f} score(C)={scores[C]:+.3f} top3={model.rank([A], 3).items.tolist()}")

# GRU4Rec carries a hidden state, so item order inside the prefix matters.
gru = model
print("GRU order sensitivity:", gru.rank([A, 5], 3).items.tolist(), "vs", gru.rank([5, A], 3).items.tolist())

# Checkpoints are plain .npz archives and restore parameters bit for bit.
with tempfile.TemporaryDirectory() as tmp:
    path = save_model(gru, Path(tmp) / "gru.npz")
    restored = load_model(path)
    same = all(np.array_equal(restored.params[k], v) for k, v in gru.params.items())
    print(f"checkpoint {path.name}: {path.stat().st_size} bytes, parameters identical: {same}")
