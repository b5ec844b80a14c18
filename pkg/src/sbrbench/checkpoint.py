"""Model checkpoints for the latent-factor and GRU models.

A checkpoint is an uncompressed ``.npz`` archive holding

* ``param/<name>`` - every parameter matrix, float64,
* ``popularity`` - training event counts (tie-breaking and catalog),
* ``meta`` - a JSON string with ``format`` (version), ``model`` (registry
  name), ``config`` (all hyper-parameters) and ``config_hash``.

Loading restores the arrays bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .factorize import BPRMF, FISM, FOSSIL, FPMC, SMF, FactorModel, FactorModelConfig
from .gru import GRU4Rec, GruConfig

FORMAT_VERSION = 1
MODELS = {cls.name: cls for cls in (BPRMF, FPMC, FISM, FOSSIL, SMF, GRU4Rec)}


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_model(model, path) -> Path:
    if model.name not in MODELS:
        raise TypeError(f"no checkpoint support for {type(model).__name__}")
    config = asdict(model.config)
    meta = {
        "format": FORMAT_VERSION,
        "model": model.name,
        "n_items": model.n_items,
        "config": config,
        "config_hash": _config_hash(config),
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), popularity=model.popularity, **arrays)
    return path


def load_model(path):
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        if _config_hash(meta["config"]) != meta["config_hash"]:
            raise ValueError("checkpoint config hash mismatch")
        cls = MODELS[meta["model"]]
        config_cls = GruConfig if issubclass(cls, GRU4Rec) else FactorModelConfig
        model = cls(config_cls(**meta["config"]))
        model.params = {k[len("param/") :]: data[k].copy() for k in data.files if k.startswith("param/")}
        model.n_items = int(meta["n_items"])
        model.popularity = data["popularity"].copy()
    model.catalog = model.popularity > 0
    model._catalog_ids = np.flatnonzero(model.catalog)
    return model


__all__ = ["save_model", "load_model", "FORMAT_VERSION", "FactorModel"]
