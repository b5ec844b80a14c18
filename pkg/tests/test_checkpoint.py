import numpy as np
import pytest

from sbrbench.checkpoint import load_model, save_model
from sbrbench.factorize import BPRMF, FISM, FOSSIL, FPMC, SMF
from sbrbench.gru import GRU4Rec
from sbrbench.rules import MarkovChain

TRAIN = [[0, 1, 2], [1, 3, 4, 3], [2, 0, 4], [4, 1]]


@pytest.mark.parametrize(
    "model",
    [BPRMF(d=3, epochs=2), FPMC(d=3, epochs=2), FISM(d=3, epochs=2), FOSSIL(d=3, epochs=2), SMF(d=3, epochs=2), GRU4Rec(hidden=3, epochs=2)],
    ids=lambda m: m.name,
)
def test_round_trip_is_bit_exact(model, tmp_path):
    model.fit(TRAIN)
    path = save_model(model, tmp_path / "m.npz")
    back = load_model(path)
    assert type(back) is type(model) and back.config == model.config
    for name, value in model.params.items():
        np.testing.assert_array_equal(back.params[name], value)
    np.testing.assert_array_equal(back.rank([0, 1], 5).items, model.rank([0, 1], 5).items)
    np.testing.assert_array_equal(back.rank([0, 1], 5).scores, model.rank([0, 1], 5).scores)


def test_unsupported_model(tmp_path):
    with pytest.raises(TypeError):
        save_model(MarkovChain().fit(TRAIN), tmp_path / "m.npz")


def test_tampered_config_detected(tmp_path):
    import json

    path = save_model(BPRMF(d=2, epochs=1).fit(TRAIN), tmp_path / "m.npz")
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(str(arrays["meta"]))
    meta["config"]["d"] = 5
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)
    with pytest.raises(ValueError, match="hash"):
        load_model(path)
