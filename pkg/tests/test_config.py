import json

import pytest

from amfm_faces.config import RunConfig, derive_seed, fnv1a64, load_config, splitmix64
from amfm_faces.errors import ParameterError


def test_hash_reference_values():
    # published FNV-1a 64 test vectors and the first splitmix64 output for state 0
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_derive_seed():
    assert derive_seed(7, "sa") == splitmix64(fnv1a64(b"sa") ^ 7)
    assert derive_seed(7, "sa") != derive_seed(7, "corpus")
    assert derive_seed(7, "sa") != derive_seed(8, "sa")
    assert 0 <= derive_seed(2**70, "x") < 2**64
    with pytest.raises(ParameterError):
        derive_seed(-1, "sa")


def test_defaults_and_round_trip(tmp_path):
    cfg = RunConfig()
    assert cfg.seed == 7 and cfg.input_kind == "fm"
    assert cfg.train_single.learning_rate == 3e-4 and cfg.train_multi.learning_rate == 1e-3
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


def test_partial_sections():
    cfg = RunConfig.from_dict({"train_single": {"epochs": 3}, "corpus": {"n_videos": 4}})
    assert cfg.train_single.epochs == 3 and cfg.train_single.learning_rate == 3e-4
    assert cfg.corpus.n_videos == 4 and cfg.corpus.frames_per_video == 24


@pytest.mark.parametrize(
    "data",
    [
        {"sed": 1},
        {"hilbert": {"tapz": 3}},
        {"input_kind": "rgb"},
        {"decimation": "median"},
        {"seed": -4},
        {"hilbert": {"bits": 0}},
        {"bank": [1, 2]},
        [],
    ],
)
def test_rejects_bad_config(data):
    with pytest.raises(ParameterError):
        RunConfig.from_dict(data)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ParameterError):
        load_config(path)


def test_with_overrides():
    cfg = RunConfig().with_overrides(seed=3, input_kind=None)
    assert cfg.seed == 3 and cfg.input_kind == "fm"
