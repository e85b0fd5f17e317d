import pytest

from sempcyc.config import BENCHMARK, DEFAULTS, Config, benchmark_config, load_config, parse_lines
from sempcyc.errors import ConfigError
from sempcyc.trainer import TrainConfig


def test_defaults_mirror_dataclasses():
    cfg = Config()
    tc = cfg.train_config()
    assert tc == TrainConfig()
    assert cfg.synth_config().n_seen == 10


def test_typed_parsing():
    cfg = Config({"train.M": "8", "train.lam": "0.25", "cls.pretrain": "yes",
                  "train.ablation": "adv_only"})
    assert cfg["train.M"] == 8 and cfg["train.lam"] == 0.25
    assert cfg["cls.pretrain"] is True
    assert cfg.train_config().ablation == "adv_only"
    with pytest.raises(ConfigError, match="int"):
        Config({"train.M": "eight"})
    with pytest.raises(ConfigError):
        Config({"cls.pretrain": "maybe"})


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        Config({"train.learning_rate": "1"})


def test_file_and_overrides(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# comment\ntrain.M = 12  # trailing\n\ntrain.epochs=3\n")
    cfg = load_config(p, ["train.epochs=5"])
    assert cfg["train.M"] == 12 and cfg["train.epochs"] == 5
    with pytest.raises(ConfigError, match=":1:"):
        parse_lines(["no equals sign"])
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


def test_dump_round_trip(tmp_path):
    cfg = benchmark_config(**{"train.seed": 3})
    cfg.dump(tmp_path / "c.cfg")
    back = load_config(tmp_path / "c.cfg")
    assert back.to_dict() == cfg.to_dict()
    assert back.hash() == cfg.hash()


def test_hash_ignores_run_dir_only():
    a = Config({"run.dir": "/tmp/a"})
    assert a.hash() == Config({"run.dir": "/tmp/b"}).hash()
    assert a.hash() != Config({"train.seed": 1}).hash()
    assert len(a.hash()) == 16


def test_loss_weights_and_pretraining_flags():
    tc = benchmark_config().train_config()
    assert tc.weights["cyc_sk"] == BENCHMARK["train.weights.cyc_sk"]
    assert tc.cls_pretrain and tc.aenc_pretrain_epochs == 500


@pytest.mark.parametrize("sources,expected", [
    ("word2vec+jcn", ("word2vec", "jcn")),
    ("glove+path", ("glove", "path")),
    ("lin", (None, "lin")),
    ("word2vec", ("word2vec", None)),
])
def test_sources(sources, expected):
    assert Config({"sideinfo.sources": sources}).sources() == expected


@pytest.mark.parametrize("sources", ["word2vec+glove", "fasttext", "jcn+lin", ""])
def test_bad_sources(sources):
    with pytest.raises(ConfigError):
        Config({"sideinfo.sources": sources}).sources()


def test_lists():
    cfg = Config({"ablate.seeds": "0, 4,5", "sweep.ratios": "0,0.1"})
    assert cfg.int_list("ablate.seeds") == [0, 4, 5]
    assert cfg.float_list("sweep.ratios") == [0.0, 0.1]
    with pytest.raises(ConfigError):
        Config({"ablate.seeds": "a,b"}).int_list("ablate.seeds")


def test_every_train_field_is_reachable():
    keys = {k.split(".", 1)[1] for k in DEFAULTS if k.startswith("train.") and ".weights." not in k
            and not k.startswith("train.weights.")}
    assert keys | {"weights", "cls_pretrain", "aenc_pretrain_epochs"} == set(TrainConfig().to_dict())
