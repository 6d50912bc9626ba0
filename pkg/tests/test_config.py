import numpy as np
import pytest

from macroenergy.config import ALL_MODELS, RunConfig, int_seed, load_config, parse_models, stream
from macroenergy.exceptions import ConfigError


class TestRunConfig:
    def test_seed_mandatory(self):
        with pytest.raises(ConfigError):
            RunConfig(seed=None)
        with pytest.raises(ConfigError, match="seed is mandatory"):
            load_config(overrides={"p": 2})

    @pytest.mark.parametrize(
        "kw",
        [{"seed": -1}, {"seed": "x"}, {"p": 0}, {"window": "rolling"}, {"dcc_joint": "skew"}, {"kappa": -1.0}, {"gpr_lags": 0}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**{"seed": 1, **kw})

    def test_defaults_and_dict(self):
        c = RunConfig(seed=3)
        assert c.models == ALL_MODELS
        d = c.to_dict()
        assert d["seed"] == 3 and "extra" not in d and isinstance(d["models"], list)
        assert c.tvp.kappa == c.kappa

    def test_ordering_string(self):
        assert RunConfig(seed=1, ordering="a, b,OIL").ordering == ("a", "b", "OIL")


class TestModels:
    def test_case_insensitive_dedup(self):
        assert parse_models("var, VAR-dcc,var") == ("VAR", "VAR-DCC")

    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown model"):
            parse_models("VAR-BEKK")

    def test_empty(self):
        with pytest.raises(ConfigError):
            parse_models(" , ")


class TestFile:
    def test_merge_and_coercion(self, tmp_path):
        (tmp_path / "d.csv").write_text("date,a\n", encoding="utf-8")
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nseed = 7\ndata = d.csv\nkappa = 1e-2\ngpr-optimize = no\nmodels = VAR,TVP\n", encoding="utf-8")
        c = load_config(p, {"p": "2", "kappa": None})
        assert (c.seed, c.p, c.kappa, c.gpr_optimize) == (7, 2, 1e-2, False)
        assert c.models == ("VAR", "TVP")
        assert c.data == str((tmp_path / "d.csv").resolve())

    def test_override_wins(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 7\n", encoding="utf-8")
        assert load_config(p, {"seed": 9}).seed == 9

    @pytest.mark.parametrize("text", ["seed 7\n", "seed = 7\nbogus = 1\n", "seed = 7\np = two\n", "seed = 1\ngpr_optimize = maybe\n"])
    def test_bad_file(self, tmp_path, text):
        p = tmp_path / "run.cfg"
        p.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.cfg")


class TestStreams:
    def test_reproducible(self):
        assert np.array_equal(stream(5, "gof", 1).random(4), stream(5, "gof", 1).random(4))
        assert int_seed(5, "a") == int_seed(5, "a")

    def test_names_and_roots_separate(self):
        draws = {tuple(stream(r, *n).random(3)) for r in (1, 2) for n in (("a",), ("b",), ("a", 1), ("a", 2))}
        assert len(draws) == 8
