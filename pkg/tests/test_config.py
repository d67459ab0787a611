import pytest

from skills.lindiff.config import build_config, load_config, parse_config_text, with_overrides
from skills.lindiff.errors import ConfigError


def test_parse_config_text_handles_comments_lists_and_aliases():
    text = """
    # sweep settings
    d = 20
    T = 50          # steps
    n_list = 10, 20,40
    c_list = 0.1, 1
    coupling = sqrt_alpha_bar
    """

    config = build_config(parse_config_text(text))

    assert config.d == 20
    assert config.steps == 50
    assert config.n_list == [10, 20, 40]
    assert config.reg_scales() == [0.1, 1.0]
    assert config.hierarchy_exponents() == [1.0]
    assert config.coupling == "sqrt_alpha_bar"


def test_defaults_are_valid():
    config = build_config({})

    assert config.steps == 100
    assert len(config.tau_grid) == 37
    assert config.tau_grid[0] == 1.0
    assert config.out.endswith(".csv")


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1",
        "d = 0",
        "n_list =",
        "objective = score",
        "d 20",
        "d = 3\nd = 4",
        "k_list = 1, -2",
    ],
)
def test_invalid_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        build_config(parse_config_text(text))


def test_load_config_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("seed = 3\nthreads = 2\n", encoding="utf-8")

    config = load_config(path)
    changed = with_overrides(config, seed=9, out=str(tmp_path / "x.csv"), threads=None)

    assert (config.seed, config.threads) == (3, 2)
    assert (changed.seed, changed.threads) == (9, 2)
    assert changed.out == str(tmp_path / "x.csv")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_output_blocked_by_file(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")

    with pytest.raises(ConfigError):
        build_config({"out": str(blocker / "result.csv")})


def test_undecodable_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_bytes(b"d = 4\n\xff\n")

    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(path)
