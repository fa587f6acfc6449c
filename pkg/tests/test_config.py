import pytest

from sreqmc.config import ConfigError, ENV_PREFIX, auto_projector_length, parse_config, parse_mapping
from sreqmc.lattice import FiniteT, ModelParams, Projector, build_lattice

MINIMAL = """
[lattice]
dims = [4]
[model]
J = 1.0
h = 1.0
[mode]
beta = 1.0
[renyi]
n = 2
"""


def parse(text, **env):
    return parse_config(text, env=env)


def test_minimal_finite_t_defaults():
    cfg = parse(MINIMAL)
    assert cfg.mode == FiniteT(1.0)
    assert cfg.plan.schedule.d_lambda == 1e-4
    assert cfg.plan.paths_per_interval == 640
    assert cfg.plan.intervals == 1 and cfg.plan.schedule.sweeps_per_step == 1
    assert not cfg.plan.schedule.endpoint_refinement
    assert cfg.quantity == "sre" and cfg.seed == 0
    assert cfg.plan.burn_in_sweeps(4) == 40
    echo = cfg.echo()
    assert echo["noneq"]["pathsPerInterval"] == 640 and echo["lattice"]["bc"] == "periodic"


def test_projector_default_paths():
    cfg = parse(MINIMAL.replace("beta = 1.0", "m = 20"))
    assert cfg.mode == Projector(20)
    assert cfg.plan.paths_per_interval == 160


def test_flat_dotted_keys():
    text = 'lattice.dims = [4]\nmodel.h = 0.5\nmode.beta = 2.0\n"noneq.dLambda" = 1e-3\n'
    cfg = parse(text)
    assert cfg.params.h == 0.5 and cfg.mode == FiniteT(2.0) and cfg.plan.schedule.d_lambda == 1e-3


@pytest.mark.parametrize("edit,key", [
    (("beta = 1.0", "beta = -1.0"), "mode.beta"),
    (("h = 1.0", "h = -0.5"), "model.h"),
    (("J = 1.0", "J = 0.0"), "model.J"),
    (("n = 2", "n = 1"), "renyi.n"),
    (("n = 2", "n = 2.5"), "renyi.n"),
    (("n = 2", 'n = 2\nquantity = "ern"'), "renyi.quantity"),
    (("dims = [4]", "dims = [2]"), "lattice.dims"),
    (("dims = [4]", "dims = [4, 4, 4]"), "lattice.dims"),
    (("beta = 1.0", "beta = 1.0\nm = 3"), "mode"),
    (("beta = 1.0", 'beta = "hot"'), "mode.beta"),
    (("J = 1.0", "J = 1.0\nK = 2.0"), "model.K"),
    (("n = 2", "n = 2\n[noneq]\ndLambda = 0.3"), "noneq.dLambda"),
    (("n = 2", "n = 2\n[noneq]\npathsPerInterval = 1"), "noneq.pathsPerInterval"),
    (("n = 2", "n = 2\n[rng]\nseed = -1"), "rng.seed"),
    (("n = 2", "n = 2\n[output]\nformats = [\"xml\"]"), "output.formats"),
    (("n = 2", "n = 2\n[extra]\nx = 1"), "extra"),
])
def test_errors_name_the_key(edit, key):
    with pytest.raises(ConfigError) as exc:
        parse(MINIMAL.replace(*edit))
    assert exc.value.key == key
    assert key in str(exc.value)


def test_missing_required_keys():
    with pytest.raises(ConfigError) as exc:
        parse("[model]\nh = 1.0\n[mode]\nbeta = 1.0\n")
    assert exc.value.key == "lattice.dims"
    with pytest.raises(ConfigError) as exc:
        parse("[lattice]\ndims = [4]\n[model]\nh = 1.0\n")
    assert exc.value.key == "mode"


def test_invalid_toml():
    with pytest.raises(ConfigError):
        parse("[lattice\n")


def test_env_override():
    cfg = parse(MINIMAL, **{ENV_PREFIX + "NONEQ_DLAMBDA": "1e-3", ENV_PREFIX + "RNG_SEED": "42",
                            ENV_PREFIX + "RENYI_QUANTITY": '"ere"', "UNRELATED": "x"})
    assert cfg.plan.schedule.d_lambda == 1e-3
    assert cfg.seed == 42 and cfg.quantity == "ere"


def test_env_override_errors_name_variable():
    with pytest.raises(ConfigError) as exc:
        parse(MINIMAL, **{ENV_PREFIX + "MODE_BETA": "-1"})
    assert exc.value.key == "mode.beta"
    with pytest.raises(ConfigError) as exc:
        parse(MINIMAL, **{ENV_PREFIX + "MODE_TEMPERATURE": "1"})
    assert exc.value.key == ENV_PREFIX + "MODE_TEMPERATURE"


def test_with_seed_keeps_everything_else():
    cfg = parse(MINIMAL)
    other = cfg.with_seed(7)
    assert other.seed == 7 and other.plan == cfg.plan and other.geometry == cfg.geometry


def test_auto_projector_length():
    cfg = parse(MINIMAL.replace("beta = 1.0", 'm = "auto"').replace("dims = [4]", "dims = [8]"))
    assert cfg.mode == Projector(350)
    assert auto_projector_length(build_lattice([8]), ModelParams(h=1.0), 1e-2, r0=1.0) == 350


def test_beta_only_options_rejected_for_projector_keys():
    with pytest.raises(ConfigError) as exc:
        parse(MINIMAL.replace("beta = 1.0", "beta = 1.0\nr0 = 1.2"))
    assert exc.value.key == "mode.r0"


def test_parse_mapping_matches_text():
    a = parse(MINIMAL)
    b = parse_mapping({"lattice": {"dims": [4]}, "model": {"J": 1, "h": 1}, "mode": {"beta": 1},
                       "renyi": {"n": 2}}, env={})
    assert a.echo() == b.echo()
