import numpy as np
import pytest

from husimiflow.config import build_state, load_config, parse_config
from husimiflow.errors import ConfigError
from husimiflow.scenarios import SHIPPED, gauge_spec, load_scenario, scenario_text
from husimiflow.states import Representation

BASE = """\
[grid]
counts = [64, 64]
min = [-10.0, -10.0]
max = [10.0, 10.0]

[hamiltonian]
expr = "0.5*p^2 + 0.5*x^2"

[state]
kind = "coherent_husimi"
center = [1.0, 0.0]

[time]
t_final = 0.1
dt = 1e-3
save_every = 10
"""


def _line_containing(text, needle):
    return next(i for i, ln in enumerate(text.splitlines(), 1) if needle in ln)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_parse_and_build(name):
    cfg = load_scenario(name)
    s = build_state(cfg)
    assert s.grid == cfg.grid
    assert cfg.n_dof == 1
    gauge_spec(cfg)


def test_unknown_scenario():
    with pytest.raises(KeyError):
        scenario_text("nope")


def test_base_defaults():
    cfg = parse_config(BASE)
    assert cfg.gauge == {"kind": "default"}
    assert cfg.seeds is None and cfg.observables == []
    assert cfg.grid.shape == (64, 64)
    assert build_state(cfg).representation == Representation.HUSIMI


def test_load_from_file(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text(BASE)
    assert load_config(f).source == str(f)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_bad_hamiltonian_reports_line():
    text = BASE.replace('"0.5*p^2 + 0.5*x^2"', '"p^2/"')
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == _line_containing(text, "expr")
    assert f"line {e.value.line}" in str(e.value)


def test_toml_syntax_error_reports_line():
    text = BASE.replace("dt = 1e-3", "dt = = 1e-3")
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == _line_containing(text, "dt = =")


@pytest.mark.parametrize("edit,needle", [
    (("[time]", "[time]\nbogus = 1"), "bogus"),
    (('kind = "coherent_husimi"', 'kind = "squeezed"'), "kind = "),
    (("center = [1.0, 0.0]", "center = [12.0, 0.0]"), "center"),
    (("center = [1.0, 0.0]", "center = [1.0]"), "center"),
    (("dt = 1e-3", "dt = -1e-3"), "dt ="),
    (("save_every = 10", 'save_every = "ten"'), "save_every"),
    (("counts = [64, 64]", "counts = [60, 64]"), "counts"),
])
def test_validation_errors_carry_lines(edit, needle):
    text = BASE.replace(*edit)
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == _line_containing(text, needle)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BASE + "\n[extras]\na = 1\n")


def test_seeds_outside_box():
    text = BASE + "\n[parcels]\nseeds = [1.0, 0.0, 11.0, 0.0]\n"
    with pytest.raises(ConfigError, match="seed") as e:
        parse_config(text)
    assert e.value.line == _line_containing(text, "seeds")


def test_seeds_must_pair_up():
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[parcels]\nseeds = [1.0, 0.0, 0.5]\n")


def test_width_product_violation():
    text = BASE.replace("max = [10.0, 10.0]", "max = [10.0, 10.0]\nwidths = [0.5, 0.5]")
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == _line_containing(text, "widths")


def test_observables_and_gauge_options():
    text = BASE + '\n[gauge]\nkind = "radial"\norigin = [0.5, 0.0]\nnodes = 12\n\n[observables]\nlist = ["x", "p^2"]\n'
    cfg = parse_config(text)
    g = gauge_spec(cfg)
    assert g.kind == "radial" and tuple(g.origin) == (0.5, 0.0) and g.nodes == 12
    assert [t for t, _ in cfg.observables] == ["x", "p^2"]


def test_mixture_and_fock_states():
    mix = BASE.replace('kind = "coherent_husimi"\ncenter = [1.0, 0.0]',
                       'kind = "mixture"\ncenters = [-2.0, 0.0, 2.0, 0.0]\nweights = [0.5, 0.5]')
    s = build_state(parse_config(mix))
    assert s.representation == Representation.WIGNER
    assert abs(np.sum(s.values) * s.grid.dV - 1.0) < 1e-10
    fock = BASE.replace('kind = "coherent_husimi"\ncenter = [1.0, 0.0]',
                        'kind = "fock"\nlevel = 2\nrepresentation = "Husimi"')
    assert build_state(parse_config(fock)).representation == Representation.HUSIMI
