import numpy as np
import pytest

from strongwork import config as C
from strongwork.machine import Thermalise


def test_default_config_roundtrip():
    cfg = C.ExperimentConfig()
    assert C.parse(C.render(cfg)) == cfg


def test_full_config_roundtrip():
    cfg = C.ExperimentConfig(
        experiment="protocol", seed=2**64 - 1, beta=0.7,
        machine={"generator": "explicit", "H_S": C.matrix_to_pairs(np.diag([0.0, 1.0])),
                 "H_B": C.matrix_to_pairs(np.diag([0.0, 0.5])), "V": C.matrix_to_pairs(np.zeros((4, 4)))},
        protocol={"generator": "explicit", "steps": ["thermalise"]},
        sweep={"param": "n", "values": [2, 4]}, criteria=[1, 2], test_mode={"bound_offset": -0.1},
        output="out.csv",
    )
    assert C.parse(C.render(cfg)) == cfg


@pytest.mark.parametrize(
    "text, match",
    [
        ("seed: -1", "seed"),
        ("seed: 1.5", "seed"),
        ("beta: 0", "beta"),
        ("colour: red", "unknown config keys"),
        ("sweep: {param: n}", "sweep"),
        ("[1, 2]", "mapping"),
        ("seed: [", "malformed"),
    ],
)
def test_invalid_configs(text, match):
    with pytest.raises(C.ConfigError, match=match):
        C.parse(text)


def test_missing_file(tmp_path):
    with pytest.raises(C.ConfigError, match="not found"):
        C.load(tmp_path / "nope.yaml")


def test_matrix_pairs_roundtrip(rng):
    m = C.random_hermitian(rng, 3)
    np.testing.assert_array_equal(C.matrix_from_pairs(C.matrix_to_pairs(m)), m)


def test_non_hermitian_matrix_reports_entry():
    cfg = C.ExperimentConfig(machine={
        "generator": "explicit",
        "H_S": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]],
        "H_B": [[[0, 0]]],
        "V": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
    })
    with pytest.raises(C.ConfigError, match=r"machine.H_S.*\(0,1\)"):
        C.build_machine(cfg)


def test_dimension_mismatch_rejected():
    cfg = C.ExperimentConfig(machine={
        "generator": "explicit",
        "H_S": C.matrix_to_pairs(np.eye(2)), "H_B": C.matrix_to_pairs(np.eye(2)), "V": C.matrix_to_pairs(np.eye(3)),
    })
    with pytest.raises(C.ConfigError, match="dimension"):
        C.build_machine(cfg)


def test_rng_streams_are_keyed_by_purpose():
    a = C.rng_for(5, "machine").normal(size=3)
    b = C.rng_for(5, "machine").normal(size=3)
    c = C.rng_for(5, "state").normal(size=3)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_generators_build_valid_objects():
    for machine in ({"generator": "random", "d_S": 3, "d_B": 2}, {"generator": "heisenberg"},
                    {"generator": "diagonal", "system_levels": [0, 1, 3], "bath_levels": [0, 2]}):
        cfg = C.ExperimentConfig(machine=machine)
        spec = C.build_machine(cfg)
        for state in ({"generator": "random"}, {"generator": "gibbs"}, {"generator": "planted"}):
            rho = C.build_state(cfg.with_updates(state=state), spec)
            assert rho.dim == spec.space.total_dim


def test_random_protocols_are_cyclic_and_short(rng):
    spec = C.build_machine(C.ExperimentConfig())
    for _ in range(50):
        p = C.random_protocol(rng, spec, 6)
        assert len(p.steps) <= 6 and p.is_cyclic()
        on = True
        for s in p.steps:
            if isinstance(s, Thermalise):
                assert on
            else:
                on = s.coupling_on


def test_explicit_protocol_step_errors():
    cfg = C.ExperimentConfig(protocol={"generator": "explicit", "steps": ["jump"]})
    spec = C.build_machine(cfg)
    with pytest.raises(C.ConfigError, match=r"steps\[0\]"):
        C.build_protocol(cfg, spec, C.build_state(cfg, spec))
