import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmol_shape.config import (
    PRESETS,
    ConfigError,
    apply_overrides,
    config_from_dict,
    parse_config,
    serialize_config,
)
from gmol_shape.expr import ExpressionError, compile_expression, evaluate

# -- expressions --------------------------------------------------------------------


@pytest.mark.parametrize(
    "text, x, expected",
    [
        ("1", 0.3, 1.0),
        ("x", 0.3, 0.3),
        ("-x + 2", 0.5, 1.5),
        ("2*x/4", 1.0, 0.5),
        ("0.5*cos(pi*x)+0.8", 1.0, 0.3),
        ("0.5·sin(2·π·x)+1.0", 0.25, 1.5),
        ("3 − 1", 0.0, 2.0),
        ("0.3*(cos(2*pi*x)/2+1.0)", 0.0, 0.45),
        ("1e-1*2", 0.0, 0.2),
        ("--x", 0.7, 0.7),
        ("2*(1+x)*(1-x)", 0.5, 1.5),
    ],
)
def test_expression_values(text, x, expected):
    assert evaluate(text, x) == pytest.approx(expected)


def test_expression_vectorized():
    x = np.linspace(0, 1, 9)
    np.testing.assert_allclose(evaluate("sin(2*pi*x)", x), np.sin(2 * np.pi * x))
    assert evaluate("4", x).shape == x.shape


@pytest.mark.parametrize(
    "text, position",
    [("1 +", 3), ("sin(x", 5), ("2 $ x", 2), ("tan(x)", 0), ("(1+2))", 5), ("", 0), ("x y", 2)],
)
def test_expression_errors_carry_position(text, position):
    with pytest.raises(ExpressionError) as info:
        compile_expression(text)
    assert info.value.position == position
    assert f"position {position}" in str(info.value)


def test_expression_type_check():
    with pytest.raises(TypeError):
        compile_expression(3)


# -- configuration -----------------------------------------------------------------------


def test_minimal_document_defaults():
    c = parse_config('{"mode": "forward", "R": 2, "boundary": {"preset": "annulus-log"}}')
    assert (c.N, c.M, c.tol) == (10, 64, 1e-10)
    assert c.margin == pytest.approx(0.04)
    assert c.boundary["u_o"] == "0" and c.boundary["u_f"] == "1"
    assert float(c.boundary["w"]) == pytest.approx(1 / (2 * math.log(2)))


def test_missing_r():
    with pytest.raises(ConfigError, match="missing field R"):
        parse_config('{"mode": "forward", "boundary": {"preset": "annulus-log"}}')


def test_named_experiment_preset():
    c = parse_config('{"preset": "paper-3.1"}')
    assert c.R == 30 and c.K == 250 and c.mode == "inverse"
    x = c.grid.x
    b = c.boundary_data()
    np.testing.assert_allclose(b.u_o, 0.5 * np.cos(np.pi * x) + 0.8)
    np.testing.assert_allclose(b.u_f, 0.5 * np.sin(2 * np.pi * x) + 1.0)
    np.testing.assert_allclose(b.w, 0.3 * (np.cos(2 * np.pi * x) / 2 + 1.0))


def test_document_overrides_preset():
    c = parse_config('{"preset": "paper-3.1", "K": 10, "boundary": {"w": "0"}}')
    assert c.K == 10 and c.R == 30
    assert c.boundary["w"] == "0" and c.boundary["u_o"] == "0.5*cos(pi*x)+0.8"


def test_unknown_preset_lists_available():
    with pytest.raises(ConfigError) as info:
        parse_config('{"preset": "nope"}')
    for name in PRESETS:
        assert name in str(info.value)
    with pytest.raises(ConfigError, match="constant"):
        parse_config('{"R": 2, "boundary": {"preset": "nope"}}')


def test_bad_expression_reports_position():
    with pytest.raises(ConfigError, match="position 4"):
        parse_config('{"R": 2, "boundary": {"u_o": "1 + ", "u_f": "1"}}')


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ('{"R": -1}', "R must be positive"),
        ('{"R": 2, "K": -1, "boundary": {"u_o": "0", "u_f": "1"}}', "K"),
        ('{"R": 2, "N": 1, "boundary": {"u_o": "0", "u_f": "1"}}', "N"),
        ('{"R": 2, "M": 6, "boundary": {"u_o": "0", "u_f": "1"}}', "M"),
        ('{"R": 2, "M": 9, "boundary": {"u_o": "0", "u_f": "1"}}', "M"),
        ('{"R": 2, "N": 2.5, "boundary": {"u_o": "0", "u_f": "1"}}', "integer"),
        ('{"R": "2"}', "number"),
        ('{"R": 2, "mode": "solve"}', "mode"),
        ('{"R": 2, "boundary": {"u_f": "1"}}', "boundary.u_o"),
        ('{"R": 2, "colour": 1, "boundary": {"u_o": "0", "u_f": "1"}}', "colour"),
        ('{"R": 2, "boundary": {"u_o": "0", "u_f": "1"}, "optimizer": {"mode": "bfgs"}}', "optimizer.mode"),
        ('{"R": 2, "boundary": {"u_o": "0", "u_f": "1"}, "optimizer": {"step": 1}}', "step"),
        ("[1, 2]", "JSON object"),
        ('{"R": 2,', "malformed JSON"),
    ],
)
def test_validation_errors(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(doc)


def test_sample_lists_and_length_check():
    c = parse_config(json.dumps({"R": 2, "M": 8, "boundary": {"u_o": [0] * 8, "u_f": 1}, "shape0": [1] * 8}))
    np.testing.assert_array_equal(c.boundary_data().u_f, 1.0)
    np.testing.assert_array_equal(c.shape().r, 1.0)
    bad = parse_config(json.dumps({"R": 2, "M": 8, "boundary": {"u_o": [0] * 7, "u_f": 1}}))
    with pytest.raises(ConfigError, match="expected 8 samples"):
        bad.boundary_data()


def test_default_shape_is_half_radius():
    c = parse_config('{"R": 4, "boundary": {"u_o": "0", "u_f": "1"}}')
    np.testing.assert_array_equal(c.shape().r, 2.0)


def test_overrides_revalidate():
    c = parse_config('{"R": 2, "boundary": {"preset": "annulus-log"}}')
    c2 = apply_overrides(c, N=20, M=None, K=3.0)
    assert (c2.N, c2.M, c2.K) == (20, 64, 3.0)
    with pytest.raises(ConfigError):
        apply_overrides(c, M=7)


documents = st.fixed_dictionaries(
    {
        "R": st.floats(0.5, 100),
        "mode": st.sampled_from(["forward", "inverse", "validate"]),
        "N": st.integers(2, 50),
        "M": st.integers(4, 64).map(lambda m: 2 * m),
        "K": st.floats(0, 1e4),
        "boundary": st.sampled_from(
            [{"preset": "paper-3.1"}, {"u_o": "sin(2*pi*x)", "u_f": "1", "w": "0.5"}, {"preset": "constant"}]
        ),
        "plain_norms": st.booleans(),
    },
    optional={
        "shape0": st.sampled_from(["1", "0.3+0.01*cos(2*pi*x)", 0.25]),
        "optimizer": st.sampled_from([{}, {"mode": "alternating", "max_iters": 7}]),
        "seed": st.integers(0, 100),
        "output": st.sampled_from(["out", "runs/a"]),
    },
)


@settings(max_examples=60, deadline=None)
@given(documents)
def test_config_round_trip(doc):
    c = config_from_dict(doc)
    assert parse_config(serialize_config(c)) == c
    assert serialize_config(parse_config(serialize_config(c))) == serialize_config(c)
