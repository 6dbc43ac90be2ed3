import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedpl.model import (
    GAUSSIAN,
    ORDINAL,
    ModelSpec,
    ParameterError,
    ParameterSet,
    ResponseSpec,
    chain_rule_gradient,
    count_parameters,
    decode,
    encode,
    layout_for,
)
from mixedpl.simulate import toy_parameters, toy_spec


@st.composite
def specs(draw):
    q = draw(st.integers(1, 4))
    responses = []
    for j in range(q):
        if draw(st.booleans()):
            responses.append(ResponseSpec(f"y{j}", ORDINAL, draw(st.integers(2, 5))))
        else:
            responses.append(ResponseSpec(f"z{j}", GAUSSIAN))
    p = draw(st.integers(0, 3))
    return ModelSpec(tuple(responses), tuple(f"x{c}" for c in range(p)))


def test_toy_layout_names_and_order():
    lay = layout_for(toy_spec())
    assert lay.size == count_parameters(toy_spec()) == 26
    assert lay.names[:4] == ("y1 1|2", "y1 2|3", "y2 1|2", "y2 2|3")
    assert lay.names[4:6] == ("beta0.z1", "beta0.z2")
    assert lay.names[6:10] == ("y1X1", "y2X1", "z1X1", "z2X1")
    assert lay.names[18:20] == ("sigma.z1", "sigma.z2")
    assert lay.names[20:] == ("corr_y1_y2", "corr_y1_z1", "corr_y1_z2", "corr_y2_z1", "corr_y2_z2", "corr_z1_z2")
    assert [g for g, _ in lay.groups] == [
        "Thresholds", "Intercept for normals", "Coefficients",
        "Standard deviation of the Gaussian response variables", "Correlation params",
    ]


def test_vector_round_trip():
    spec, params = toy_spec(), toy_parameters()
    lay = layout_for(spec)
    back = lay.from_vector(lay.to_vector(params))
    assert np.array_equal(lay.to_vector(back), lay.to_vector(params))


@settings(max_examples=100, deadline=None)
@given(specs(), st.integers(0, 2**32 - 1))
def test_unconstrained_round_trip(spec, seed):
    u = np.random.default_rng(seed).normal(scale=2.0, size=layout_for(spec).size)
    params = decode(u, spec)
    params.validate(spec)
    assert np.allclose(encode(params, spec), u, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(specs(), st.integers(0, 2**32 - 1))
def test_chain_rule_matches_finite_differences(spec, seed):
    rng = np.random.default_rng(seed)
    lay = layout_for(spec)
    u = rng.normal(size=lay.size)
    w = rng.normal(size=lay.size)
    # f(u) = w . to_vector(decode(u)) has constrained gradient w
    f = lambda z: float(w @ lay.to_vector(decode(z, spec)))
    h = 1e-6
    fd = np.array([(f(u + e) - f(u - e)) / (2 * h) for e in np.eye(lay.size) * h])
    got = chain_rule_gradient(w, decode(u, spec), spec)
    assert np.allclose(got, fd, rtol=1e-6, atol=1e-7)


def test_decode_saturates_instead_of_overflowing():
    spec = toy_spec()
    u = np.full(layout_for(spec).size, 1e4)
    params = decode(u, spec)
    assert all(np.all(np.isfinite(v)) for v in params.thresholds.values())
    assert np.all(np.abs(params.correlations) < 1)


def test_validation_errors():
    spec = toy_spec()
    good = toy_parameters()
    good.validate(spec)
    bad_th = ParameterSet({"y1": [1.0, -1.0], "y2": [-2, 2]}, good.coefficients, good.intercepts, good.scales, good.correlations)
    with pytest.raises(ParameterError, match="increasing"):
        bad_th.validate(spec)
    bad_rho = ParameterSet(good.thresholds, good.coefficients, good.intercepts, good.scales, [1.0] + [0.0] * 5)
    with pytest.raises(ParameterError, match="correlations"):
        bad_rho.validate(spec)
    bad_sigma = ParameterSet(good.thresholds, good.coefficients, good.intercepts, {"z1": 1.0, "z2": 0.0}, good.correlations)
    with pytest.raises(ParameterError, match="positive"):
        bad_sigma.validate(spec)


def test_spec_errors():
    with pytest.raises(ValueError):
        ResponseSpec("y", ORDINAL, 1)
    with pytest.raises(ValueError):
        ResponseSpec("z", GAUSSIAN, 3)
    with pytest.raises(ValueError):
        ModelSpec((ResponseSpec("y", GAUSSIAN), ResponseSpec("y", GAUSSIAN)))
    with pytest.raises(ValueError):
        ModelSpec((ResponseSpec("y", GAUSSIAN),), ("y",))


def test_json_round_trip():
    spec, params = toy_spec(), toy_parameters()
    spec2 = ModelSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert spec2 == spec
    back = ParameterSet.from_dict(json.loads(json.dumps(params.to_dict(spec))), spec2)
    lay = layout_for(spec)
    assert np.array_equal(lay.to_vector(back), lay.to_vector(params))


def test_correlation_matrix():
    R = toy_parameters().correlation_matrix(toy_spec())
    assert np.allclose(R, R.T) and np.all(np.diag(R) == 1)
    assert R[1, 3] == 0.80
    assert np.linalg.eigvalsh(R).min() > 0
    assert math.isclose(R[0, 1], 0.64)
