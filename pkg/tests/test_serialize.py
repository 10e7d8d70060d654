import json
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from thincond import dist_core as dc
from thincond import model_zoo as mz
from thincond import pp_exact as pe
from thincond import serialize as sz


def test_matrix_roundtrip():
    law = mz.make_dist(mz.DistSpec.poisson(2.0), 30, tail_tol=None)
    thinning = mz.make_thinning(mz.ThinSpec.independent(0.3), 30)
    exact = mz.thinned_law(mz.DistSpec.poisson(2.0), mz.ThinSpec.independent(0.3), 30)
    cond = dc.condense(law, thinning, thinned=exact)
    back = sz.matrix_from_json(sz.loads(sz.dumps(sz.matrix_to_json(cond))))
    assert np.abs(back.entries - cond.entries).max() <= 1e-15
    assert np.array_equal(back.row_deficit, cond.row_deficit)


def test_pmf_roundtrip():
    law = mz.make_dist(mz.DistSpec.negbinomial(2, 0.3), 40, tail_tol=None)
    back = sz.pmf_from_json(sz.loads(sz.dumps(sz.pmf_to_json(law))))
    assert np.array_equal(back.weights, law.weights) and back.tail_bound == law.tail_bound


def test_measure_and_kernel_roundtrip():
    measure = pe.random_measure(2, 3, 1)
    spec = pe.ThinningSpec.uniform()
    cond = pe.condensation_kernel(measure, spec)
    P2 = sz.measure_from_json(sz.loads(sz.dumps(sz.measure_to_json(measure))))
    Q2 = sz.kernel_from_json(sz.loads(sz.dumps(sz.kernel_to_json(cond))))
    assert np.array_equal(P2.weights, measure.weights)
    assert np.abs(Q2.matrix - cond.matrix).max() <= 1e-15


@given(st.floats(allow_nan=False, allow_infinity=False))
@settings(max_examples=200)
def test_floats_roundtrip_exactly(x):
    assert sz.loads(sz.dumps({"x": x}))["x"] == x


def test_special_values_and_order():
    text = sz.dumps({"b": math.inf, "a": [1, 2.5, None, True], "c": np.float64(-math.inf)})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    back = json.loads(text)
    assert back["b"] == math.inf and back["c"] == -math.inf
    assert math.isnan(json.loads(sz.dumps([math.nan]))[0])


def test_csv_and_flatten():
    text = sz.to_csv(["n", "p"], [[0, 0.1], [1, np.float64(1 / 3)]])
    assert text.splitlines() == ["n,p", "0,0.10000000000000001", "1,0.33333333333333331"]
    assert sz.flatten({"a": {"b": [1, 2]}, "c": 3}) == [("a.b[0]", 1), ("a.b[1]", 2), ("c", 3)]
