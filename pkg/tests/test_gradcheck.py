"""Finite-difference checks for every differentiable operation.

The float32 pass runs many random instances per op at the production
precision; the float64 pass repeats a few instances per op at the tight
tolerance. The composite-loss check exercises the whole model (handled in
test_acceptance at full instance count; a smaller version runs here).
"""

import numpy as np
import pytest

from semstream.config import RunConfig
from semstream.gradcheck import check_gradients, standard_op_checks
from semstream.model import finite_difference_model_check, toy_gradcheck_case
from semstream.rng import CounterRng

F32_TOL = 1e-3
F64_TOL = 1e-6


def test_all_ops_float32_twenty_instances():
    worst = {}
    for instance in range(20):
        rng = CounterRng(100).derive(f"i{instance}")
        for name, fn, inputs in standard_op_checks(rng):
            res = check_gradients(fn, inputs, step=1e-3, dtype=np.float32, name=name)
            worst[name] = max(worst.get(name, 0.0), res.max_rel_err)
    bad = {k: v for k, v in worst.items() if v >= F32_TOL}
    assert not bad, f"ops failing float32 gradient check: {bad}"


def test_all_ops_float64_tight():
    worst = {}
    for instance in range(3):
        rng = CounterRng(200).derive(f"i{instance}")
        for name, fn, inputs in standard_op_checks(rng):
            res = check_gradients(fn, inputs, step=1e-5, dtype=np.float64, name=name)
            worst[name] = max(worst.get(name, 0.0), res.max_rel_err)
    bad = {k: v for k, v in worst.items() if v >= F64_TOL}
    assert not bad, f"ops failing float64 gradient check: {bad}"


def test_composite_loss_sampled_coordinates():
    case = toy_gradcheck_case(7)
    model = case["model"]
    names = sorted(model.params)
    crng = CounterRng(77)
    coords = []
    for _ in range(50):
        nm = names[crng.randint(0, len(names))]
        coords.append((nm, crng.randint(0, model.params[nm].data.size)))
    err = finite_difference_model_check(
        model,
        case["features"],
        case["targets"],
        case["teacher"],
        case["spec"],
        RunConfig().loss_weights(),
        coords,
    )
    assert err < F32_TOL, err


def test_composite_loss_every_parameter_coordinate():
    case = toy_gradcheck_case(13)
    model = case["model"]
    coords = [
        (name, idx)
        for name, p in sorted(model.params.items())
        for idx in range(p.data.size)
    ]
    err = finite_difference_model_check(
        model,
        case["features"],
        case["targets"],
        case["teacher"],
        case["spec"],
        RunConfig().loss_weights(),
        coords,
    )
    assert err < F32_TOL, err
