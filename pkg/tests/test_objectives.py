import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsvforge.errors import ConfigurationError, ContractViolation, DimensionError
from tsvforge.numerics import Tensor
from tsvforge.objectives import (MsmConfig, ViewPair, combined_loss, dual_loss, hierarchical_levels,
                                 hierarchical_loss, instance_loss, lambda_schedule, msm_loss, temporal_loss)

from oracles import dual_loss_loops, gradient_check, instance_loss_loops, temporal_loss_loops

shapes = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))


def _pair(b, t, c, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(b, t, c)), rng.normal(size=(b, t, c))


@given(shapes)
@settings(max_examples=100, deadline=None)
def test_losses_match_loop_oracles(shape):
    r, rp = _pair(*shape)
    pair = ViewPair(r, rp)
    assert abs(temporal_loss(pair).item() - temporal_loss_loops(r, rp)) < 1e-12
    assert abs(instance_loss(pair).item() - instance_loss_loops(r, rp)) < 1e-12
    assert abs(dual_loss(pair).item() - dual_loss_loops(r, rp)) < 1e-12


@given(shapes)
@settings(max_examples=50, deadline=None)
def test_losses_are_nonnegative(shape):
    pair = ViewPair(*_pair(*shape))
    for f in (temporal_loss, instance_loss, dual_loss, hierarchical_loss):
        assert f(pair).item() >= 0.0


def test_collapse_cases(rng):
    r, rp = rng.normal(size=(1, 5, 3)), rng.normal(size=(1, 5, 3))
    assert instance_loss(ViewPair(r, rp)).item() == 0.0
    r, rp = rng.normal(size=(4, 1, 3)), rng.normal(size=(4, 1, 3))
    assert temporal_loss(ViewPair(r, rp)).item() == 0.0
    r, rp = rng.normal(size=(1, 1, 3)), rng.normal(size=(1, 1, 3))
    assert dual_loss(ViewPair(r, rp)).item() == 0.0


def test_instance_closed_form():
    r = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])  # B=2, T=1
    expect = -math.log(math.e / (math.e + 2))
    assert abs(instance_loss(ViewPair(r, r)).item() - expect) < 1e-15


def test_temporal_hand_computation():
    r = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    rp = np.array([[[0.0, 1.0], [1.0, 1.0]]])
    # anchor t=0: positive r0.r'0 = 0; candidates r0.r'0=0, r0.r'1=1, r0.r1=0.5
    l0 = -math.log(math.exp(0) / (math.exp(0) + math.exp(1) + math.exp(0.5)))
    # anchor t=1: positive r1.r'1 = 1; candidates r1.r'0=0.5, r1.r'1=1, r1.r0=0.5
    l1 = -math.log(math.exp(1) / (math.exp(0.5) + math.exp(1) + math.exp(0.5)))
    assert abs(temporal_loss(ViewPair(r, rp)).item() - (l0 + l1) / 2) < 1e-15


def test_separated_embeddings_drive_temporal_loss_down():
    eye = np.eye(4)[None]
    values = [temporal_loss(ViewPair(s * eye, s * eye)).item() for s in (1.0, 5.0, 10.0)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-3


def test_dual_is_sum_of_parts(rng):
    pair = ViewPair(*_pair(3, 4, 2, 0))
    assert dual_loss(pair).item() == temporal_loss(pair).item() + instance_loss(pair).item()


def test_instance_loss_permutation_invariant(rng):
    r, rp = _pair(4, 3, 5, 1)
    perm = np.array([2, 0, 3, 1])
    a = instance_loss(ViewPair(r, rp)).item()
    b = instance_loss(ViewPair(r[perm], rp[perm])).item()
    assert abs(a - b) < 1e-12


def test_view_pair_validation():
    with pytest.raises(DimensionError):
        ViewPair(np.zeros((1, 2, 3)), np.zeros((1, 3, 3)))
    with pytest.raises(ContractViolation):
        ViewPair(np.zeros((1, 0, 3)), np.zeros((1, 0, 3)))


def test_hierarchical_single_level_equals_instance(rng):
    pair = ViewPair(*_pair(3, 1, 4, 2))
    assert hierarchical_loss(pair).item() == instance_loss(pair).item()


def test_hierarchical_two_levels(rng):
    r, rp = _pair(3, 2, 4, 3)
    pooled = ViewPair(r.max(axis=1, keepdims=True), rp.max(axis=1, keepdims=True))
    expect = (dual_loss(ViewPair(r, rp)).item() + instance_loss(pooled).item()) / 2
    assert abs(hierarchical_loss(ViewPair(r, rp)).item() - expect) < 1e-14


def test_hierarchical_matches_manual_pyramid(rng):
    r, rp = _pair(2, 5, 3, 4)
    total, levels = 0.0, 0
    while r.shape[1] > 1:
        total += dual_loss_loops(r, rp)
        levels += 1
        pad = r.shape[1] % 2
        if pad:
            r = np.concatenate([r, np.full((r.shape[0], 1, r.shape[2]), -np.inf)], axis=1)
            rp = np.concatenate([rp, np.full((rp.shape[0], 1, rp.shape[2]), -np.inf)], axis=1)
        r = np.maximum(r[:, 0::2], r[:, 1::2])
        rp = np.maximum(rp[:, 0::2], rp[:, 1::2])
    total += instance_loss_loops(r, rp)
    levels += 1
    assert levels == 4  # 5 -> 3 -> 2 -> 1
    assert abs(hierarchical_loss(ViewPair(*_pair(2, 5, 3, 4))).item() - total / levels) < 1e-12


@pytest.mark.parametrize("T,levels", [(1, 1), (2, 2), (4, 3), (8, 4), (16, 5), (3, 3), (5, 4)])
def test_level_counts(T, levels):
    assert hierarchical_levels(T) == levels
    if T & (T - 1) == 0:
        assert levels == math.ceil(math.log2(T)) + 1


def test_optional_clamp_bounds_similarities(rng):
    r = 20.0 * rng.normal(size=(2, 3, 4))
    rp = 20.0 * rng.normal(size=(2, 3, 4))
    pair = ViewPair(r, rp)
    clamped = temporal_loss(pair, clamp=1.0).item()
    # every logit lies in [-1, 1], so each term is at most log(2T - 1) + 2
    assert clamped <= math.log(5) + 2 + 1e-12
    small = ViewPair(0.1 * r / 20, 0.1 * rp / 20)
    assert temporal_loss(small, clamp=50.0).item() == temporal_loss(small).item()


def test_normalized_variant_is_scale_free(rng):
    r, rp = _pair(2, 3, 4, 5)
    a = dual_loss(ViewPair(r, rp), normalize=True).item()
    b = dual_loss(ViewPair(7.0 * r, 0.5 * rp), normalize=True).item()
    assert abs(a - b) < 1e-12


@pytest.mark.parametrize("name", ["temporal", "instance", "dual", "hierarchical"])
def test_contrastive_gradients(name, rng):
    f = {"temporal": temporal_loss, "instance": instance_loss, "dual": dual_loss,
         "hierarchical": hierarchical_loss}[name]
    params = {"r": rng.normal(size=(2, 3, 4)), "rp": rng.normal(size=(2, 3, 4))}
    errs = gradient_check(lambda p: f(ViewPair(p["r"], p["rp"])), params)
    assert max(errs.values()) < 1e-4, errs


def test_msm_examples():
    x = np.array([[1.0, 2.0]])
    assert msm_loss(x, x, [True, True]).item() == 0.0
    assert msm_loss(x, np.array([[5.0, 6.0]]), [False, False]).item() == 0.0
    assert msm_loss(x, np.array([[1.0, 4.0]]), [False, True]).item() == 4.0


def test_msm_only_scores_masked_columns(rng):
    x = rng.normal(size=(2, 3, 6))
    rec = rng.normal(size=(2, 3, 6))
    mask = rng.random((2, 6)) < 0.5
    mask[0, 0] = True
    expect = np.mean([((rec[b, :, t] - x[b, :, t]) ** 2).mean() for b in range(2) for t in range(6) if mask[b, t]])
    assert abs(msm_loss(x, rec, mask).item() - expect) < 1e-14
    with pytest.raises(DimensionError):
        msm_loss(x, rec[:, :2], mask)


def test_msm_and_combined_gradients(rng):
    mask = np.array([[True, False, True, True]])
    params = {"x": rng.normal(size=(1, 2, 4)), "rec": rng.normal(size=(1, 2, 4)),
              "r": rng.normal(size=(2, 3, 2)), "rp": rng.normal(size=(2, 3, 2))}

    def f(p):
        c = hierarchical_loss(ViewPair(p["r"], p["rp"]))
        return combined_loss(c, msm_loss(p["x"], p["rec"], mask), 0.3)

    errs = gradient_check(f, params)
    assert max(errs.values()) < 1e-4, errs


def test_combined_examples():
    c, m = Tensor(2.0), Tensor(4.0)
    assert combined_loss(c, m, 0.0) is c
    assert combined_loss(c, m, 1.0) is m
    assert combined_loss(c, m, 0.25).item() == 2.5
    for bad in (-0.1, 1.1):
        with pytest.raises(ContractViolation):
            combined_loss(c, m, bad)


def test_lambda_schedule_examples():
    cfg = MsmConfig(lambda_max=0.5, warmup_fraction=0.5)
    assert lambda_schedule(0, 100, cfg) == 0.0
    assert lambda_schedule(25, 100, cfg) == 0.25
    assert lambda_schedule(50, 100, cfg) == 0.5
    assert lambda_schedule(100, 100, cfg) == 0.5
    with pytest.raises(ContractViolation):
        lambda_schedule(101, 100, cfg)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 500))
@settings(max_examples=100, deadline=None)
def test_lambda_schedule_bounded_and_monotone(lmax, frac, total):
    cfg = MsmConfig(lambda_max=lmax, warmup_fraction=frac)
    values = [lambda_schedule(i, total, cfg) for i in range(total + 1)]
    assert all(0.0 <= v <= lmax for v in values)
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_msm_config_validation():
    with pytest.raises(ConfigurationError):
        MsmConfig(lambda_max=2.0)
