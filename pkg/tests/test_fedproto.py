import math
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fqkl.datagen import ClientSplit, WindowSet, partition
from fqkl.fedproto import (
    ClientPayload,
    CommLedger,
    GlobalModel,
    HashCollisionError,
    ProtocolError,
    ProtocolParams,
    SingleClassClientError,
    aggregate,
    broadcast_size,
    client_local_round,
    collapse_duplicates,
    content_hash,
    dequantize,
    encode_broadcast,
    global_gram,
    global_predict,
    global_predict_many,
    merge_duplicate_svs,
    payload_size,
    quantize,
    run_federation,
    select_top,
    _deduplicate,
)
from fqkl.qkernel import FeatureMapSpec, QuantumKernel, Rescale, fidelity, embed
from fqkl.svm import SvmConfig, SvmModel, box_constraints, decision_values, solve_dual

import oracles


def blobs(n, d, seed, sep=1.5):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 2).astype(np.int64)
    X = rng.normal(size=(n, d)) * 0.6 + sep * (2 * y[:, None] - 1) / math.sqrt(d)
    return WindowSet(X, y, np.arange(n))


def kernel_for(ws, n_qubits=4, depth=1):
    return QuantumKernel(FeatureMapSpec(n_qubits, depth, rescale=Rescale.fit(ws.features)))


# -- quantization ---------------------------------------------------------------

def test_top_of_range_round_trips_exactly():
    q = quantize([3.7], 8, 0.0, 3.7)
    assert q.codes.tolist() == [255]
    assert dequantize(q).tolist() == [3.7]


def test_bottom_of_range_round_trips_exactly():
    q = quantize([-1.25], 8, -1.25, 2.0)
    assert q.codes.tolist() == [0]
    assert dequantize(q).tolist() == [-1.25]


def test_midpoint_rounds_half_away_from_zero():
    q = quantize([0.5], 8, 0.0, 1.0)
    assert q.codes.tolist() == [128]
    assert abs(dequantize(q)[0] - 128 / 255) <= 1e-15


def test_degenerate_range_maps_to_lo():
    q = quantize([2.0, 2.0], 8, 2.0, 2.0)
    assert q.codes.tolist() == [0, 0]
    assert dequantize(q).tolist() == [2.0, 2.0]


def test_quantize_rejects_bad_input():
    with pytest.raises(ValueError):
        quantize([np.nan], 8, 0, 1)
    with pytest.raises(ValueError):
        quantize([0.5], 0, 0, 1)
    with pytest.raises(ValueError):
        quantize([0.5], 17, 0, 1)
    with pytest.raises(ValueError):
        quantize([0.5], 8, 1, 0)


@settings(max_examples=80, deadline=None)
@given(bits=st.integers(1, 16), lo=st.floats(-100, 100), span=st.floats(1e-6, 100),
       u=st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_quantization_error_bound(bits, lo, span, u):
    hi = lo + span
    v = lo + np.array(u) * (hi - lo)
    q = quantize(v, bits, lo, hi)
    back = dequantize(q)
    assert np.all(q.codes <= (1 << bits) - 1)
    assert np.all((back >= lo) & (back <= hi))
    bound = (hi - lo) / (2 * ((1 << bits) - 1))
    assert np.all(np.abs(back - np.clip(v, lo, hi)) <= bound * (1 + 1e-9) + 1e-12)


# -- hashing and wire format ----------------------------------------------------

def test_content_hash_matches_reference_fnv(rng):
    x = rng.normal(size=5)
    assert content_hash(x) == oracles.fnv1a64(struct.pack("<5d", *x))
    assert content_hash(np.zeros(0)) == 0xCBF29CE484222325


def test_content_hash_distinguishes_signed_zero():
    assert content_hash([0.0]) != content_hash([-0.0])


def test_fixed_seed_client_payload_size():
    data = blobs(200, 6, seed=3)
    p = client_local_round(data, kernel_for(data), budget=20, bits=8)
    assert len(p) == 20
    # header 37 + 16 d, then per record 4 + 8 + 1 + 1 + 2 d
    assert p.byte_size == 37 + 16 * 6 + 20 * (14 + 12)
    assert len(p.encode()) == p.byte_size


def test_payload_size_formula():
    assert payload_size(0, 3, 8) == 37 + 48
    assert payload_size(5, 3, 12) == 37 + 48 + 5 * (4 + 8 + 1 + 2 + 6)
    assert broadcast_size(5, 3, 8) == 37 + 48 + 5 * (4 + 1 + 1 + 6)


def test_payload_encoding_round_trip():
    data = blobs(60, 3, seed=1)
    p = client_local_round(data, kernel_for(data, 3), budget=10, bits=12)
    back = ClientPayload.decode(p.encode())
    assert back.client_id == p.client_id and back.bits == 12
    assert back.hashes == p.hashes
    assert np.array_equal(back.alpha_codes, p.alpha_codes)
    assert np.array_equal(back.feature_codes, p.feature_codes)
    assert np.array_equal(back.labels, p.labels)
    assert back.bias == p.bias
    np.testing.assert_array_equal(back.alphas(), p.alphas())


def test_decode_rejects_trailing_bytes():
    data = blobs(40, 2, seed=1)
    p = client_local_round(data, kernel_for(data, 2), budget=4)
    with pytest.raises(ProtocolError):
        ClientPayload.decode(p.encode() + b"\0")


# -- client round -----------------------------------------------------------

def test_unbounded_budget_keeps_every_support_vector():
    data = blobs(80, 3, seed=2)
    k = kernel_for(data, 3)
    y = np.where(data.labels > 0, 1, -1)
    cfg = SvmConfig(C=1.0)
    local = solve_dual(k.gram(data.features), y, cfg)
    p = client_local_round(data, k, cfg, budget=10**6, bits=16)
    assert len(p) == local.n_support
    order = np.lexsort((local.sv_indices, -local.alphas))
    assert p.ids.tolist() == local.sv_indices[order].tolist()
    bound = local.alphas.max() / (2 * (2**16 - 1))
    assert np.all(np.abs(p.alphas() - local.alphas[order]) <= bound * (1 + 1e-9))
    assert np.all(p.alphas() <= max(local.box) + 1e-12)


def test_budget_one_keeps_the_largest_alpha():
    data = blobs(80, 3, seed=4)
    k = kernel_for(data, 3)
    local = solve_dual(k.gram(data.features), np.where(data.labels > 0, 1, -1))
    p = client_local_round(data, k, budget=1)
    best = np.lexsort((local.sv_indices, -local.alphas))[0]
    assert p.ids.tolist() == [local.sv_indices[best]]


def test_top_selection_breaks_ties_by_index():
    m = SvmModel(np.array([5, 2, 9, 7]), np.array([1.0, 2.0, 2.0, 1.0]),
                 np.array([1, -1, 1, -1]), 0.0, np.full(4, 2.0))
    assert select_top(m, 3).tolist() == [1, 2, 0]
    assert select_top(m, None).tolist() == [1, 2, 0, 3]


def test_balanced_selection_reserves_each_class():
    m = SvmModel(np.arange(6), np.array([5.0, 4.0, 3.0, 2.0, 1.0, 0.5]),
                 np.array([1, 1, 1, 1, -1, -1]), 0.0, np.full(6, 5.0))
    assert select_top(m, 2).tolist() == [0, 1]
    assert select_top(m, 2, balanced=True).tolist() == [0, 4]
    assert select_top(m, 4, balanced=True).tolist() == [0, 1, 4, 5]


def test_merging_duplicates_preserves_the_decision_function(rng):
    X = rng.integers(0, 2, (60, 3)).astype(float)
    y = np.where(rng.random(60) < 0.4, 1, -1)
    y[:2] = (1, -1)
    k = QuantumKernel(FeatureMapSpec(3, 2, rescale=Rescale.fit(X)))
    model = solve_dual(k.gram(X), y)
    merged = merge_duplicate_svs(model, X)
    assert merged.n_support <= 8
    assert len({content_hash(X[i]) for i in merged.sv_indices}) == merged.n_support
    T = rng.integers(0, 2, (10, 3)).astype(float)
    before = decision_values(model, k.cross_gram(T, X[model.sv_indices]))
    after = decision_values(merged, k.cross_gram(T, X[merged.sv_indices]))
    np.testing.assert_allclose(after, before, atol=1e-12)


def test_collapsed_solve_matches_the_full_dual(rng):
    X = rng.integers(0, 2, (80, 3)).astype(float)
    y = np.where(rng.random(80) < 0.4, 1, -1)
    y[:2] = (1, -1)
    k = QuantumKernel(FeatureMapSpec(3, 2, rescale=Rescale.fit(X)))
    cfg = SvmConfig(C=2.0, kkt_tolerance=1e-9)
    full = solve_dual(k.gram(X), y, cfg)
    reps, box = collapse_duplicates(X, y, cfg)
    assert len(reps) <= 16 and np.isclose(box.sum(), box_constraints(y, cfg).sum())
    small = solve_dual(k.gram(X[reps]), y[reps], cfg, box=box)
    # same optimum; the free-vector bias can differ within the solver tolerance
    assert abs(small.objective - full.objective) <= 1e-6
    T = rng.integers(0, 2, (10, 3)).astype(float)
    want = decision_values(full, k.cross_gram(T, X[full.sv_indices]))
    got = decision_values(small, k.cross_gram(T, X[reps][small.sv_indices]))
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_merge_flag_in_the_local_round_keeps_distinct_vectors(rng):
    X = rng.integers(0, 2, (80, 3)).astype(float)
    y = np.where(rng.random(80) < 0.4, 1, 0)
    k = QuantumKernel(FeatureMapSpec(3, 2, rescale=Rescale.fit(X)))
    p = client_local_round(WindowSet(X, y, np.arange(80)), k, budget=None, merge_duplicates=True)
    assert len(set(p.hashes)) == len(p.hashes) <= 8


def test_single_class_client_is_reported():
    data = WindowSet(np.zeros((4, 2)), np.zeros(4, dtype=np.int64), np.arange(4))
    with pytest.raises(SingleClassClientError):
        client_local_round(data, FeatureMapSpec(2), budget=2)


def test_empty_client_is_reported():
    data = WindowSet(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.arange(0))
    with pytest.raises(ProtocolError):
        client_local_round(data, FeatureMapSpec(2), budget=2)


# -- aggregation --------------------------------------------------------------

def _payloads(M, n=30, d=3, budget=4, seed=0):
    data = blobs(M * n, d, seed)
    split = partition(data, M, "shuffled", seed)
    k = kernel_for(data, 4)
    return [client_local_round(c, k, budget=budget, client_id=i) for i, c in enumerate(split.clients)], k


def test_single_client_global_gram_equals_recomputed_block():
    (p,), k = _payloads(1, budget=6)
    pool = _deduplicate([p])
    assert np.array_equal(global_gram(k, pool, 1), k.gram(p.features()))
    model = aggregate([p], k)
    direct = solve_dual(k.gram(p.features()), np.where(p.labels > 0, 1, -1))
    np.testing.assert_array_equal(model.alphas, direct.alphas)
    assert model.bias == direct.bias


def test_identical_vectors_from_two_clients_are_deduplicated():
    x = np.array([[0.2, 0.4], [0.9, 0.1]])
    common = dict(bits=8, alpha_lo=0.0, alpha_hi=1.0, feature_lo=np.zeros(2),
                  feature_hi=np.ones(2), bias=0.0, ids=np.array([0, 1], dtype=np.uint32),
                  labels=np.array([1, -1], dtype=np.int8), alpha_codes=np.array([255, 255]),
                  feature_codes=quantize(x, 16, 0, 1).codes)
    hashes = tuple(content_hash(r) for r in x)
    a = ClientPayload(client_id=0, hashes=hashes, **common)
    b = ClientPayload(client_id=1, hashes=hashes, **common)
    pool = _deduplicate([a, b])
    assert pool.owner.tolist() == [0, 0]
    model = aggregate([a, b], FeatureMapSpec(2))
    assert set(model.sv_owner.tolist()) == {0}


def test_hash_collision_is_a_hard_error():
    common = dict(bits=8, alpha_lo=0.0, alpha_hi=1.0, feature_lo=np.zeros(1),
                  feature_hi=np.ones(1), bias=0.0, ids=np.array([0], dtype=np.uint32),
                  labels=np.array([1], dtype=np.int8), alpha_codes=np.array([255]),
                  hashes=(1234,))
    a = ClientPayload(client_id=0, feature_codes=np.array([[0]]), **common)
    b = ClientPayload(client_id=1, feature_codes=np.array([[65535]]), **common)
    with pytest.raises(HashCollisionError):
        _deduplicate([a, b])


def test_global_gram_matches_pairwise_fidelities():
    payloads, k = _payloads(3, budget=4, seed=6)
    assert sum(len(p) for p in payloads) >= 10
    pool = _deduplicate(payloads)
    K = global_gram(k, pool, 3)
    states = [embed(k.spec, x) for x in pool.features]
    oracle = np.array([[fidelity(a, b) for b in states] for a in states])
    np.fill_diagonal(oracle, 1.0)
    np.testing.assert_allclose(K, oracle, atol=1e-12, rtol=0)
    assert np.array_equal(K, K.T)
    np.testing.assert_allclose(global_gram(k, pool, 3, "mean"), K / 3, atol=1e-15)


def test_aggregation_is_idempotent():
    payloads, k = _payloads(3, seed=8)
    a, b = aggregate(payloads, k), aggregate(payloads, k)
    assert np.array_equal(a.alphas, b.alphas) and a.bias == b.bias
    assert np.array_equal(a.sv_features, b.sv_features)


def test_every_global_sv_traces_to_one_record():
    payloads, k = _payloads(3, seed=9)
    model = aggregate(payloads, k)
    owners = {(p.client_id, int(i)) for p in payloads for i in p.ids}
    pairs = list(zip(model.sv_owner.tolist(), model.sv_ids.tolist()))
    assert len(set(pairs)) == len(pairs)
    assert all(pr in owners for pr in pairs)


def test_aggregate_without_records_fails():
    (p,), k = _payloads(1, budget=2)
    empty = ClientPayload(0, 8, 0.0, 0.0, p.feature_lo, p.feature_hi, 0.0,
                          np.zeros(0, np.uint32), (), np.zeros(0, np.int8),
                          np.zeros(0, np.uint32), np.zeros((0, p.dim), np.uint32))
    with pytest.raises(ProtocolError):
        aggregate([empty], k)


def test_single_class_pool_gives_constant_model():
    (p,), k = _payloads(1, budget=2)
    same = ClientPayload(p.client_id, p.bits, p.alpha_lo, p.alpha_hi, p.feature_lo,
                         p.feature_hi, p.bias, p.ids, p.hashes,
                         np.ones(len(p), dtype=np.int8), p.alpha_codes, p.feature_codes)
    with pytest.warns(RuntimeWarning):
        model = aggregate([same], k)
    assert model.n_support == 0 and model.bias == 1.0


# -- prediction ---------------------------------------------------------------

def test_prediction_at_a_lone_support_vector():
    x = np.array([0.3, -0.2])
    model = GlobalModel(np.zeros(1, int), np.zeros(1, int), x[None, :], np.ones(1),
                        np.ones(1, int), 0.0)
    assert abs(global_predict(model, FeatureMapSpec(2), x) - 1.0) <= 1e-12


def test_prediction_of_empty_model_is_bias():
    assert global_predict(GlobalModel.constant(-0.4, 3), FeatureMapSpec(3), np.ones(3)) == -0.4


def test_prediction_matches_direct_sum(rng):
    spec = FeatureMapSpec(3, 2)
    sv = rng.uniform(-1, 1, (5, 3))
    a = rng.uniform(0.1, 2, 5)
    lab = np.array([1, -1, 1, 1, -1])
    model = GlobalModel(np.zeros(5, int), np.arange(5), sv, a, lab, 0.25)
    x = rng.uniform(-1, 1, 3)
    sx = oracles.overlap
    states = [embed(spec, s) for s in sv]
    expect = sum(a[i] * lab[i] * sx(states[i], embed(spec, x)) for i in range(5)) + 0.25
    assert abs(global_predict(model, spec, x) - expect) <= 1e-12


def test_prediction_dimension_mismatch():
    model = GlobalModel(np.zeros(1, int), np.zeros(1, int), np.zeros((1, 2)), np.ones(1),
                        np.ones(1, int), 0.0)
    with pytest.raises(ValueError):
        global_predict(model, FeatureMapSpec(2), np.zeros(3))


# -- full protocol ------------------------------------------------------------

def test_single_client_ledger():
    data = blobs(60, 3, seed=11)
    k = kernel_for(data, 3)
    model, ledger = run_federation(ClientSplit([data]), k, params=ProtocolParams(budget=8))
    assert ledger.uplink == payload_size(8, 3, 8)
    assert ledger.downlink == broadcast_size(model.n_support, 3, 8)
    assert len(encode_broadcast(model, 8)) == ledger.downlink


def test_doubling_budget_increases_uplink():
    data = blobs(200, 3, seed=12)
    split = partition(data, 2)
    k = kernel_for(data, 3)
    _, small = run_federation(split, k, params=ProtocolParams(budget=4))
    _, large = run_federation(split, k, params=ProtocolParams(budget=8))
    assert large.uplink > small.uplink


def test_ledger_totals_match_layout():
    data = blobs(160, 4, seed=13)
    split = partition(data, 4)
    k = kernel_for(data, 4)
    model, ledger = run_federation(split, k, params=ProtocolParams(budget=5))
    assert ledger.uplink == 4 * payload_size(5, 4, 8)
    assert ledger.per_client("downlink") == {c: broadcast_size(model.n_support, 4, 8)
                                             for c in range(4)}
    assert ledger.to_csv().splitlines()[0] == "round,client,direction,bytes"


def test_uplink_is_independent_of_client_size():
    k = kernel_for(blobs(400, 3, seed=14), 3)
    _, a = run_federation(partition(blobs(200, 3, seed=14), 2), k, params=ProtocolParams(budget=6))
    _, b = run_federation(partition(blobs(400, 3, seed=14), 2), k, params=ProtocolParams(budget=6))
    assert a.uplink == b.uplink


def test_single_client_full_precision_matches_centralized():
    data = blobs(120, 3, seed=15)
    test = blobs(50, 3, seed=16)
    k = kernel_for(data, 3)
    params = ProtocolParams(budget=None, bits=16, full_precision=True)
    model, _ = run_federation(ClientSplit([data]), k, params=params)
    y = np.where(data.labels > 0, 1, -1)
    local = solve_dual(k.gram(data.features), y)
    sv = data.features[np.sort(local.sv_indices)]
    central = solve_dual(k.gram(sv), y[np.sort(local.sv_indices)])
    want = decision_values(central, k.cross_gram(test.features, sv[central.sv_indices]))
    got = global_predict_many(model, k, test.features)
    assert np.array_equal(np.sign(got), np.sign(want))


def test_skipped_client_warns_but_still_receives_broadcast():
    good = blobs(60, 2, seed=17)
    bad = WindowSet(np.ones((10, 2)), np.zeros(10, dtype=np.int64), np.arange(10))
    k = kernel_for(good, 2)
    with pytest.warns(RuntimeWarning, match="skipped"):
        _, ledger = run_federation(ClientSplit([good, bad]), k, params=ProtocolParams(budget=4))
    assert set(ledger.per_client("uplink")) == {0}
    assert set(ledger.per_client("downlink")) == {0, 1}


def test_threaded_and_sequential_runs_agree():
    data = blobs(240, 3, seed=18)
    split = partition(data, 3)
    k = kernel_for(data, 3)
    a, la = run_federation(split, k, params=ProtocolParams(budget=6, threads=1))
    b, lb = run_federation(split, k, params=ProtocolParams(budget=6, threads=3))
    assert np.array_equal(a.alphas, b.alphas) and la.rows == lb.rows


def test_protocol_params_validation():
    for bad in (dict(budget=0), dict(bits=17), dict(shots=0), dict(scale="sum"),
                dict(threads=0)):
        with pytest.raises(ValueError):
            ProtocolParams(**bad)


def test_ledger_rejects_unknown_direction():
    with pytest.raises(ValueError):
        CommLedger().record(0, 0, "sideways", 1)
