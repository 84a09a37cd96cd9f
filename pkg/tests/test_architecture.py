import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevo.architecture import (DEFAULT_LAYOUT, DecodedArchitecture, complexity, decode, encode,
                                genome_from_hex, genome_to_hex, mutate, random_genome)
from coevo.errors import EncodingError, RangeError

N_BITS = DEFAULT_LAYOUT.n_bits


def arch(features, layers):
    return DecodedArchitecture(tuple(features), tuple(layers))


def layer_bits(raw, act_bit):
    return [(raw >> (7 - j)) & 1 for j in range(8)] + [act_bit]


architectures = st.builds(
    lambda feats, s1, s2, a1, a2: arch(feats, [(s1, a1), (s2 if s1 or s2 else 1, a2)]),
    st.sets(st.integers(0, 67), min_size=1, max_size=68),
    st.integers(0, 128), st.integers(0, 128),
    st.sampled_from(["tansig", "logsig"]), st.sampled_from(["tansig", "logsig"]),
)


def test_default_genome_length():
    assert N_BITS == 86


def test_all_ones_genome_saturates():
    a = decode(np.ones(N_BITS, dtype=np.uint8))
    assert a.n_inputs == 68
    assert a.layers == ((128, "logsig"), (128, "logsig"))


def test_all_zeros_genome_is_repaired():
    a = decode(np.zeros(N_BITS, dtype=np.uint8))
    assert a.n_inputs == 1
    assert a.layers == ((1, "tansig"), (0, "tansig"))


def test_decode_hand_built_genome():
    g = np.zeros(N_BITS, dtype=np.uint8)
    g[[3, 17]] = 1
    g[68:77] = layer_bits(96, 0)
    a = decode(g)
    assert a.selected_features == (3, 17)
    assert a.layers == ((96, "tansig"), (0, "tansig"))


def test_wrong_length_is_encoding_error():
    with pytest.raises(EncodingError):
        decode(np.zeros(85, dtype=np.uint8))


def test_repair_feature_is_deterministic():
    g = np.zeros(N_BITS, dtype=np.uint8)
    g[68:77] = layer_bits(5, 1)
    assert decode(g) == decode(g.copy())
    assert decode(g).n_inputs == 1


def test_encode_round_trip_minimal():
    a = arch([0], [(1, "tansig"), (0, "tansig")])
    assert decode(encode(a)) == a


def test_encode_round_trip_boundary_size():
    a = arch([4, 9], [(128, "logsig"), (7, "tansig")])
    g = encode(a)
    assert g[68:76].tolist() == layer_bits(128, 0)[:8]
    assert decode(g) == a


def test_encode_rejects_oversized_layer():
    with pytest.raises(RangeError):
        encode(arch([0], [(129, "tansig"), (0, "tansig")]))


@settings(max_examples=1000, deadline=None)
@given(architectures)
def test_decode_encode_round_trip(a):
    assert decode(encode(a)) == a


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=N_BITS, max_size=N_BITS))
def test_decode_is_always_valid(bits):
    a = decode(np.array(bits, dtype=np.uint8))
    a.validate()
    assert a.n_inputs >= 1
    assert len(a.active_layers) >= 1


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=N_BITS, max_size=N_BITS))
def test_hex_round_trip(bits):
    g = np.array(bits, dtype=np.uint8)
    np.testing.assert_array_equal(genome_from_hex(genome_to_hex(g)), g)


def test_bad_hex_is_encoding_error():
    with pytest.raises(EncodingError):
        genome_from_hex("zz")
    with pytest.raises(EncodingError):
        genome_from_hex("00")


# ---- complexity --------------------------------------------------------------------

def test_complexity_selected_timeline1_architecture():
    c = complexity(arch(range(14), [(96, "tansig"), (0, "tansig")]))
    assert c == pytest.approx((14 / 68 + 1 / 2 + 96 / 128) / 3, abs=1e-15)
    assert c == pytest.approx(0.4853, abs=1e-4)


def test_complexity_selected_timeline2_architecture():
    assert complexity(arch(range(5), [(32, "tansig"), (0, "tansig")])) == pytest.approx(0.2745, abs=1e-4)


def test_complexity_full_resources():
    a = arch(range(68), [(128, "tansig"), (128, "logsig")])
    assert complexity(a) == pytest.approx(4 / 3)
    assert complexity(a, "normalized") == pytest.approx(1.0)


def test_unknown_complexity_mode():
    with pytest.raises(ValueError):
        complexity(arch([0], [(1, "tansig"), (0, "tansig")]), "other")


@settings(max_examples=300, deadline=None)
@given(architectures)
def test_complexity_ranges(a):
    assert 0 < complexity(a) <= 4 / 3 + 1e-12
    assert 0 <= complexity(a, "normalized") <= 1 + 1e-12


@settings(max_examples=300, deadline=None)
@given(architectures, st.integers(0, 67), st.integers(0, 1), st.integers(0, 128))
def test_complexity_is_monotone(a, feat, k, grow):
    for mode in ("literal", "normalized"):
        base = complexity(a, mode)
        more_feat = arch(set(a.selected_features) | {feat}, a.layers)
        assert complexity(more_feat, mode) >= base
        layers = list(a.layers)
        s, f = layers[k]
        layers[k] = (max(s, grow), f)
        assert complexity(arch(a.selected_features, layers), mode) >= base


def test_argmin_modes_can_disagree_with_one_active_layer():
    # size weight halves under the normalized mode, so the ranking can flip
    small_net = arch(range(7), [(64, "tansig"), (0, "tansig")])
    small_inputs = arch(range(27), [(13, "tansig"), (0, "tansig")])
    lit = [complexity(a) for a in (small_net, small_inputs)]
    norm = [complexity(a, "normalized") for a in (small_net, small_inputs)]
    assert np.argmin(lit) != np.argmin(norm)


def test_to_json_fields():
    d = arch([1, 2], [(3, "logsig"), (0, "tansig")]).to_json()
    assert d == {"features": [1, 2], "layers": [[3, "logsig"], [0, "tansig"]],
                 "complexity": pytest.approx((2 / 68 + 0.5 + 3 / 128) / 3)}


# ---- variation ------------------------------------------------------------------------

def test_mutate_rate_zero_is_identity(rng):
    g = random_genome(rng)
    np.testing.assert_array_equal(mutate(g, 0.0, rng), g)


def test_mutate_rate_one_complements(rng):
    g = random_genome(rng)
    np.testing.assert_array_equal(mutate(g, 1.0, rng), 1 - g)


def test_mutate_rejects_bad_rate(rng):
    with pytest.raises(ValueError):
        mutate(random_genome(rng), 1.5, rng)


def test_mutation_rate_one_over_n(rng):
    g = random_genome(rng)
    flips = [int(np.sum(mutate(g, 1 / N_BITS, rng) != g)) for _ in range(10_000)]
    assert np.mean(flips) == pytest.approx(1.0, abs=0.05)


def test_random_genome_bits_are_uniform(rng):
    G = np.array([random_genome(rng) for _ in range(2000)])
    assert G.shape == (2000, N_BITS)
    assert abs(G.mean() - 0.5) < 0.01
