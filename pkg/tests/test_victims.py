import json
import threading

import numpy as np
import pytest

from autoda.core import QueryBudget, ShapeMismatch, is_adversarial
from autoda.engine import AttackConfig, ProgramProposal, run_attack
from autoda.dsl import built_in_final
from autoda.victims import (
    CountingOracle, HyperplaneOracle, Layer, LabelOutOfRange, MalformedFile, MlpOracle, SphereOracle,
    Unsupported, hyperplane_instances, load_cifar10_batch, load_mlp, mlp_label, optimal_adversarial_distance,
    save_mlp, select_starting_point, sphere_instances,
)

from oracles import hyperplane_optimum, sphere_optimum

# hand-set 2-layer relu net; logits below were worked out on paper
TWO_LAYER = {
    "class_count": 3,
    "layers": [
        {"weights": [[1, -1], [0.5, 0.5], [-1, 2]], "biases": [0, -0.25, 0.1], "activation": "relu"},
        {"weights": [[2, 0, -0.5], [0, 1, 1], [1, 1, 0]], "biases": [0.3, 0, 0], "activation": "none"},
    ],
}
PROBES = [
    ((0.2, 0.6), (-0.25, 1.25, 0.15), 1),
    ((0.9, 0.1), (1.9, 0.25, 1.05), 0),
    ((0.5, 0.5), (0.0, 0.85, 0.25), 1),
]


def test_hyperplane_optimum():
    oracle = HyperplaneOracle([1.0, 0.0], 0.5)
    assert optimal_adversarial_distance(oracle, np.array([0.2, 0.7])) == pytest.approx(0.3, abs=1e-15)


def test_sphere_optimum():
    c = np.full(3, 0.5)
    oracle = SphereOracle(c, 0.4)
    assert optimal_adversarial_distance(oracle, c) == 0.4
    x0 = c + np.array([0.1, 0.0, 0.0])
    assert optimal_adversarial_distance(oracle, x0) == pytest.approx(0.3, abs=1e-15)


def test_optimum_matches_independent_formula():
    for pair in hyperplane_instances(5, seed=3):
        o = pair.oracle
        assert optimal_adversarial_distance(o, pair.x0) == pytest.approx(hyperplane_optimum(o.w, o.b, pair.x0), rel=1e-12)
        assert optimal_adversarial_distance(o, pair.x0) == pytest.approx(0.4, rel=1e-12)
    for pair in sphere_instances(5, seed=3):
        o = pair.oracle
        assert optimal_adversarial_distance(o, pair.x0) == sphere_optimum(o.c, o.r, pair.x0)


def test_mlp_has_no_closed_form():
    with pytest.raises(Unsupported):
        optimal_adversarial_distance(MlpOracle.from_dict(TWO_LAYER), np.zeros(2))


@pytest.mark.parametrize("make", [
    lambda: hyperplane_instances(1, seed=8)[0],
    lambda: sphere_instances(1, seed=8)[0],
])
def test_label_flips_exactly_at_boundary(make):
    pair = make()
    direction = (pair.x1 - pair.x0) / np.linalg.norm(pair.x1 - pair.x0)
    t_star = optimal_adversarial_distance(pair.oracle, pair.x0)
    for t in np.linspace(0, 2 * t_star, 81):
        adv = is_adversarial(pair.oracle, pair.x0 + t * direction, pair.label, QueryBudget(1))
        if abs(t - t_star) > 1e-9:
            assert adv == (t > t_star)


def test_identity_net():
    net = MlpOracle([Layer(np.eye(2), np.zeros(2))])
    assert mlp_label(net, np.array([0.1, 0.9])) == 1
    assert mlp_label(net, np.array([0.5, 0.5])) == 0  # tie -> lowest index


def test_constant_net():
    net = MlpOracle([Layer(np.zeros((2, 4)), np.array([0.5, 0.2]))])
    rng = np.random.default_rng(0)
    assert all(net.label_of(rng.random(4)) == 0 for _ in range(20))


def test_two_layer_hand_fixture():
    net = MlpOracle.from_dict(TWO_LAYER)
    for x, logits, label in PROBES:
        np.testing.assert_allclose(net.logits(np.array(x)), logits, rtol=0, atol=1e-9)
        assert net.label_of(np.array(x)) == label


def test_mlp_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        MlpOracle.from_dict(TWO_LAYER).label_of(np.zeros(3))


def test_mlp_rejects_bad_layers():
    bad = json.loads(json.dumps(TWO_LAYER))
    bad["layers"][1]["weights"] = [[1, 0], [0, 1]]
    with pytest.raises(ValueError):
        MlpOracle.from_dict(bad)
    bad = json.loads(json.dumps(TWO_LAYER))
    bad["layers"][0]["activation"] = "tanh"
    with pytest.raises(ValueError):
        MlpOracle.from_dict(bad)


def test_mlp_file_round_trip(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(json.dumps(TWO_LAYER))
    net = load_mlp(path)
    save_mlp(net, tmp_path / "again.json")
    again = load_mlp(tmp_path / "again.json")
    for x, _, label in PROBES:
        assert again.label_of(np.array(x)) == label


def test_cifar_malformed(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(3074))
    with pytest.raises(MalformedFile):
        load_cifar10_batch(path)


def test_cifar_label_out_of_range(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes([10]) + bytes(3072))
    with pytest.raises(LabelOutOfRange):
        load_cifar10_batch(path)


def test_cifar_plane_order(tmp_path):
    # pixel byte i of a record lands at (i // 1024, (i % 1024) // 32, i % 32)
    pixels = np.zeros(3072, dtype=np.uint8)
    pixels[1024 + 32 * 5 + 7] = 255
    path = tmp_path / "one.bin"
    path.write_bytes(bytes([2]) + pixels.tobytes())
    (x, label), = load_cifar10_batch(path)
    assert x[1, 5, 7] == 1.0 and x.sum() == 1.0 and label == 2


def test_select_starting_point():
    x0 = np.zeros(2)
    pool = [(np.array([0.1, 0.0]), 0), (np.array([0.5, 0.5]), 1), (np.array([0.3, 0.0]), 2)]
    np.testing.assert_array_equal(select_starting_point(x0, 0, pool), [0.3, 0.0])
    with pytest.raises(ValueError):
        select_starting_point(x0, 0, pool[:1])


def test_counting_oracle_matches_budget():
    pair = hyperplane_instances(1, seed=1)[0]
    counter = CountingOracle(pair.oracle)
    trace = run_attack(counter, pair.x0, pair.x1, ProgramProposal(built_in_final()), AttackConfig(500), pair.label)
    assert counter.count == trace.queries == 500


def test_counting_oracle_thread_safe():
    counter = CountingOracle(SphereOracle(np.zeros(2), 1.0))

    def hammer():
        for _ in range(2000):
            counter.label_of(np.zeros(2))

    threads = [threading.Thread(target=hammer) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert counter.count == 8000


def test_instances_keep_box_inactive():
    for pair in sphere_instances(10, seed=5) + hyperplane_instances(10, seed=5):
        assert 0.05 <= pair.x1.min() and pair.x1.max() <= 0.95
        assert pair.oracle.label_of(pair.x1) != pair.label
        assert np.linalg.norm(pair.x1 - pair.x0) == pytest.approx(0.8)
