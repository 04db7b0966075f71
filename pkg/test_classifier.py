import itertools

import numpy as np
import pandas as pd
import pytest

from hretan.classifier import (
    AlgorithmKind,
    classify_testset,
    fit_parameters,
    lazy_classify,
    posterior,
)
from hretan.dataset import Instance, make_dataset, restrict
from hretan.errors import ContractError, SchemaError
from hretan.hierarchy import build_closure, make_dag
from hretan.structure_learning import CandidateMode, EdgeSet, max_spanning_forest
from hretan.synthgen import SynthConfig, generate

FIG_EDGES = [("E", "F"), ("C", "E"), ("B", "F"), ("A", "F"), ("D", "A")]
FIG_ORDER = ("F", "B", "E", "C", "A", "D")


def _oracle_posterior(ds, parent_of, values):
    """Condition an explicitly enumerated joint distribution on the observed values."""
    frame = ds.frame
    features = list(parent_of)
    joint = {}
    for label in ds.labels:
        rows = frame[frame["class"] == label]
        prior = (len(rows) + 1) / (len(frame) + 2)
        for assignment in itertools.product((0, 1), repeat=len(features)):
            x = dict(zip(features, assignment))
            prob = prior
            for feature, parent in parent_of.items():
                given = rows if parent is None else rows[rows[parent] == x[parent]]
                prob *= ((given[feature] == x[feature]).sum() + 1) / (len(given) + 2)
            joint[(label, assignment)] = prob
    total = sum(joint.values())
    observed = tuple(values[f] for f in features)
    evidence = sum(joint[(label, observed)] for label in ds.labels)
    return total, {label: joint[(label, observed)] / evidence for label in ds.labels}


def _random_train(rng, n_rows, n_features=3):
    values = rng.integers(0, 2, size=(n_rows, n_features))
    frame = pd.DataFrame(values, columns=[f"X{i}" for i in range(n_features)])
    frame["class"] = rng.permutation(np.array(["neg", "pos"] * n_rows)[:n_rows])
    return make_dataset(frame)


def _flat(features):
    dag = make_dag(features)
    return dag, build_closure(dag)


def test_algorithm_modes():
    assert AlgorithmKind.TAN.mode is CandidateMode.ALL
    assert AlgorithmKind.HRE_TAN.mode is CandidateMode.ALL
    assert AlgorithmKind.HRE_TAN_MIX.mode is CandidateMode.MIX
    assert AlgorithmKind.HRE_TAN_PLUS.mode is CandidateMode.PLUS
    assert not AlgorithmKind.TAN.hierarchical
    assert AlgorithmKind("hre-tan-plus") is AlgorithmKind.HRE_TAN_PLUS


@pytest.mark.parametrize("seed", range(100))
def test_posterior_matches_joint_enumeration(seed):
    rng = np.random.default_rng(seed)
    train = _random_train(rng, int(rng.integers(4, 30)))
    pairs = [("X0", "X1"), ("X0", "X2"), ("X1", "X2")]
    weights = {pair: float(w) for pair, w in zip(pairs, rng.random(3))}
    forest = max_spanning_forest(EdgeSet.from_weights(train.features, weights))
    assert len(forest.features) == 3

    params = fit_parameters(restrict(train, forest.features), forest)
    inst = Instance(values={f: int(v) for f, v in zip(train.features, rng.integers(0, 2, 3))}, label="?")
    prediction = posterior(params, restrict(inst, forest.features))

    total, expected = _oracle_posterior(train, forest.parent_of, inst.values)
    assert total == pytest.approx(1.0, abs=1e-12)
    for label in train.labels:
        assert prediction.posterior[label] == pytest.approx(expected[label], abs=1e-9)
    assert sum(prediction.posterior.values()) == pytest.approx(1.0)


def test_fit_parameters_smoothing():
    frame = pd.DataFrame({"a": [1, 1, 0, 0, 0], "b": [1, 0, 0, 0, 1], "class": ["p", "p", "n", "n", "n"]})
    train = make_dataset(frame)
    forest = max_spanning_forest(EdgeSet.from_weights(("a", "b"), {("a", "b"): 0.5}))
    params = fit_parameters(train, forest, positive_class="p")
    assert params.class_prior == pytest.approx({"n": 4 / 7, "p": 3 / 7})
    assert params.root_cpt[("a", 1, "p")] == pytest.approx(3 / 4)
    assert params.root_cpt[("a", 1, "n")] == pytest.approx(1 / 5)
    assert params.edge_cpt[("b", 1, 1, "p")] == pytest.approx(2 / 4)
    assert params.edge_cpt[("b", 1, 0, "p")] == pytest.approx(1 / 2)
    assert params.edge_cpt[("b", 0, 0, "n")] == pytest.approx(3 / 5)
    assert params.positive_class == "p"


def test_fit_parameters_feature_mismatch():
    train = _random_train(np.random.default_rng(0), 10)
    forest = max_spanning_forest(EdgeSet.from_weights(train.features, {("X0", "X1"): 0.2}))
    with pytest.raises(ContractError):
        fit_parameters(train, forest)


def test_posterior_missing_value():
    train = _random_train(np.random.default_rng(1), 10)
    forest = max_spanning_forest(EdgeSet.from_weights(train.features, {("X0", "X1"): 0.2}))
    params = fit_parameters(restrict(train, forest.features), forest)
    with pytest.raises(ContractError):
        posterior(params, Instance(values={"X0": 1}, label="?"))


def _zero_train(n_pos, n_neg):
    frame = pd.DataFrame(
        {"A": [0] * (n_pos + n_neg), "B": [0] * (n_pos + n_neg), "class": ["pro"] * n_pos + ["anti"] * n_neg}
    )
    return make_dataset(frame)


def test_empty_structure_falls_back_to_prior():
    train = _zero_train(1, 3)
    dag = make_dag(["A", "B"], [("B", "A")])
    inst = Instance(values={"A": 0, "B": 0}, label="pro")
    prediction = lazy_classify(train, inst, AlgorithmKind.HRE_TAN_PLUS, dag, build_closure(dag))
    assert prediction.fallback
    assert prediction.used_features == ()
    assert prediction.label == "anti"
    assert prediction.posterior["anti"] == pytest.approx(4 / 6)


def test_tie_goes_to_smaller_label():
    train = _zero_train(2, 2)
    dag, closure = _flat(["A", "B"])
    inst = Instance(values={"A": 0, "B": 0}, label="pro")
    prediction = lazy_classify(train, inst, AlgorithmKind.HRE_TAN_PLUS, dag, closure)
    assert prediction.posterior == pytest.approx({"anti": 0.5, "pro": 0.5})
    assert prediction.label == "anti"


def test_figure_instance_under_plus_uses_prior_only():
    frame = pd.DataFrame([[1, 0, 1, 1, 0, 0, "pro"], [1, 1, 0, 0, 0, 0, "anti"]], columns=[*FIG_ORDER, "class"])
    train = make_dataset(frame)
    dag = make_dag(FIG_ORDER, FIG_EDGES)
    closure = build_closure(dag)
    plus = lazy_classify(train, train.instance(0), AlgorithmKind.HRE_TAN_PLUS, dag, closure)
    assert plus.fallback
    mix = lazy_classify(train, train.instance(0), AlgorithmKind.HRE_TAN_MIX, dag, closure)
    assert not mix.fallback
    for x, y in itertools.combinations(mix.used_features, 2):
        assert y not in closure.ancestors[x] and x not in closure.ancestors[y]


def test_separable_feature_is_learned():
    labels = np.array(["neg", "pos"] * 20)
    signal = (labels == "pos").astype(int)
    frame = pd.DataFrame({"X0": signal, "X1": np.ones(40, dtype=int), "X2": 1 - signal, "class": labels})
    ds = make_dataset(frame)
    dag, closure = _flat(ds.features)
    train, test = ds.subset(range(30)), ds.subset(range(30, 40))
    for algo in AlgorithmKind:
        predictions = classify_testset(train, test, algo, dag, closure)
        assert [p.label for p in predictions] == list(test.label_array), algo


def test_schema_mismatch():
    train = _random_train(np.random.default_rng(2), 10)
    dag, closure = _flat(["X0", "X1"])
    with pytest.raises(SchemaError):
        lazy_classify(train, train.instance(0), AlgorithmKind.TAN, dag, closure)


def test_empty_test_set():
    train = _random_train(np.random.default_rng(3), 10)
    dag, closure = _flat(train.features)
    assert classify_testset(train, train.subset([]), AlgorithmKind.TAN, dag, closure) == []


@pytest.mark.parametrize("seed", range(20))
def test_threaded_classification_matches_sequential(seed):
    dag, ds = generate(SynthConfig(n_features=15, n_instances=80, dependence_strength=0.7, seed=seed))
    closure = build_closure(dag)
    train, test = ds.subset(range(30)), ds.subset(range(30, 80))
    algo = [AlgorithmKind.TAN, AlgorithmKind.HRE_TAN, AlgorithmKind.HRE_TAN_MIX, AlgorithmKind.HRE_TAN_PLUS][seed % 4]
    sequential = classify_testset(train, test, algo, dag, closure, n_jobs=1)
    threaded = classify_testset(train, test, algo, dag, closure, n_jobs=4)
    assert len(sequential) == 50
    assert sequential == threaded


@pytest.mark.parametrize("seed", range(5))
def test_flat_hierarchy_hre_tan_equals_tan(seed):
    rng = np.random.default_rng(seed)
    ds = _random_train(rng, 40, n_features=5)
    dag, closure = _flat(ds.features)
    train, test = ds.subset(range(25)), ds.subset(range(25, 40))
    tan = classify_testset(train, test, AlgorithmKind.TAN, dag, closure)
    hre = classify_testset(train, test, AlgorithmKind.HRE_TAN, dag, closure)
    assert len(tan) == 15
    assert tan == hre
    assert [p.forest.selected_edges for p in tan] == [p.forest.selected_edges for p in hre]


@pytest.mark.parametrize("seed", range(10))
def test_used_features_follow_candidate_mode(seed):
    dag, ds = generate(SynthConfig(n_features=15, n_instances=60, dependence_strength=0.7, seed=seed))
    closure = build_closure(dag)
    train, test = ds.subset(range(40)), ds.subset(range(40, 60))
    for inst in test.instances:
        plus = lazy_classify(train, inst, AlgorithmKind.HRE_TAN_PLUS, dag, closure)
        assert all(inst.values[f] == 1 for f in plus.used_features)
        mix = lazy_classify(train, inst, AlgorithmKind.HRE_TAN_MIX, dag, closure)
        for edge in mix.forest.selected_edges:
            assert inst.values[edge.a] == 1 or inst.values[edge.b] == 1
        for prediction in (plus, mix):
            endpoints = {f for edge in prediction.forest.selected_edges for f in edge}
            assert set(prediction.used_features) == endpoints


@pytest.mark.parametrize("seed", range(10))
def test_all_positive_instance_mix_equals_plus(seed):
    dag, ds = generate(SynthConfig(n_features=12, n_instances=40, dependence_strength=0.5, seed=seed))
    closure = build_closure(dag)
    inst = Instance(values={f: 1 for f in ds.features}, label="pro")
    mix = lazy_classify(ds, inst, AlgorithmKind.HRE_TAN_MIX, dag, closure)
    plus = lazy_classify(ds, inst, AlgorithmKind.HRE_TAN_PLUS, dag, closure)
    assert mix == plus
    assert mix.forest.selected_edges == plus.forest.selected_edges


def _cmi(frame, labels, x, y):
    cells = {}
    for label in labels:
        rows = frame[frame["class"] == label]
        for va, vb in itertools.product((0, 1), repeat=2):
            cells[(label, va, vb)] = ((rows[x] == va) & (rows[y] == vb)).sum() + 1
    total = sum(cells.values())
    p = {key: count / total for key, count in cells.items()}
    mi = 0.0
    for (c, va, vb), pv in p.items():
        pc = sum(p[(c, i, j)] for i, j in itertools.product((0, 1), repeat=2))
        pac = p[(c, va, 0)] + p[(c, va, 1)]
        pbc = p[(c, 0, vb)] + p[(c, 1, vb)]
        mi += pv * np.log2(pv * pc / (pac * pbc))
    return mi


def _traced_structure(train, inst, algo, closure):
    """Candidate filter, scoring, greedy scan and rooting written out step by step."""
    order = list(train.features)
    related = {f: closure.ancestors[f] | closure.descendants[f] for f in order}
    candidates = []
    for i, j in itertools.combinations(range(len(order)), 2):
        x, y = order[i], order[j]
        positives = inst.values[x] + inst.values[y]
        if algo is AlgorithmKind.HRE_TAN_MIX and positives < 1:
            continue
        if algo is AlgorithmKind.HRE_TAN_PLUS and positives < 2:
            continue
        if algo.hierarchical and y in related[x]:
            continue
        candidates.append((-round(_cmi(train.frame, train.labels, x, y), 12), i, j))

    component = {f: f for f in order}
    blocked = set()
    accepted = []
    for _, i, j in sorted(candidates):
        x, y = order[i], order[j]
        if x in blocked or y in blocked or component[x] == component[y]:
            continue
        merged, into = component[y], component[x]
        component = {f: into if c == merged else c for f, c in component.items()}
        accepted.append((x, y))
        if algo.hierarchical:
            blocked |= related[x] | related[y]

    used = [f for f in order if any(f in edge for edge in accepted)]
    parent_of = {}
    for root in used:
        if root in parent_of:
            continue
        parent_of[root] = None
        queue = [root]
        while queue:
            node = queue.pop(0)
            neighbours = sorted(
                (b if a == node else a for a, b in accepted if node in (a, b)), key=order.index
            )
            for other in neighbours:
                if other not in parent_of:
                    parent_of[other] = node
                    queue.append(other)
    return {f: parent_of[f] for f in used}


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("algo", list(AlgorithmKind))
def test_lazy_classify_matches_traced_pipeline(seed, algo):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 2, size=(16, len(FIG_ORDER)))
    frame = pd.DataFrame(values, columns=list(FIG_ORDER))
    frame["class"] = rng.permutation(["anti"] * 8 + ["pro"] * 8)
    train = make_dataset(frame)
    dag = make_dag(FIG_ORDER, FIG_EDGES)
    closure = build_closure(dag)
    inst = Instance(values={f: int(v) for f, v in zip(FIG_ORDER, rng.integers(0, 2, len(FIG_ORDER)))}, label="?")

    parent_of = _traced_structure(train, inst, algo, closure)
    prediction = lazy_classify(train, inst, algo, dag, closure)
    assert dict(prediction.forest.parent_of) == parent_of
    assert set(prediction.used_features) == set(parent_of)
    assert prediction.fallback == (not parent_of)

    _, expected = _oracle_posterior(train, parent_of, inst.values)
    for label in train.labels:
        assert prediction.posterior[label] == pytest.approx(expected[label], abs=1e-9)
    if abs(expected["pro"] - expected["anti"]) > 1e-9:
        assert prediction.label == max(expected, key=expected.get)
