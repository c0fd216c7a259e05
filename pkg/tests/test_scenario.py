from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clstream.dataset import DatasetManifest, PathRef, Sample, SynthSpec, synth_dataset
from clstream.errors import (
    ClassCoverageMismatch,
    DatasetMismatch,
    DimensionMismatch,
    EmptyMapList,
    EmptyTransformList,
    IncrementSumMismatch,
    InvalidSpec,
    MissingImageShape,
    MissingMetadata,
    ParseError,
    PartialRelabelMap,
    RefKindUnsupported,
    TaskIndexOutOfRange,
    TooManyTasks,
    UnevenIncrement,
    UnknownClass,
)
from clstream.scenario import (
    KINDS,
    LabelPolicy,
    ScenarioSpec,
    build_scenario,
    class_incremental,
    dumps_scenario,
    get_taskset,
    load_scenario,
    load_scenario_config,
    loads_scenario,
    scenario_spec_from_dict,
    write_scenario,
)
from clstream.transforms import IDENTITY, Permutation, Rotation

from conftest import make_manifest
from scenario_oracles import check_invariants, random_case


def ci(increments, **kw):
    return ScenarioSpec("class_incremental", increments=increments, **kw)


# -- class incremental -----------------------------------------------------


def test_ten_classes_increment_two(synth10):
    sc = build_scenario(synth10, ci((2,)))
    assert sc.nb_tasks == 5 and sc.nb_classes == 10
    assert [t.classes for t in sc.tasks] == [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
    assert all(len(t.indices) == 40 for t in sc.tasks)


def test_class_incremental_shorthand(synth10):
    sc = class_incremental(synth10, increment=2)
    assert (sc.nb_tasks, sc.nb_classes) == (5, 10)


def test_initial_increment(synth10):
    sc = build_scenario(synth10, ci((1,), initial_increment=5))
    assert [len(t.classes) for t in sc.tasks] == [5, 1, 1, 1, 1, 1]


def test_uneven_increment(synth10):
    with pytest.raises(UnevenIncrement):
        build_scenario(synth10, ci((3,)))
    with pytest.raises(UnevenIncrement):
        build_scenario(synth10, ci((2,), initial_increment=5))


def test_explicit_increments(synth10):
    sc = build_scenario(synth10, ci((3, 3, 4)))
    assert [t.classes for t in sc.tasks] == [(0, 1, 2), (3, 4, 5), (6, 7, 8, 9)]
    with pytest.raises(IncrementSumMismatch):
        build_scenario(synth10, ci((3, 3, 3)))
    with pytest.raises(IncrementSumMismatch):
        build_scenario(synth10, ci((1,), initial_increment=11))


def test_class_order(synth10):
    order = (9, 8, 7, 6, 5, 4, 3, 2, 1, 0)
    sc = build_scenario(synth10, ci((2,), class_order=order))
    assert sc.tasks[0].classes == (8, 9)
    assert sc.tasks[0].indices == tuple(range(160, 200))
    with pytest.raises(UnknownClass):
        build_scenario(synth10, ci((2,), class_order=(0, 1, 2, 3, 4, 5, 6, 7, 8, 10)))
    with pytest.raises(InvalidSpec):
        build_scenario(synth10, ci((2,), class_order=(0, 1, 2)))


def test_random_class_order_is_seeded(synth10):
    a = build_scenario(synth10, ci((2,), class_order="random", seed=4))
    b = build_scenario(synth10, ci((2,), class_order="random", seed=4))
    c = build_scenario(synth10, ci((2,), class_order="random", seed=5))
    assert a.tasks == b.tasks
    assert [t.classes for t in a.tasks] != [t.classes for t in c.tasks]
    assert sorted(x for t in a.tasks for x in t.classes) == list(range(10))


# -- instance incremental --------------------------------------------------


def test_instance_incremental_random(synth10):
    sc = build_scenario(synth10, ScenarioSpec("instance_incremental", nb_tasks=4, seed=1))
    assert sc.nb_tasks == 4
    for task in sc.tasks:
        assert task.classes == tuple(range(10))
        counts = np.bincount(synth10.labels[list(task.indices)], minlength=10)
        assert counts.tolist() == [5] * 10


def test_instance_incremental_metadata():
    ds = make_manifest([0, 1, 0, 1, 1, 0], meta_ids=[2, 0, 1, 1, 2, 0])
    sc = build_scenario(ds, ScenarioSpec("instance_incremental", metadata_key=True))
    assert [t.indices for t in sc.tasks] == [(1, 5), (2, 3), (0, 4)]


def test_instance_incremental_errors():
    ds = make_manifest(list(range(10)) * 3)
    with pytest.raises(TooManyTasks):
        build_scenario(ds, ScenarioSpec("instance_incremental", nb_tasks=4))
    with pytest.raises(MissingMetadata):
        build_scenario(ds, ScenarioSpec("instance_incremental", metadata_key=True))
    partial = make_manifest([0, 1, 0], meta_ids=[0, 0, 1])
    with pytest.raises(ClassCoverageMismatch):
        build_scenario(partial, ScenarioSpec("instance_incremental", metadata_key=True))
    with pytest.raises(InvalidSpec):
        build_scenario(ds, ScenarioSpec("instance_incremental"))


# -- NIC -------------------------------------------------------------------


def test_nic_new_classes():
    labels = [0, 1, 0, 1, 0, 1, 2, 2]
    metas = [0, 0, 1, 1, 2, 2, 2, 2]
    ds = make_manifest(labels, meta_ids=metas)
    sc = build_scenario(ds, ScenarioSpec("nic", metadata_key=True))
    # set-difference oracle over the fixture
    seen, expected = set(), []
    for m in sorted(set(metas)):
        present = {l for l, mm in zip(labels, metas) if mm == m}
        expected.append(tuple(sorted(present - seen)))
        seen |= present
    assert [t.new_classes for t in sc.tasks] == expected == [(0, 1), (), (2,)]
    assert sc.nb_tasks == 3


def test_nic_single_session_and_missing_meta():
    ds = make_manifest([0, 1, 2], meta_ids=[0, 0, 0])
    sc = build_scenario(ds, ScenarioSpec("nic"))
    assert sc.nb_tasks == 1 and sc.tasks[0].indices == (0, 1, 2)
    with pytest.raises(MissingMetadata):
        build_scenario(make_manifest([0, 1]), ScenarioSpec("nic"))


# -- transformation --------------------------------------------------------


def test_rotation_scenario(synth_images):
    transforms = tuple(Rotation(float(a), 5, 5) for a in range(0, 360, 45))
    sc = build_scenario(synth_images, ScenarioSpec("transformation", transforms=transforms))
    assert sc.nb_tasks == 8
    assert all(t.indices == tuple(range(len(synth_images))) for t in sc.tasks)
    assert [t.transform.degrees for t in sc.tasks] == [0, 45, 90, 135, 180, 225, 270, 315]


def test_identity_transform_task_equals_dataset(synth_images):
    sc = build_scenario(synth_images, ScenarioSpec("transformation", transforms=(IDENTITY,)))
    x, y, _ = get_taskset(sc, 0).materialize()
    assert np.array_equal(x, synth_images.matrix)
    assert np.array_equal(y, synth_images.labels)


def test_transformation_errors(synth10, synth_images):
    with pytest.raises(EmptyTransformList):
        build_scenario(synth_images, ScenarioSpec("transformation", transforms=()))
    with pytest.raises(MissingImageShape):
        build_scenario(synth10, ScenarioSpec("transformation", transforms=(Rotation(90.0, 4, 4),)))
    with pytest.raises(DimensionMismatch):
        build_scenario(synth10, ScenarioSpec("transformation", transforms=(Permutation(0, 15),)))
    paths = DatasetManifest("p", "train", (Sample(0, PathRef("a"), 0),), 4)
    with pytest.raises(RefKindUnsupported):
        build_scenario(paths, ScenarioSpec("transformation", transforms=(IDENTITY,)))


# -- label drift -----------------------------------------------------------


def test_label_drift(synth10):
    ident = {c: c for c in range(10)}
    swap = {**ident, 0: 1, 1: 0}
    sc = build_scenario(synth10, ScenarioSpec("label_drift", relabel_maps=(ident, swap)))
    first = 0  # a sample labelled 0
    assert get_taskset(sc, 0)[first][1] == 0
    assert get_taskset(sc, 1)[first][1] == 1
    with pytest.raises(PartialRelabelMap):
        build_scenario(synth10, ScenarioSpec("label_drift", relabel_maps=({c: c for c in range(9)},)))
    with pytest.raises(EmptyMapList):
        build_scenario(synth10, ScenarioSpec("label_drift", relabel_maps=()))


# -- task sets and label policy --------------------------------------------


def test_get_taskset(synth10):
    sc = build_scenario(synth10, ci((2,)))
    ts = get_taskset(sc, 0)
    assert set(ts.labels.tolist()) == {0, 1}
    with pytest.raises(TaskIndexOutOfRange):
        get_taskset(sc, 5)
    with pytest.raises(TaskIndexOutOfRange):
        get_taskset(sc, -1)
    assert [ts.exposed_task_id for ts in sc] == [0, 1, 2, 3, 4]


def test_hidden_test_task_labels():
    spec = SynthSpec(4, 3, 2, seed=1)
    test = synth_dataset(spec, "test")
    policy = LabelPolicy(train_task_labels=True, test_task_labels=False)
    sc = build_scenario(test, ci((2,), label_policy=policy))
    assert all(t == -1 for _, _, t in get_taskset(sc, 1))
    train_sc = build_scenario(synth_dataset(spec, "train"), ci((2,), label_policy=policy))
    assert get_taskset(train_sc, 1)[0][2] == 1


def test_spec_rejects_irrelevant_fields():
    with pytest.raises(InvalidSpec):
        ScenarioSpec("nic", increments=(2,))
    with pytest.raises(InvalidSpec):
        ScenarioSpec("bogus")
    with pytest.raises(InvalidSpec):
        ScenarioSpec("class_incremental", increments=(0,))


# -- properties ------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_invariants_hold_for_random_cases(kind, seed):
    ds, spec = random_case(kind, np.random.default_rng(seed))
    check_invariants(ds, spec)


@given(seed=st.integers(0, 2**32 - 1), perm_seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_class_order_permutation_keeps_task_sizes(seed, perm_seed):
    ds, spec = random_case("class_incremental", np.random.default_rng(seed))
    order = tuple(np.random.default_rng(perm_seed).permutation(ds.class_set).tolist())
    base = build_scenario(ds, spec)
    other = build_scenario(ds, ScenarioSpec(spec.kind, increments=spec.increments,
                                            initial_increment=spec.initial_increment, class_order=order))
    assert other.nb_tasks == base.nb_tasks
    assert [len(t.classes) for t in other.tasks] == [len(t.classes) for t in base.tasks]


# -- config and scenario manifests -----------------------------------------


def test_config_file(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(
        'kind = "transformation"\nseed = 3\ntransforms = ["rot:0", "rot:45", "perm:1:25"]\n'
        "[label_policy]\ntest_task_labels = false\n"
    )
    spec = load_scenario_config(path, (5, 5))
    assert spec.transforms == (Rotation(0.0, 5, 5), Rotation(45.0, 5, 5), Permutation(1, 25))
    assert spec.label_policy == LabelPolicy(True, False)


def test_config_from_dict():
    spec = scenario_spec_from_dict({"kind": "label_drift", "relabel_maps": [{"0": 1, "1": 0}]})
    assert spec.relabel_maps == ({0: 1, 1: 0},)
    assert scenario_spec_from_dict({"kind": "class_incremental", "increment": 2}).increments == (2,)
    with pytest.raises(ParseError):
        scenario_spec_from_dict({"kind": "nic", "colour": "blue"})
    with pytest.raises(ParseError):
        scenario_spec_from_dict({"increments": [2]})


def test_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("kind = \n")
    with pytest.raises(ParseError):
        load_scenario_config(path)


@pytest.mark.parametrize("kind", KINDS)
def test_scenario_manifest_round_trip(tmp_path, kind):
    ds, spec = random_case(kind, np.random.default_rng(17))
    sc = build_scenario(ds, spec)
    text = dumps_scenario(sc)
    back = loads_scenario(text, ds)
    assert back.tasks == sc.tasks
    assert back.spec.label_policy == sc.spec.label_policy
    assert dumps_scenario(back) == text


def test_scenario_file_records_dataset_path(tmp_path, synth10):
    from clstream.dataset import write_manifest

    (tmp_path / "data").mkdir()
    dpath = tmp_path / "data" / "train.manifest"
    write_manifest(synth10, dpath)
    spath = tmp_path / "ci.scenario"
    write_scenario(build_scenario(synth10, ci((5,))), spath, dpath)
    assert "\tdata/train.manifest\t" in spath.read_text().splitlines()[0]
    assert load_scenario(spath).nb_tasks == 2


def test_scenario_load_detects_dataset_change(synth10):
    text = dumps_scenario(build_scenario(synth10, ci((2,))))
    other = synth_dataset(SynthSpec(10, 20, 16, seed=8))
    with pytest.raises(DatasetMismatch):
        loads_scenario(text, other)


def test_scenario_load_rejects_corruption(synth10):
    text = dumps_scenario(build_scenario(synth10, ci((2,))))
    lines = text.splitlines(keepends=True)
    with pytest.raises(ParseError):
        loads_scenario("".join(lines[:-1]), synth10)  # dropped task
    with pytest.raises(ParseError):
        loads_scenario(text[:-5], synth10)  # cut mid-line
    with pytest.raises(ParseError):
        loads_scenario(text.replace("\t0,1\t0,1\t", "\t0,2\t0,2\t", 1), synth10)
