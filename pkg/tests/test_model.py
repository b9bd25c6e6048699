import dataclasses
import random
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gen
import oracle
from provstamp.errors import (
    FidelityMismatch,
    InvalidRecord,
    MissingField,
    TimestampRegression,
    TimestampRegressionWarning,
    UnknownTargetVersion,
)
from provstamp.model import (
    REQUIRED_FIELDS,
    Agent,
    Annotation,
    DatasetDescriptor,
    ProvenanceRecord,
    TransformationEvent,
    append_revision,
    append_transformation,
    effective_view,
    new_record,
    person,
    validate_record,
)
from provstamp.samples import dogs_record

BOB = person("bob")


def real_record(**kw):
    base = dict(
        name="street",
        creator=BOB,
        method_of_collection="camera",
        date_created="2025-01-01T00:00:00Z",
        encoding_format="image/jpeg",
        fidelity="real",
    )
    base.update(kw)
    return new_record(**base)


def event(ts, kind="cropping"):
    return TransformationEvent(kind, BOB, ts)


def test_golden_record_is_valid():
    report = validate_record(dogs_record(), "strict")
    assert report.valid and not report.violations


@pytest.mark.parametrize("attr", list(REQUIRED_FIELDS))
def test_new_record_requires_each_core_field(attr):
    kw = dict(
        name="a", creator=BOB, method_of_collection="camera",
        date_created="2025-01-01T00:00:00Z", encoding_format="image/png", fidelity="real",
    )
    kw[attr] = None
    with pytest.raises(MissingField) as exc:
        new_record(**kw)
    assert exc.value.field == REQUIRED_FIELDS[attr]


@pytest.mark.parametrize("attr", list(REQUIRED_FIELDS))
def test_missing_core_field_gives_one_error(attr):
    rec = dataclasses.replace(dogs_record(), **{attr: None})
    errors = validate_record(rec).errors
    assert [(e.code, e.path) for e in errors] == [("missing-field", REQUIRED_FIELDS[attr])]


def test_fidelity_must_match_generation():
    with pytest.raises(FidelityMismatch):
        real_record(fidelity="synthetic")
    g = dogs_record().generation
    with pytest.raises(FidelityMismatch):
        real_record(generation=g)


def test_timestamps_are_normalized_to_utc():
    r = real_record(date_created="2025-03-02T10:31:00+01:00")
    assert r.date_created == "2025-03-02T09:31:00Z"


def test_offset_timestamp_is_a_strict_error_only():
    r = dataclasses.replace(real_record(), date_created="2025-03-02T10:31:00+01:00")
    assert validate_record(r).valid
    assert [v.code for v in validate_record(r).warnings] == ["timestamp-not-normalized"]
    assert [v.code for v in validate_record(r, "strict").errors] == ["timestamp-not-normalized"]


def test_timestamp_without_offset_is_rejected():
    r = dataclasses.replace(real_record(), date_created="2025-03-02T09:31:00")
    assert [v.code for v in validate_record(r).errors] == ["bad-timestamp"]


def test_proportions_must_sum_to_one():
    r = real_record(dataset=DatasetDescriptor("d", {"Dog": 0.5, "Cat": 0.5}))
    assert validate_record(r).valid
    bad = dataclasses.replace(r, dataset=DatasetDescriptor("d", {"Dog": 0.5, "Cat": 0.4}))
    (err,) = validate_record(bad).errors
    assert err.code == "proportion-sum" and "0.9" in err.message
    with pytest.raises(InvalidRecord):
        real_record(dataset=DatasetDescriptor("d", {"Dog": 0.5, "Cat": 0.4}))


def test_bbox_order_checked_for_numeric_boxes():
    assert validate_record(real_record(annotations=[Annotation("Dog", (1, 2, 3, 4))])).valid
    with pytest.raises(InvalidRecord):
        real_record(annotations=[Annotation("Dog", (3, 2, 1, 4))])
    with pytest.raises(InvalidRecord):
        real_record(annotations=[Annotation("Dog", (1, 2, 3))])


def test_append_transformation_attributes_current_version():
    r = append_transformation(real_record(), event("2025-01-02T00:00:00Z"))
    r = append_revision(r, "modify", BOB, timestamp="2025-01-03T00:00:00Z")
    r = append_transformation(r, event("2025-01-04T00:00:00Z"))
    assert [e.revision_version for e in r.transformations] == [0, 1]


def test_timestamp_regression_strict_and_lenient():
    r = append_transformation(real_record(), event("2025-01-05T00:00:00Z"))
    with pytest.raises(TimestampRegression):
        append_transformation(r, event("2025-01-04T00:00:00Z"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r2 = append_transformation(r, event("2025-01-04T00:00:00Z"), strict=False)
    assert len(r2.transformations) == 2
    assert any(issubclass(w.category, TimestampRegressionWarning) for w in caught)
    assert [v.code for v in validate_record(r2).warnings] == ["timestamp-regression"]


def test_revision_numbering_and_revert_target():
    r = real_record()
    r = append_revision(r, "add-data", BOB, timestamp="2025-01-02T00:00:00Z")
    r = append_revision(r, "remove-data", BOB, timestamp="2025-01-03T00:00:00Z")
    assert [v.version for v in r.revisions] == [1, 2]
    with pytest.raises(UnknownTargetVersion):
        append_revision(r, "revert", BOB, target_version=5)
    with pytest.raises(UnknownTargetVersion):
        append_revision(r, "revert", BOB)
    r = append_revision(r, "revert", BOB, target_version=1, timestamp="2025-01-04T00:00:00Z")
    assert r.current_version == 3 and r.revisions[-1].target_version == 1


def test_effective_view_drops_reverted_events():
    ts = iter(f"2025-02-{d:02d}T00:00:00Z" for d in range(1, 29))
    r = real_record()
    r = append_transformation(r, event(next(ts), "cleaning"))
    r = append_revision(r, "add-data", BOB, timestamp=next(ts))
    r = append_transformation(r, event(next(ts), "resizing"))
    r = append_revision(r, "modify", BOB, timestamp=next(ts))
    r = append_transformation(r, event(next(ts), "cropping"))
    r = append_revision(r, "revert", BOB, target_version=1, timestamp=next(ts))
    r = append_transformation(r, event(next(ts), "labeling"))
    view = effective_view(r)
    assert [e.event_type for e in view.transformations] == ["cleaning", "resizing", "labeling"]
    assert view.revisions == r.revisions
    assert len(r.transformations) == 4  # history itself untouched


def test_effective_view_after_chained_reverts():
    ts = iter(f"2025-02-{d:02d}T00:00:00Z" for d in range(1, 29))
    r = real_record()
    r = append_revision(r, "add-data", BOB, timestamp=next(ts))  # v1
    r = append_transformation(r, event(next(ts), "cleaning"))
    r = append_revision(r, "modify", BOB, timestamp=next(ts))  # v2
    r = append_transformation(r, event(next(ts), "resizing"))
    r = append_revision(r, "revert", BOB, target_version=1, timestamp=next(ts))  # v3 = v1
    r = append_transformation(r, event(next(ts), "cropping"))
    r = append_revision(r, "revert", BOB, target_version=2, timestamp=next(ts))  # v4 = v2
    view = effective_view(r)
    assert [e.event_type for e in view.transformations] == ["cleaning", "resizing"]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_effective_view_matches_replay(seed):
    rng = random.Random(seed)
    r = gen.random_history(rng, gen.record(rng, history=False), gen.EPOCH.replace(year=2031), steps=(0, 12))
    assert list(effective_view(r).transformations) == oracle.replay_history(r)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_generated_records_validate(seed):
    r = gen.record(random.Random(seed))
    assert validate_record(r, "strict").valid


def test_records_are_immutable():
    r = dogs_record()
    with pytest.raises(dataclasses.FrozenInstanceError):
        r.name = "other"
    with pytest.raises(TypeError):
        r.generation.extra["x"] = 1


def test_validate_never_raises_on_garbage():
    junk = ProvenanceRecord(
        name=3, creator="nobody", date_created="yesterday", encoding_format="png",
        fidelity="imaginary", annotations=["dog"], revisions=[5], transformations=[None],
    )
    report = validate_record(junk)
    assert not report.valid
    assert {"bad-timestamp", "bad-mime", "bad-enum"} <= {v.code for v in report.errors}


def test_agent_types():
    assert validate_record(real_record(creator=Agent("acme", "organization"))).valid
    bad = dataclasses.replace(real_record(), creator=Agent("x", "robot"))
    assert not validate_record(bad).valid
