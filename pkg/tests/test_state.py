import csv

import numpy as np
import pytest

from sensbo.errors import ConfigurationError, DomainError
from sensbo.probability import InputModel, MarginalDistribution, OutputTransform
from sensbo.state import (
    ADAPTIVE,
    DONE,
    S1,
    S2,
    S3,
    S4,
    TRAINING,
    VALIDATION,
    BoRecord,
    Dataset,
    SubspaceMask,
    WorkflowState,
)

IM = InputModel(
    (MarginalDistribution.uniform(0, 2), MarginalDistribution.discrete_uniform(1, 3)), ("a", "b")
)


def _data():
    d = Dataset.empty(2)
    U = np.array([[0.1, 0.2], [0.5, 0.5], [0.9, 0.8]])
    d.append(U, IM.to_physical(U), [0.3, 0.9, 0.6], TRAINING, S1)
    d.append([[0.4, 0.4]], IM.to_physical([[0.4, 0.4]]), [0.95], VALIDATION, S1)
    return d


def test_partitions_and_merge():
    d = _data()
    assert list(d.training_mask()) == [True, True, True, False]
    assert d.merge_validation() == 1
    assert d.training_mask().all()
    assert d.merge_validation() == 0


def test_best_and_top_k_ties():
    d = _data()
    assert d.best() == (3, 0.95)
    d.append([[0.2, 0.2]], [[0.4, 1.0]], [0.95], ADAPTIVE, S2)
    assert list(d.top_k(2)) == [3, 4]
    assert Dataset.empty(3).best()[0] is None


def test_append_validation():
    d = Dataset.empty(2)
    with pytest.raises(DomainError):
        d.append([[0.1, 0.1]], [[0.1, 0.1]], [1.0], "holdout", S1)
    with pytest.raises(DomainError):
        d.append([[0.1, 0.1]], [[0.1, 0.1]], [np.nan], TRAINING, S1)
    with pytest.raises(DomainError):
        d.append([[0.1, 0.1], [0.2, 0.2]], [[0.1, 0.1]], [1.0, 2.0], TRAINING, S1)


def test_mask_invariants_and_embedding():
    with pytest.raises(DomainError):
        SubspaceMask(np.zeros(3, bool), np.full(3, 0.5))
    with pytest.raises(DomainError):
        SubspaceMask(np.array([True, False]), np.array([0.5, 1.0]))
    m = SubspaceMask(np.array([True, False, True]), np.array([0.5, 0.3, 0.5]))
    assert np.array_equal(m.embed([[0.1, 0.9]]), [[0.1, 0.3, 0.9]])
    assert np.array_equal(m.apply([[0.2, 0.8, 0.4]]), [[0.2, 0.3, 0.4]])
    assert SubspaceMask.from_dict(m.to_dict()) == m
    assert m != SubspaceMask.full(3)


def test_stage_order_enforced():
    st = WorkflowState(IM, _data(), budget=10)
    st.advance(S2)
    st.advance(S3)
    with pytest.raises(ConfigurationError):
        st.advance(S2)
    st.advance(S4)
    st.advance(DONE)
    assert st.stage_history == [S1, S2, S3, S4]


def test_state_roundtrip(tmp_path):
    st = WorkflowState(IM, _data(), budget=12, seed=5, budget_used=4)
    st.output_transform = OutputTransform(MarginalDistribution.beta(2, 3, 0.2, 1.0))
    st.mask = SubspaceMask(np.array([True, False]), np.array([0.5, 0.25]))
    st.log.append(BoRecord(0, np.array([[0.2, 0.3]]), np.array([1.5]), np.array([0.7]), 0.95,
                           "Balanced", 1.0, S1, np.array([[0.4, 1.0]])))
    st.data.merge_validation()
    path = tmp_path / "state.json"
    st.save(path)
    back = WorkflowState.load(path)
    assert back.to_dict() == st.to_dict()
    assert back.remaining == 8
    assert np.array_equal(back.data.unit, st.data.unit)


def test_best_property_reports_both_coordinates():
    st = WorkflowState(IM, _data(), budget=10)
    u, x, v = st.best
    assert v == 0.95 and np.array_equal(u, [0.4, 0.4])
    assert np.array_equal(x, IM.to_physical([[0.4, 0.4]])[0])


def test_dataset_csv(tmp_path):
    d = _data()
    t = OutputTransform(MarginalDistribution.uniform(0.0, 1.0))
    d.write_csv(tmp_path / "d.csv", IM.names, t)
    rows = list(csv.DictReader(open(tmp_path / "d.csv")))
    assert len(rows) == 4
    assert set(rows[0]) == {"index", "u_a", "u_b", "a", "b", "response", "transformed",
                            "label", "stage", "merged"}
    assert float(rows[1]["transformed"]) == pytest.approx(np.log(0.9 / 0.1))
    assert rows[3]["label"] == VALIDATION
