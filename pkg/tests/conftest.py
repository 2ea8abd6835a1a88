import shutil
import tempfile
from pathlib import Path

import pytest

from core.classifier import ClassifierConfig
from core.datagen import ConditionalProbabilityTable, generate_dataset, split_train_test
from core.models import SymptomStatus, UserGoal
from core.policy import AgentConfig
from core.rng import SeedStreams
from core.trainer import TrainConfig

from tests.helpers import TINY_TABLE


@pytest.fixture
def temp_dir():
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def tiny_table():
    return ConditionalProbabilityTable.from_dict(TINY_TABLE)


@pytest.fixture
def tiny_ontology(tiny_table):
    # symptoms: fever cough chills sneezing "runny nose" headache nausea "light sensitivity" diarrhea vomiting
    return tiny_table.to_ontology()


@pytest.fixture
def flu_goal():
    return UserGoal(
        disease="flu",
        group="g1",
        explicit=("fever",),
        implicit={"cough": SymptomStatus.TRUE, "chills": SymptomStatus.FALSE},
    )


@pytest.fixture
def tiny_dataset(tiny_table):
    dataset = generate_dataset(tiny_table, goals_per_disease=10, seed=3)
    return split_train_test(dataset, 0.8, SeedStreams(3).generator("split"))


@pytest.fixture
def tiny_config():
    agent = AgentConfig(hidden_sizes=(16,), batch_size=8, dropout=0.1, buffer_capacity=500)
    return TrainConfig(
        epochs=2,
        episodes_per_epoch=6,
        update_period=1,
        eval_sample_size=8,
        seed=5,
        master=agent,
        worker=agent,
        flat=agent,
        classifier=ClassifierConfig(hidden_size=16, batch_size=8, epochs_per_fit=1, pool_size=200),
    )

