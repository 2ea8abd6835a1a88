import json

import numpy as np
import pytest

from core.file_ops import FileOperations
from core.models import Ontology
from core.neuralnet import DenseNet, DenseNetSpec
from core.validator import RecordError, ValidationError


class TestFileOperations:
    @pytest.fixture
    def file_ops(self, temp_dir):
        return FileOperations(base_dir=temp_dir)

    def test_get_path(self, file_ops, temp_dir):
        assert file_ops.get_path("data.jsonl") == temp_dir / "data.jsonl"
        assert file_ops.get_path(temp_dir / "x.json") == temp_dir / "x.json"

    def test_missing_file(self, file_ops):
        with pytest.raises(ValidationError) as excinfo:
            file_ops.read_json("nothing.json")
        assert "File not found" in str(excinfo.value)

    def test_invalid_json(self, file_ops, temp_dir):
        (temp_dir / "broken.json").write_text("{not json")
        with pytest.raises(ValidationError):
            file_ops.read_json("broken.json")

    def test_write_json_creates_parents(self, file_ops, temp_dir):
        file_ops.write_json("nested/dir/out.json", {"b": 1, "a": 2})
        text = (temp_dir / "nested" / "dir" / "out.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_ontology_file(self, file_ops, tiny_ontology, temp_dir):
        file_ops.write_ontology("ontology.json", tiny_ontology)
        assert file_ops.read_ontology("ontology.json") == tiny_ontology
        # declaration order is kept on disk
        assert json.loads((temp_dir / "ontology.json").read_text())["diseases"][0] == "flu"

    def test_dataset_file(self, file_ops, tiny_dataset, tiny_ontology):
        file_ops.write_dataset("data.jsonl", tiny_dataset)
        loaded = file_ops.read_dataset("data.jsonl", tiny_ontology)
        assert loaded.goals == tiny_dataset.goals
        assert loaded.is_split

    def test_dataset_errors_carry_line_numbers(self, file_ops, temp_dir, tiny_ontology):
        good = {"disease_tag": "flu", "group_id": "g1", "explicit_symptoms": {"fever": "True"},
                "implicit_symptoms": {"cough": "False"}}
        bad = dict(good, implicit_symptoms={"cough": "perhaps"})
        (temp_dir / "bad.jsonl").write_text(json.dumps(good) + "\n\n" + json.dumps(bad) + "\n")
        with pytest.raises(RecordError) as excinfo:
            file_ops.read_dataset("bad.jsonl")
        assert excinfo.value.index == 3

        (temp_dir / "garbled.jsonl").write_text("{\n")
        with pytest.raises(RecordError) as excinfo:
            file_ops.read_dataset("garbled.jsonl")
        assert excinfo.value.index == 1

    def test_dataset_checked_against_ontology(self, file_ops, temp_dir, tiny_ontology):
        records = [
            {"disease_tag": "plague", "group_id": "g1", "explicit_symptoms": {"fever": "True"},
             "implicit_symptoms": {}},
            {"disease_tag": "flu", "group_id": "g1", "explicit_symptoms": {"itching": "True"},
             "implicit_symptoms": {}},
            {"disease_tag": "flu", "group_id": "g2", "explicit_symptoms": {"fever": "True"},
             "implicit_symptoms": {}},
        ]
        for position, record in enumerate(records):
            (temp_dir / f"r{position}.jsonl").write_text(json.dumps(record) + "\n")
            with pytest.raises(RecordError):
                file_ops.read_dataset(f"r{position}.jsonl", tiny_ontology)
            # without an ontology the record itself is well formed
            assert len(file_ops.read_dataset(f"r{position}.jsonl")) == 1

    def test_empty_dataset(self, file_ops, temp_dir):
        (temp_dir / "empty.jsonl").write_text("\n")
        with pytest.raises(ValidationError):
            file_ops.read_dataset("empty.jsonl")

    def test_rd_style_records(self, file_ops, temp_dir):
        record = {"disease_tag": "Infantile diarrhea", "group_id": None,
                  "explicit_symptoms": {"Diarrhea": True, "Vomiting": True},
                  "implicit_symptoms": {"Fever": False, "Cough": "UNK"}}
        (temp_dir / "rd.jsonl").write_text(json.dumps(record) + "\n")
        dataset = file_ops.read_dataset("rd.jsonl")
        assert dataset.goals[0].explicit == ("Diarrhea", "Vomiting")
        assert dataset.goals[0].group is None
        assert not dataset.is_split

    def test_network_file(self, file_ops):
        net = DenseNet.create(DenseNetSpec(widths=(3, 4, 2)), np.random.default_rng(0))
        file_ops.write_network("nets/master.net", net)
        assert file_ops.read_network("nets/master.net").to_bytes() == net.to_bytes()

    def test_csv(self, file_ops):
        file_ops.write_csv("curves.csv", ("epoch", "success"), [[1, 0.5], [2, 0.75]])
        rows = file_ops.read_csv("curves.csv")
        assert rows == [{"epoch": "1", "success": "0.5"}, {"epoch": "2", "success": "0.75"}]

    def test_write_text_ends_with_newline(self, file_ops, temp_dir):
        file_ops.write_text("t.txt", "line")
        assert (temp_dir / "t.txt").read_text() == "line\n"

    def test_effective_config(self, file_ops, temp_dir):
        path = file_ops.write_effective_config("train", {"seed": 3, "data": "d.jsonl"})
        assert path == temp_dir / "train.config.json"
        assert json.loads(path.read_text()) == {"data": "d.jsonl", "seed": 3}

    def test_table_file(self, file_ops, temp_dir):
        (temp_dir / "table.json").write_text(json.dumps({"groups": [
            {"id": "g1", "diseases": {"flu": {"fever": 0.9}}},
        ]}))
        table = file_ops.read_table("table.json")
        assert table.probabilities == {"flu": {"fever": 0.9}}
        assert isinstance(table.to_ontology(), Ontology)
