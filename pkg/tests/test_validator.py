import pytest

from core.validator import (
    DiagnosisError,
    OntologyValidator,
    RecordError,
    RecordValidator,
    UnknownSymptomError,
    ValidationError,
)


class TestOntologyValidator:
    @pytest.fixture
    def validator(self):
        return OntologyValidator()

    def test_validate_document_valid(self, validator, tiny_ontology):
        is_valid, error = validator.validate_document(tiny_ontology.to_dict())
        assert is_valid is True
        assert error is None

    def test_validate_document_invalid(self, validator):
        is_valid, error = validator.validate_document([])
        assert is_valid is False
        assert "JSON object" in error

        is_valid, error = validator.validate_document({"diseases": [], "symptoms": []})
        assert is_valid is False
        assert "groups" in error

        is_valid, error = validator.validate_document({"diseases": ["a", "a"], "symptoms": [], "groups": []})
        assert is_valid is False
        assert "Duplicate" in error

        is_valid, error = validator.validate_document({"diseases": [], "symptoms": [], "groups": [{"name": "x"}]})
        assert is_valid is False
        assert "'id'" in error

    def test_validate_partition(self, validator):
        assert validator.validate_partition(["a", "b"], {"1": ["a"], "2": ["b"]}) == (True, None)

        is_valid, error = validator.validate_partition(["a", "b"], {"1": ["a", "b"], "2": ["b"]})
        assert is_valid is False
        assert "'b'" in error

        is_valid, error = validator.validate_partition(["a", "b"], {"1": ["a"]})
        assert is_valid is False
        assert "without a group" in error


class TestRecordValidator:
    @pytest.fixture
    def validator(self):
        return RecordValidator()

    @pytest.fixture
    def record(self):
        return {
            "disease_tag": "flu",
            "group_id": "g1",
            "explicit_symptoms": {"fever": "True"},
            "implicit_symptoms": {"cough": "True", "chills": "False"},
        }

    def test_valid_record(self, validator, record):
        assert validator.validate_record(record) == (True, None)
        record["split"] = "test"
        assert validator.validate_record(record) == (True, None)

    def test_missing_field(self, validator, record):
        del record["implicit_symptoms"]
        is_valid, error = validator.validate_record(record)
        assert is_valid is False
        assert "implicit_symptoms" in error

    def test_explicit_must_be_true(self, validator, record):
        record["explicit_symptoms"] = {"fever": "False"}
        is_valid, error = validator.validate_record(record)
        assert is_valid is False
        assert "must be True" in error

    def test_empty_explicit(self, validator, record):
        record["explicit_symptoms"] = {}
        assert validator.validate_record(record)[0] is False

    def test_overlap_and_bad_labels(self, validator, record):
        record["implicit_symptoms"]["fever"] = "True"
        assert validator.validate_record(record)[0] is False

        record["implicit_symptoms"] = {"cough": "sometimes"}
        is_valid, error = validator.validate_record(record)
        assert is_valid is False
        assert "invalid status" in error

    def test_bad_split(self, validator, record):
        record["split"] = "dev"
        assert validator.validate_record(record)[0] is False

    def test_normalize_label(self, validator):
        assert validator.normalize_label(True) == "True"
        assert validator.normalize_label(False) == "False"
        assert validator.normalize_label(" true ") == "True"
        assert validator.normalize_label("UNK") == "UNK"
        assert validator.normalize_label("Not sure") == "UNK"
        assert validator.normalize_label(1) is None


class TestExceptions:
    def test_hierarchy(self):
        assert issubclass(ValidationError, DiagnosisError)
        assert issubclass(RecordError, ValidationError)

    def test_carried_fields(self):
        assert RecordError(7, "bad").index == 7
        assert "Record 7" in str(RecordError(7, "bad"))
        assert UnknownSymptomError("itch").name == "itch"
