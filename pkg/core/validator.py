from typing import Any, Dict, Iterable, List, Optional, Tuple


class DiagnosisError(Exception):
    pass


class ValidationError(DiagnosisError):
    pass


class OntologyError(ValidationError):
    pass


class UnknownSymptomError(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"Unknown symptom: {name!r}")
        self.name = name


class UnknownGroupError(ValidationError):
    def __init__(self, group: str):
        super().__init__(f"Unknown group: {group!r}")
        self.group = group


class RecordError(ValidationError):
    def __init__(self, index: int, message: str):
        super().__init__(f"Record {index}: {message}")
        self.index = index


class ConfigError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class GoalSamplingError(DiagnosisError):
    def __init__(self, disease: str, attempts: int):
        super().__init__(f"No symptom sampled True for {disease!r} after {attempts} attempts")
        self.disease = disease


class EpisodeTerminatedError(DiagnosisError):
    pass


class NonFiniteGradientError(DiagnosisError):
    pass


class TrainingAbortedError(DiagnosisError):
    def __init__(self, message: str, last_checkpoint: Optional[str] = None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class SessionAborted(DiagnosisError):
    pass


VALID_STATUS_LABELS = {"True", "False", "UNK"}
RECORD_FIELDS = ("disease_tag", "group_id", "explicit_symptoms", "implicit_symptoms")


class OntologyValidator:
    """Structural checks on a raw ontology document (the JSON file contents)."""

    def validate_document(self, data: Any) -> Tuple[bool, Optional[str]]:
        if not isinstance(data, dict):
            return False, "Ontology must be a JSON object"

        for key in ("diseases", "symptoms", "groups"):
            if key not in data:
                return False, f"Ontology is missing field '{key}'"
            if not isinstance(data[key], list):
                return False, f"Ontology field '{key}' must be an array"

        for key in ("diseases", "symptoms"):
            is_valid, error = self.validate_unique(data[key], key)
            if not is_valid:
                return False, error

        group_ids = []
        for position, group in enumerate(data["groups"]):
            if not isinstance(group, dict) or "id" not in group:
                return False, f"Group {position} must be an object with an 'id'"
            for key in ("diseases", "symptoms"):
                if not isinstance(group.get(key, []), list):
                    return False, f"Group {group['id']!r} field '{key}' must be an array"
            group_ids.append(str(group["id"]))

        return self.validate_unique(group_ids, "groups")

    def validate_unique(self, names: Iterable[Any], label: str) -> Tuple[bool, Optional[str]]:
        seen = set()
        for name in names:
            if not isinstance(name, (str, int)) or str(name).strip() == "":
                return False, f"Invalid identifier in {label}: {name!r}"
            if name in seen:
                return False, f"Duplicate identifier in {label}: {name!r}"
            seen.add(name)
        return True, None

    def validate_partition(self, diseases: List[str], groups: Dict[str, List[str]]) -> Tuple[bool, Optional[str]]:
        """Every disease belongs to exactly one group."""
        owner: Dict[str, str] = {}
        for group, members in groups.items():
            for disease in members:
                if disease not in diseases:
                    return False, f"Group {group!r} lists unknown disease {disease!r}"
                if disease in owner:
                    return False, f"Disease {disease!r} is in groups {owner[disease]!r} and {group!r}"
                owner[disease] = group

        missing = [disease for disease in diseases if disease not in owner]
        if missing:
            return False, f"Diseases without a group: {', '.join(missing)}"
        return True, None


class RecordValidator:
    """Checks one dataset record (SD or RD layout) before it becomes a UserGoal."""

    def validate_record(self, record: Any) -> Tuple[bool, Optional[str]]:
        if not isinstance(record, dict):
            return False, "record must be a JSON object"

        for key in RECORD_FIELDS:
            if key not in record:
                return False, f"missing field '{key}'"

        if not isinstance(record["disease_tag"], str) or not record["disease_tag"].strip():
            return False, "disease_tag must be a non-empty string"

        for key in ("explicit_symptoms", "implicit_symptoms"):
            if not isinstance(record[key], dict):
                return False, f"'{key}' must be an object"

        if not record["explicit_symptoms"]:
            return False, "a record needs at least one explicit symptom"

        for name, label in record["explicit_symptoms"].items():
            if self.normalize_label(label) != "True":
                return False, f"explicit symptom {name!r} must be True, got {label!r}"

        for name, label in record["implicit_symptoms"].items():
            if self.normalize_label(label) is None:
                return False, f"implicit symptom {name!r} has invalid status {label!r}"
            if name in record["explicit_symptoms"]:
                return False, f"symptom {name!r} is both explicit and implicit"

        split = record.get("split")
        if split is not None and split not in ("train", "test"):
            return False, f"split must be 'train' or 'test', got {split!r}"

        return True, None

    def normalize_label(self, label: Any) -> Optional[str]:
        """Map RD/SD status spellings (JSON booleans included) onto True/False/UNK."""
        if label is True:
            return "True"
        if label is False:
            return "False"
        if isinstance(label, str):
            cleaned = label.strip()
            if cleaned in VALID_STATUS_LABELS:
                return cleaned
            lowered = cleaned.lower()
            if lowered == "true":
                return "True"
            if lowered == "false":
                return "False"
            if lowered in ("unk", "unknown", "not sure"):
                return "UNK"
        return None
