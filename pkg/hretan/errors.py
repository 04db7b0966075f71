"""Exception hierarchy.

Each class carries the process exit code the command line returns for it:
1 for parse/validation failures, 2 for configuration errors and 3 for
internal contract violations.
"""

from __future__ import annotations


class HreTanError(Exception):
    exit_code = 3

    def to_dict(self) -> dict:
        return {
            "type": "error",
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class HierarchyParseError(HreTanError):
    exit_code = 1

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CycleError(HreTanError):
    exit_code = 1

    def __init__(self, member: str):
        super().__init__(f"hierarchy contains a cycle through {member!r}")
        self.member = member


class UnknownFeatureError(HreTanError, KeyError):
    exit_code = 1

    def __init__(self, feature: str):
        super().__init__(f"unknown feature {feature!r}")
        self.feature = feature

    def __str__(self) -> str:
        return self.args[0]


class DatasetLoadError(HreTanError):
    exit_code = 1

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ColumnCountError(DatasetLoadError):
    pass


class NonBinaryValueError(DatasetLoadError):
    pass


class LabelCountError(DatasetLoadError):
    pass


class EmptyDatasetError(DatasetLoadError):
    pass


class InputEncodingError(HreTanError):
    exit_code = 1

    def __init__(self, path: object, offset: int):
        super().__init__(f"{path}: not valid UTF-8 at byte {offset}")
        self.offset = offset


class ReportFormatError(HreTanError):
    """A saved evaluation report that is not JSON or lacks a field."""

    exit_code = 1


class SchemaError(HreTanError):
    exit_code = 1


class ConsistencyError(HreTanError):
    exit_code = 1


class ConfigError(HreTanError):
    exit_code = 2


class FoldError(ConfigError):
    pass


class ContractError(HreTanError):
    exit_code = 3


class EmptyTrainingSetError(ContractError):
    pass


class UndefinedMetricError(HreTanError):
    exit_code = 1


class InsufficientDataError(HreTanError):
    exit_code = 1


class DegenerateVarianceError(HreTanError):
    exit_code = 1
