"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` and the CLI exit
status it maps to (2 config, 3 data, 4 numeric).
"""
from __future__ import annotations


class TriageError(Exception):
    code = "TriageError"
    exit_code = 1

    def __init__(self, message: str = "", **context):
        self.context = context
        super().__init__(message or self.code)


class ConfigError(TriageError):
    code = "ConfigError"
    exit_code = 2


class DataError(TriageError):
    code = "DataError"
    exit_code = 3


class NumericError(TriageError):
    code = "NumericError"
    exit_code = 4


def _make(name: str, base: type) -> type:
    return type(name, (base,), {"code": name})


# config
InvalidConfig = _make("InvalidConfig", ConfigError)
BadK = _make("BadK", ConfigError)
BadRate = _make("BadRate", ConfigError)
NonPositiveDelta = _make("NonPositiveDelta", ConfigError)
TooFewSamples = _make("TooFewSamples", ConfigError)
TooManyGroups = _make("TooManyGroups", ConfigError)

# data
MissingColumn = _make("MissingColumn", DataError)
NonBinaryLabel = _make("NonBinaryLabel", DataError)
MissingBasicValue = _make("MissingBasicValue", DataError)
UnknownCategory = _make("UnknownCategory", DataError)
DuplicateId = _make("DuplicateId", DataError)
TestTooLarge = _make("TestTooLarge", DataError)
EmptyFit = _make("EmptyFit", DataError)
SchemaMismatch = _make("SchemaMismatch", DataError)
WidthMismatch = _make("WidthMismatch", DataError)
LengthMismatch = _make("LengthMismatch", DataError)
EmptyGroup = _make("EmptyGroup", DataError)
EmptyBackground = _make("EmptyBackground", DataError)
EmptyCurve = _make("EmptyCurve", DataError)
AdvancedFeaturesRequired = _make("AdvancedFeaturesRequired", DataError)
LeakageError = _make("LeakageError", DataError)

# numeric
SingleClass = _make("SingleClass", NumericError)
NoPositives = _make("NoPositives", NumericError)
OutOfRange = _make("OutOfRange", NumericError)
DegenerateSample = _make("DegenerateSample", NumericError)
ZeroExpected = _make("ZeroExpected", NumericError)
TooFewReplicates = _make("TooFewReplicates", NumericError)
