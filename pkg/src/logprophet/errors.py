"""Exception types raised across the pipeline."""


class LogProphetError(Exception):
    """Base class; carries an optional machine-readable code."""

    code = "ERROR"

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), **{k: v for k, v in self.context.items()}}


class EmptyMessage(LogProphetError):
    code = "EmptyMessage"


class EmptyCorpus(LogProphetError):
    code = "EmptyCorpus"


class ParseError(LogProphetError):
    code = "ParseError"

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        loc = f"{path or '<config>'}:{line}" if line is not None else (path or "")
        super().__init__(f"{loc}: {message}" if loc else message, line=line, path=path)
        self.line = line


class UnknownTemplate(LogProphetError):
    code = "UnknownTemplate"


class SpecError(LogProphetError):
    code = "SpecError"


class ScoreError(LogProphetError):
    code = "ScoreError"


class VersionMismatch(LogProphetError):
    code = "VersionMismatch"


class ConfigError(LogProphetError):
    code = "ConfigError"
