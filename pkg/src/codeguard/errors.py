"""Exception hierarchy shared across the toolkit."""


class CodeguardError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(CodeguardError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"malformed record at line {line_no}: {reason}")


class DuplicateId(CodeguardError):
    def __init__(self, sample_id: str):
        self.sample_id = sample_id
        super().__init__(f"duplicate sample id: {sample_id!r}")


class UnsupportedLanguage(CodeguardError):
    pass


class EmptyText(CodeguardError):
    pass


class DimensionMismatch(CodeguardError):
    pass


class NoCandidates(CodeguardError):
    pass


class DuplicateAscii(CodeguardError):
    pass


class AsciiHomoglyph(CodeguardError):
    pass


class BadCodepoint(CodeguardError):
    pass


class NoReplaceablePair(CodeguardError):
    pass


class InsufficientCandidates(CodeguardError):
    pass


class ProviderFailure(CodeguardError):
    pass


class ModelFailure(CodeguardError):
    def __init__(self, sample_id: str, reason: str = ""):
        self.sample_id = sample_id
        self.reason = reason
        super().__init__(f"model failure on sample {sample_id!r}: {reason}")


class EmptyProbeSet(CodeguardError):
    pass


class EmptyTable(CodeguardError):
    pass


class LengthMismatch(CodeguardError):
    pass


class EmptyCorpus(CodeguardError):
    pass


class DegenerateMatrix(CodeguardError):
    pass
