"""Exception hierarchy shared by every pipeline stage."""


class PipelineError(Exception):
    """Base class for all errors raised by course_sdg."""


class NetworkError(PipelineError):
    pass


class MalformedPageError(PipelineError):
    def __init__(self, message, page_index=None):
        self.page_index = page_index
        if page_index is not None:
            message = f"page {page_index}: {message}"
        super().__init__(message)


class MissingFieldError(PipelineError):
    pass


class EmptyLabelError(PipelineError):
    """No valid goal could be extracted from a response."""


class InvalidLabelError(PipelineError):
    pass


class UnknownCourseError(PipelineError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__("unknown course ids: " + ", ".join(self.ids))


class BackendError(PipelineError):
    """The labelling run cannot proceed at all (auth failure, bad endpoint)."""


class TooFewItemsError(PipelineError):
    pass


class EmptyVocabularyError(PipelineError):
    pass


class DivergenceError(PipelineError):
    pass


class LengthMismatchError(PipelineError):
    pass


class ConfigError(PipelineError):
    pass


class ModelFormatError(PipelineError):
    pass
