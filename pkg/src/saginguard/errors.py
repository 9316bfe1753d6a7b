"""Exception types shared across pipeline stages.

The CLI maps these onto exit codes: configuration problems exit 2,
provider/transport failures exit 3, every other domain error exits 1.
"""


class PipelineError(Exception):
    """Base class for all domain errors raised by this package."""


class MalformedReport(PipelineError):
    """A detector report could not be parsed."""


class UnknownDetector(MalformedReport):
    """The report names a source outside the closed detector enumeration."""


class ProviderUnavailable(PipelineError):
    """A text-generation provider failed to serve a request."""


class EmptyCompletion(ProviderUnavailable):
    """A provider returned a blank completion."""


class ProbeFailed(ProviderUnavailable):
    """The twin provider did not answer the health probe; swap aborted."""


class UnparseableChoice(PipelineError):
    """Provider output named no option in a multiple-choice request."""


class MismatchedGroup(PipelineError):
    """Keyword summary and group ids disagree."""


class EmptyCorpus(PipelineError):
    """TF-IDF requested over zero documents."""


class InsufficientStratum(PipelineError):
    """A sampling stratum holds fewer members than the policy requires."""

    def __init__(self, stratum: str, needed: int, available: int):
        self.stratum = stratum
        self.needed = needed
        self.available = available
        super().__init__(
            f"stratum {stratum} has {available} members, policy needs {needed}"
        )


class DuplicateOptions(PipelineError):
    """A multiple-choice item has non-distinct options."""


class KeyMismatch(PipelineError):
    """Two reports cover different attack-kind key sets."""


class ConfigError(PipelineError):
    """The pipeline configuration file is invalid."""


class IoFailure(PipelineError):
    """A dataset export or import failed at the file level."""
