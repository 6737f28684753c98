"""Exception hierarchy shared by all voqual modules.

Every error carries a stable machine-parsable ``code`` so the CLI can emit
one-line ``error <code>: <message>`` diagnostics.
"""


class VoqualError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class LabelError(VoqualError):
    """Label-set ingestion or validation failure."""

    code = "label-error"


class AudioError(VoqualError):
    """Audio decoding, resampling, or normalization failure."""

    code = "audio-error"


class FeatureError(VoqualError):
    """Feature extraction or embedding-table failure."""

    code = "feature-error"


class ModelError(VoqualError):
    """Regression model fitting, prediction, or serialization failure."""

    code = "model-error"


class StatsError(VoqualError):
    """Agreement-statistics failure (degenerate matrix, zero variance...)."""

    code = "stats-error"


class ConfigError(VoqualError):
    """Experiment configuration failure."""

    code = "config-error"


class ServiceError(VoqualError):
    """Annotation-service request failure."""

    code = "service-error"

    def __init__(self, message, code=None, status=400):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.status = status
