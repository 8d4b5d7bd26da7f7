"""Exception hierarchy shared across the toolkit."""


class EmbrichError(Exception):
    """Base class for all toolkit errors."""


# --- data ---------------------------------------------------------------

class SchemaMismatch(EmbrichError):
    """CSV header does not match the configured schema."""


class ParseError(EmbrichError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as numeric")


class EmptyClass(EmbrichError):
    """A class would vanish under sampling (reserved; min-1 rule prevents it)."""


class AllMissingColumn(EmbrichError):
    """A column has zero observed values, so no mode/mean exists."""


class UnknownPositiveLabel(EmbrichError):
    """positive_label does not occur among the targets."""


class MoreThanTwoClasses(EmbrichError):
    """Binary task configured but more than two distinct labels observed."""


class InvalidSpec(EmbrichError):
    """Synthetic dataset spec violates its preconditions."""


# --- embeddings ---------------------------------------------------------

class ServiceUnavailable(EmbrichError):
    """Remote embedding service failed after bounded retries."""


class DimensionMismatch(EmbrichError):
    """Remote service returned vectors of a different width than declared."""


class RemoteModelUnknown(EmbrichError):
    """Remote service does not know the requested model id."""


class CacheCorrupt(EmbrichError):
    """Embedding cache store holds an unreadable entry."""


# --- reduction ----------------------------------------------------------

class InvalidD(EmbrichError):
    """Requested component count is outside [1, min(n-1, D)]."""


class WidthMismatch(EmbrichError):
    """Matrix width differs from what the model was fitted on."""


class PerplexityTooLarge(EmbrichError):
    """Perplexity exceeds (n - 1) / 3."""


class TooFewPoints(EmbrichError):
    """t-SNE needs at least 8 points."""


# --- classifiers --------------------------------------------------------

class SingleClassTraining(EmbrichError):
    """Training labels contain a single class."""


# --- evaluation ---------------------------------------------------------

class TooFewSamples(EmbrichError):
    """Fewer samples than requested folds."""


class LengthMismatch(EmbrichError):
    """Paired inputs have different lengths."""


class DegenerateLabels(EmbrichError):
    """ROC curve requires both classes present."""


# --- ablation / reporting ----------------------------------------------

class RowCountMismatch(EmbrichError):
    """Feature blocks disagree on row count."""


class IncompleteReport(EmbrichError):
    """Report lacks the cells required for the requested aggregate."""


class MissingData(EmbrichError):
    """Chart spec references data absent from the bundle."""


class ConfigError(EmbrichError):
    """Run or dataset configuration is malformed."""
