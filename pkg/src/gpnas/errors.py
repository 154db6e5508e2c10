"""Exception types raised across the package."""


class GpnasError(Exception):
    """Base class for all package errors."""


# --- cell / architecture validation ---

class MalformedDocument(GpnasError):
    """Architecture document is not parseable or has bad field types."""


class NonUpperTriangular(GpnasError):
    """Adjacency matrix has an entry on or below the diagonal."""


class BadOpLabel(GpnasError):
    """Vertex label is not in the allowed operation vocabulary."""


class MissingInputOrOutput(GpnasError):
    """First/last vertex labels are not a unique input/output pair."""


class DisconnectedCell(GpnasError):
    """No path from the input vertex to the output vertex."""


class SamplingExhausted(GpnasError):
    """Random cell sampling failed to find a valid graph within the retry budget."""


class ChannelAllocationError(GpnasError):
    """More branches feed the output concatenation than there are channels."""


# --- forward engine ---

class EmptyWarmupBatch(GpnasError):
    """Batch-norm warmup called with zero samples."""


class ShapeMismatch(GpnasError):
    """Input tensor shape disagrees with the network plan."""


class NonFiniteActivation(GpnasError):
    """A forward pass produced inf or NaN activations."""


# --- GP inference ---

class SingularKernel(GpnasError):
    """Cholesky factorization of the regularized kernel failed."""


class InferenceFailed(GpnasError):
    """Every regularizer value in the sweep produced a singular system."""


# --- trainer ---

class DivergedLoss(GpnasError):
    """Training loss became non-finite."""


# --- metrics ---

class DegenerateRanking(GpnasError):
    """A rank-correlation denominator factor is zero (all-tied input)."""


class ZeroVariance(GpnasError):
    """Correlation requested for a constant score vector."""


class SingleClass(GpnasError):
    """Threshold splits the truth scores into a single class."""


class NonPositiveLatency(GpnasError):
    """Latency must be strictly positive."""


# --- screening ---

class MissingScores(GpnasError):
    """A pool entry lacks the score required by the operation."""


class RankDeficient(GpnasError):
    """Least-squares design matrix is not full rank."""


class Unfitted(GpnasError):
    """Model evaluated before fitting."""


# --- data ingestion ---

class TruncatedFile(GpnasError):
    """Binary batch file length is not a whole number of records."""


class LabelOutOfRange(GpnasError):
    """Record label byte exceeds the number of classes."""


class InsufficientClassSamples(GpnasError):
    """A class has too few samples for the requested balanced subset."""
