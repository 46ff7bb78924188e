"""Exception types shared across the engine."""


class InkpropError(Exception):
    """Base class for all engine errors."""


class AllLinePixels(InkpropError):
    """A frame contains no fillable pixel (everything is Black line)."""


class OrphanColorLine(InkpropError):
    """A color-line segment has no adjacent blank segment to merge into."""


class EmptyFrame(InkpropError):
    """A generated frame rasterized to background only."""


class DegenerateCrop(InkpropError):
    """A cropped frame contains no segments."""


class DimensionMismatch(InkpropError):
    """Two rasters/fields that must share dimensions do not."""


class MalformedFlowFile(InkpropError):
    """An external flow file failed validation."""


class MalformedFeatureFile(InkpropError):
    """An external semantic-feature file failed validation."""


class ShapeMismatch(InkpropError):
    """Tensor shapes are inconsistent for the requested operation."""


class NonFiniteEncountered(InkpropError):
    """A NaN or Inf appeared where finite values are required."""


class IndexOutOfRange(InkpropError):
    """A ground-truth or lookup index is outside its valid range."""


class EmptySegment(InkpropError):
    """A segment with zero pixels was encountered."""


class LengthMismatch(InkpropError):
    """Two aligned sequences have different lengths."""
