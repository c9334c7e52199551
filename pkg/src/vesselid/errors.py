"""Exception types shared across the toolkit."""


class VesselIdError(Exception):
    """Base class for all toolkit errors."""


class EmptyCrop(VesselIdError):
    """Bounding box rounds to a zero-area pixel region."""


class InsufficientPixels(VesselIdError):
    """Too few contributing pixels to build a valid hue histogram."""


class BinMismatch(VesselIdError):
    """Histograms with different bin counts cannot be compared."""


class ImageTooSmall(VesselIdError):
    """Image is below the minimum size for keypoint detection."""


class PatternOutOfBounds(VesselIdError):
    """Rotated descriptor sampling pattern exits the image."""


class NoKeypoints(VesselIdError):
    """Match percentage is undefined without candidate keypoints."""


class NoFeatures(VesselIdError):
    """Feature extraction produced an empty set where one is required."""


class MalformedLine(VesselIdError):
    """Annotation line has the wrong field count or non-numeric fields."""


class OutOfRange(VesselIdError):
    """Annotation value lies outside the normalized [0, 1] range."""


class ProtocolError(VesselIdError):
    """Malformed wire message. Carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int = 0):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class InvalidRotation(VesselIdError):
    """Rotation matrix failed the orthonormality / determinant check."""


class NoIntersection(VesselIdError):
    """Ray is parallel to or pointing away from the target plane."""


class BelowPlane(VesselIdError):
    """Camera origin is at or below the target plane."""


class NoPose(VesselIdError):
    """No UAV pose within tolerance of the requested timestamp."""


class ConfigError(VesselIdError):
    """Configuration file is invalid or violates a cross-field constraint."""
