"""Exception types shared across the simulation framework."""


class TacsimError(Exception):
    """Base class for all framework errors."""


class MeshLoadError(TacsimError):
    """Mesh file could not be parsed into a valid triangle mesh.

    ``byte_offset`` points at the position where parsing failed, when known.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class VolumeUnreachable(TacsimError):
    """Requested indentation volume exceeds what full gel-depth contact yields."""


class NoContact(TacsimError):
    """A positive target volume was requested but no ray intersects the mesh."""


class NoGraspContact(TacsimError):
    """A finger closing ray misses the object; the grasp cannot be planned."""


class InsufficientCoverage(TacsimError):
    """Calibration references leave too many lookup-table bins unpopulated."""
