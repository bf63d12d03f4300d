"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GraffitiError(Exception):
    """Base class for every domain error raised by this package."""


# fileset -------------------------------------------------------------------

class GeometryError(GraffitiError, ValueError):
    pass


class EmptyInputError(GraffitiError, ValueError):
    pass


class IntegrityError(GraffitiError):
    pass


class IncompleteError(IntegrityError):
    def __init__(self, missing: list[int]):
        self.missing = sorted(missing)
        super().__init__(f"missing sub-pieces: {self.missing}")


class CorruptionError(IntegrityError):
    def __init__(self, ref, detail: str = "checksum mismatch"):
        self.ref = ref
        super().__init__(f"{detail} for sub-piece {ref.piece_index}/{ref.subpiece_index}")


# payload codec -------------------------------------------------------------

class PayloadError(GraffitiError):
    pass


class MarkerNotFoundError(PayloadError):
    pass


class TruncatedPayloadError(PayloadError):
    pass


class Base64FormatError(PayloadError):
    pass


class DecryptionError(PayloadError):
    pass


class ChecksumMismatchError(PayloadError):
    pass


# tracker -------------------------------------------------------------------

class TrackerError(GraffitiError):
    """A protocol refusal. ``code`` is the wire-level error_code string."""

    code = "TRACKER_ERROR"
    http_status = 400

    def __init__(self, message: str = "", code: str | None = None):
        if code is not None:
            self.code = code
        super().__init__(message or self.code)

    @property
    def message(self) -> str:
        return str(self)


class NotTrackedError(TrackerError):
    code = "NOT_TRACKED"
    http_status = 404


class StalePairError(TrackerError):
    code = "STALE_PAIR"
    http_status = 409


class DuplicateLocationError(TrackerError):
    code = "DUPLICATE_LOCATION"
    http_status = 409


class ThrottledError(TrackerError):
    code = "THROTTLED"
    http_status = 429


class BannedError(TrackerError):
    code = "BANNED"
    http_status = 403


class VerificationFailedError(TrackerError):
    code = "VERIFICATION_FAILED"
    http_status = 422


class FalseClaimError(TrackerError):
    code = "FALSE_CLAIM"
    http_status = 422


class TargetExhaustedError(TrackerError):
    code = "TARGET_EXHAUSTED"
    http_status = 409


class UnknownPeerError(TrackerError):
    code = "UNKNOWN_PEER"
    http_status = 404


ERROR_CODES = {
    cls.code: cls
    for cls in (
        NotTrackedError, StalePairError, DuplicateLocationError, ThrottledError,
        BannedError, VerificationFailedError, FalseClaimError, TargetExhaustedError,
        UnknownPeerError,
    )
}


class ProxyUnavailableError(GraffitiError):
    """The verification proxy itself could not be reached."""


# client --------------------------------------------------------------------

class PuzzleParseError(GraffitiError, ValueError):
    pass


class UploadRefusedError(GraffitiError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"upload refused: {reason}")


class UploadFailedError(GraffitiError):
    pass


class StarvationError(GraffitiError):
    """No live replica exists for one or more sub-pieces the client still needs."""

    def __init__(self, ordinals: list[int], progress: bytes):
        self.ordinals = sorted(ordinals)
        self.progress = progress
        super().__init__(f"starved on sub-pieces {self.ordinals}")
